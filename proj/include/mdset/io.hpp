#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mdset::io {

namespace fs = std::filesystem;

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

/// Canonical text of a config: nlohmann objects are key-sorted, so dump() is stable.
inline std::string canonical(const nlohmann::json& config) { return config.dump(); }
inline std::string config_hash(const nlohmann::json& config) { return sha256_hex(canonical(config)); }

/// Shortest decimal that round-trips; fixed formatting keeps outputs byte-stable across runs.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    std::string s = os.str();
    for (int p = 1; p < 17; ++p) {
        std::ostringstream t;
        t << std::setprecision(p) << v;
        if (std::stod(t.str()) == v) return t.str();
    }
    return s;
}

inline std::string csv_field(const std::string& f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

/// RFC 4180 table with LF line endings.  The last column carries the config hash.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& operator<<(const std::string& s) {
        rows_.back().push_back(s);
        return *this;
    }
    CsvTable& operator<<(const char* s) { return *this << std::string(s); }
    CsvTable& operator<<(double v) { return *this << fmt_double(v); }
    CsvTable& operator<<(bool v) { return *this << std::string(v ? "true" : "false"); }
    template <class I>
        requires std::is_integral_v<I>
    CsvTable& operator<<(I v) {
        return *this << std::to_string(v);
    }

    std::size_t size() const { return rows_.size(); }
    const std::vector<std::string>& header() const { return header_; }

    std::string render(const std::string& hash) const {
        std::string out;
        auto line = [&](const std::vector<std::string>& cells, const std::string& last) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                out += csv_field(cells[i]);
                out += ',';
            }
            out += csv_field(last);
            out += '\n';
        };
        line(header_, "config_sha256");
        for (const auto& r : rows_) {
            if (r.size() != header_.size()) throw std::logic_error("csv row width mismatch");
            line(r, hash);
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Splits RFC 4180 text into records.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> cur;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cur.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            cur.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(cur));
            cur.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted csv field");
    if (any) {
        cur.push_back(std::move(field));
        rows.push_back(std::move(cur));
    }
    return rows;
}

/// x, y pairs for one plot series.
using Series = std::vector<std::pair<double, double>>;

/// gnuplot-ready text: comment header, then whitespace-separated columns.
inline std::string render_series(const std::string& name, const std::string& xlabel, const std::string& ylabel,
                                 const Series& s, const std::string& hash) {
    std::string out = "# series " + name + "\n# config_sha256 " + hash + "\n# " + xlabel + " " + ylabel + "\n";
    for (const auto& [x, y] : s) out += fmt_double(x) + " " + fmt_double(y) + "\n";
    return out;
}

/// Plot data of one report: series name -> points, ordered by name.
struct PlotData {
    std::string xlabel = "x", ylabel = "y";
    std::map<std::string, Series> series;
};

inline std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? "series" : out;
}

/**
 * @brief Collects the artifacts of one run and writes them with embedded hashes.
 *
 * The summary JSON is written last and records the SHA-256 of every other file,
 * so verify_outputs can detect edits to any artifact.
 */
class RunWriter {
public:
    RunWriter(fs::path dir, std::string stem, nlohmann::json config)
        : dir_(std::move(dir)), stem_(std::move(stem)), config_(std::move(config)), hash_(config_hash(config_)) {}

    const std::string& hash() const { return hash_; }
    const nlohmann::json& config() const { return config_; }

    void csv(const std::string& suffix, const CsvTable& t) { put(stem_ + suffix + ".csv", t.render(hash_)); }

    /// One file per series; an empty report still gets a header-only file.
    void plot(const PlotData& p) {
        if (p.series.empty()) {
            put("plot/" + stem_ + ".dat", render_series(stem_, p.xlabel, p.ylabel, {}, hash_));
            return;
        }
        for (const auto& [name, s] : p.series)
            put("plot/" + stem_ + "_" + safe_name(name) + ".dat", render_series(name, p.xlabel, p.ylabel, s, hash_));
    }

    /// Writes every file and the summary; returns the summary path.
    fs::path finish(nlohmann::json summary) {
        fs::create_directories(dir_);
        nlohmann::json artifacts = nlohmann::json::object();
        for (const auto& [name, text] : files_) {
            fs::path p = dir_ / name;
            fs::create_directories(p.parent_path());
            write_file(p, text);
            artifacts[name] = sha256_hex(text);
        }
        nlohmann::json doc;
        doc["command"] = stem_;
        doc["config"] = config_;
        doc["config_sha256"] = hash_;
        doc["summary"] = std::move(summary);
        doc["artifacts"] = artifacts;
        fs::path out = dir_ / (stem_ + ".json");
        write_file(out, doc.dump(2) + "\n");
        return out;
    }

    static void write_file(const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << text;
        if (!f) throw std::runtime_error("write failed: " + p.string());
    }

private:
    void put(const std::string& name, std::string text) { files_[name] = std::move(text); }

    fs::path dir_;
    std::string stem_;
    nlohmann::json config_;
    std::string hash_;
    std::map<std::string, std::string> files_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

struct VerifyIssue {
    std::string file;
    std::string problem;
};

struct VerifyReport {
    std::size_t summaries = 0, artifacts = 0;
    std::vector<VerifyIssue> issues;
    bool ok() const { return issues.empty() && summaries > 0; }
};

/**
 * @brief Re-checks every summary JSON under dir: its config hash, each listed
 * artifact's content hash, and the hash embedded in each CSV row or plot header.
 */
inline VerifyReport verify_outputs(const fs::path& dir) {
    VerifyReport rep;
    if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
    std::vector<fs::path> jsons;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") jsons.push_back(e.path());
    std::sort(jsons.begin(), jsons.end());
    for (const auto& jp : jsons) {
        const std::string name = jp.filename().string();
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(jp));
        } catch (const std::exception& e) {
            rep.issues.push_back({name, std::string("unparsable json: ") + e.what()});
            continue;
        }
        if (!doc.is_object() || !doc.contains("config") || !doc.contains("config_sha256")) {
            rep.issues.push_back({name, "missing config or config_sha256"});
            continue;
        }
        ++rep.summaries;
        const std::string hash = doc["config_sha256"].get<std::string>();
        if (config_hash(doc["config"]) != hash) rep.issues.push_back({name, "config hash mismatch"});
        if (!doc.contains("artifacts")) continue;
        for (const auto& [art, sha] : doc["artifacts"].items()) {
            ++rep.artifacts;
            fs::path ap = dir / art;
            if (!fs::exists(ap)) {
                rep.issues.push_back({art, "missing artifact"});
                continue;
            }
            const std::string text = read_file(ap);
            if (sha256_hex(text) != sha.get<std::string>()) rep.issues.push_back({art, "content hash mismatch"});
            if (ap.extension() == ".csv") {
                auto rows = parse_csv(text);
                if (rows.empty() || rows[0].empty() || rows[0].back() != "config_sha256") {
                    rep.issues.push_back({art, "csv lacks config_sha256 column"});
                    continue;
                }
                for (std::size_t i = 1; i < rows.size(); ++i)
                    if (rows[i].size() != rows[0].size() || rows[i].back() != hash) {
                        rep.issues.push_back({art, "row " + std::to_string(i) + " hash or width mismatch"});
                        break;
                    }
            } else if (ap.extension() == ".dat") {
                if (text.find("# config_sha256 " + hash + "\n") == std::string::npos)
                    rep.issues.push_back({art, "plot header hash mismatch"});
            }
        }
    }
    if (rep.summaries == 0) rep.issues.push_back({dir.string(), "no summary json found"});
    return rep;
}

}  // namespace mdset::io
