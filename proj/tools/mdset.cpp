#include <string>
#include <vector>

#include "mdset/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return mdset::cli::run(args);
}
