#include <vector>

#include "meshfield/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return meshfield::cli::run_cli(args);
}
