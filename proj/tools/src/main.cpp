#include <iostream>

#include "depthweave_cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return depthweave::cli::run(args, std::cout, std::cerr);
}
