#include <iostream>
#include <string>
#include <vector>

#include "cadavae/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cadavae::cli::run(args, std::cout, std::cerr);
}
