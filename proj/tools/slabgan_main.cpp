#include <iostream>
#include <string>
#include <vector>

#include "slabgan/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return slabgan::cli::run(args, std::cout, std::cerr);
}
