#include "tskit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return tskit::cli_main(argc, argv, std::cout, std::cerr);
}
