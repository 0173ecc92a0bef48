#include <iostream>

#include "gridflex/cli.hpp"

int main(int argc, char** argv) {
    return gridflex::run_cli(argc, argv, std::cout, std::cerr);
}
