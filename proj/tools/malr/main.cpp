#include "malr/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return malr::cli::run(argc, argv, std::cout, std::cerr, std::cin); }
