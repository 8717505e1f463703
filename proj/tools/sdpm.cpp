#include <iostream>

#include "sdpm/cli.hpp"

int main(int argc, char** argv) { return sdpm::cli::run(argc, argv, std::cout, std::cerr); }
