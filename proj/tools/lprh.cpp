#include <iostream>

#include "lprh/cli.hpp"

int main(int argc, char** argv) { return lprh::cli::run_cli(argc, argv, std::cout, std::cerr); }
