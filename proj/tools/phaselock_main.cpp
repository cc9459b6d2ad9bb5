#include <iostream>

#include "phaselock/cli.hpp"

int main(int argc, char** argv) { return phaselock::cli::main(argc, argv, std::cout, std::cerr); }
