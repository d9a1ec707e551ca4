#include <iostream>

#include "longit/cli.hpp"

int main(int argc, char** argv) { return longit::cli::run(argc, argv, std::cout, std::cerr); }
