#include "pals/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pals::run_cli(argc, argv, std::cout, std::cerr); }
