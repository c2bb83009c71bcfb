#include <iostream>

#include "boatmatch/cli.hpp"

int main(int argc, char** argv) { return boatmatch::cli::run(argc, argv, std::cout, std::cerr); }
