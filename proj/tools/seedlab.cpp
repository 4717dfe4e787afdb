#include <iostream>

#include "seedlab/cli/cli.hpp"

int main(int argc, char** argv) { return seedlab::cli::run(argc, argv, std::cout, std::cerr); }
