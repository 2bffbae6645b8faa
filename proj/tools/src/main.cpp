#include <iostream>

#include "tpgm/cli.hpp"

int main(int argc, char** argv) { return tpgm::cli::run(argc, argv, std::cout, std::cerr); }
