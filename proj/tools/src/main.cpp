#include <iostream>

#include "ppsam_cli/commands.hpp"

int main(int argc, char** argv) { return ppsam::cli::run(argc, argv, std::cout, std::cerr); }
