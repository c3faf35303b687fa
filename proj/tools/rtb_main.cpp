#include <iostream>

#include "rtb/cli/cli.hpp"

int main(int argc, char** argv) { return rtb::cli::run_main(argc, argv, std::cout, std::cerr); }
