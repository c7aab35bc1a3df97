#include <iostream>

#include "rwscope/cli.hpp"

int main(int argc, char** argv) { return rwscope::cli::run(argc, argv, std::cout, std::cerr); }
