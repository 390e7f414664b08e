#include <iostream>

#include "coalgp/cli.hpp"

int main(int argc, char** argv) { return coalgp::cli::run_cli(argc, argv, std::cout, std::cerr); }
