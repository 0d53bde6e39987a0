#include <iostream>

#include "mcaudit/cli.hpp"

int main(int argc, char** argv) { return mcaudit::cli::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
