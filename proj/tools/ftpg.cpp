#include <iostream>

#include "ftpg/cli.hpp"

int main(int argc, char** argv) { return ftpg::run_cli(argc, argv, std::cout, std::cerr); }
