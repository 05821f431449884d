#include <iostream>

#include "pbcox/cli.hpp"

int main(int argc, char** argv) { return pbcox::run_cli(argc, argv, std::cout, std::cerr); }
