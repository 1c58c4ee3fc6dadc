#include <iostream>

#include "cesmarket/cli.hpp"

int main(int argc, char** argv) { return cesmarket::cli::run(argc, argv, std::cout, std::cerr); }
