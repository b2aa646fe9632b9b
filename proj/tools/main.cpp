#include "ilms/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ilms::cli::run(argc, argv, std::cout, std::cerr); }
