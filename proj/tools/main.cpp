#include "hfda/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hfda::cli::run(argc, argv, std::cout, std::cerr); }
