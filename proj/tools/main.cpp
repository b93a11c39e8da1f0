#include "gmr_cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gmr::cli::run(argc, argv, std::cout, std::cerr); }
