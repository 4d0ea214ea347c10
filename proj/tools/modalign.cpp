#include <iostream>

#include "modalign/cli.hpp"

int main(int argc, char** argv) { return modalign::run_cli(argc, argv, std::cout, std::cerr); }
