#include <iostream>

#include "evenpad_cli.hpp"

int main(int argc, char** argv) { return evenpad::cli::run(argc, argv, std::cout, std::cerr); }
