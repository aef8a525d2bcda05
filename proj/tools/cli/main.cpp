#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return urw::cli::run(argc, argv, std::cout, std::cerr); }
