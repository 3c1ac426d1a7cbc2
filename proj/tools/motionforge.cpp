#include <iostream>

#include "motionforge/cli.hpp"

int main(int argc, char** argv) { return motionforge::cli::run(argc, argv, std::cout, std::cerr); }
