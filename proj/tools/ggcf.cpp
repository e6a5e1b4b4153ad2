#include <iostream>

#include "ggcf/run.hpp"

int main(int argc, char** argv) { return ggcf::run_cli(argc, argv, std::cout, std::cerr); }
