#include <iostream>

#include "cflow/cli/commands.hpp"

int main(int argc, char** argv) { return cflow::dispatch(argc, argv, std::cout, std::cerr); }
