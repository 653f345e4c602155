#include "taskgrasp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return taskgrasp::cli::run(argc, argv, std::cout, std::cerr); }
