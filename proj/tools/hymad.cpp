#include <iostream>

#include "hymad/cli.hpp"

int main(int argc, char** argv) {
  return hymad::cli::run(argc, argv, std::cout, std::cerr, hymad::cli::process_environment());
}
