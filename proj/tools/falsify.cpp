#include <iostream>

#include "falsify/cli.hpp"

int main(int argc, char** argv) {
  return falsify::cli::run(argc, argv, std::cout, std::cerr);
}
