#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return sacrf::run_cli(argc, argv, std::cout, std::cerr);
}
