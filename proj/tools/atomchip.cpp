#include <iostream>
#include <string>
#include <vector>

#include "atomchip/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return atomchip::cli::run(args, std::cout, std::cerr);
}
