#include <iostream>
#include <string>
#include <vector>

#include "exmatrix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return exmatrix::run_cli(args, std::cout, std::cerr);
}
