#include <iostream>
#include <string>
#include <vector>

#include "qpmc/cli_io.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qpmc::run_cli(args, std::cout, std::cerr);
}
