#include <iostream>

#include "rbcssl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rbc::run_cli(args, std::cout, std::cerr);
}
