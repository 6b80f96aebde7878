#include <iostream>
#include <string>
#include <vector>

#include "stepscope/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stepscope::cli::run_cli(args, std::cout, std::cerr);
}
