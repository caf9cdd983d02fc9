#include <iostream>
#include <string>
#include <vector>

#include "sslforge_cli/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sslforge::cli::run_cli(args, std::cout, std::cerr);
}
