#include <iostream>
#include <string>
#include <vector>

#include "arr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return arr::cli::run(args, std::cout, std::cerr);
}
