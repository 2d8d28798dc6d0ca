#include <iostream>
#include <string>
#include <vector>

#include "fairmargin/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return fairmargin::cli::run(args, std::cout, std::cerr);
}
