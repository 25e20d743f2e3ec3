#include <iostream>
#include <string>
#include <vector>

#include "abase/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return abase::cli_main(args, std::cout, std::cerr);
}
