#include <iostream>
#include <string>
#include <vector>

#include "cbgt/cli/commands.hpp"

int main(int argc, char** argv) {
  return cbgt::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
