#include <iostream>
#include <vector>

#include "crdp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return crdp::cli::run(std::move(args), std::cout, std::cerr);
}
