#include <vector>

#include "recal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return recal::run_cli(args);
}
