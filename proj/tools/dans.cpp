#include <string>
#include <vector>

#include "dans/cli.hpp"

int main(int argc, char** argv) {
  dans::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return dans::run_cli(args);
}
