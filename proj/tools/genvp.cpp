#include <string>
#include <vector>

#include "genvp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return genvp::run_cli(args, GENVP_DEFAULT_CONFIG);
}
