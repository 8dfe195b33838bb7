#include <string>
#include <vector>

#include "locadv/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return locadv::run_cli(args);
}
