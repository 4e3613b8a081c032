#include <string>
#include <vector>

#include "varmod/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return varmod::cli::run(args);
}
