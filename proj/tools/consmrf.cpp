#include <string>
#include <vector>

#include "consmrf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return consmrf::cli::run(args);
}
