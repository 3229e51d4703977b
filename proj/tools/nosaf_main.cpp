#include <string>
#include <vector>

#include "nosaf/cli.hpp"

int main(int argc, char** argv) {
  return nosaf::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
