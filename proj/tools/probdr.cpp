#include "probdr/cli/commands.hpp"

#include <string>
#include <vector>

int main(int argc, char** argv) {
  return probdr::cli::run(std::vector<std::string>(argv, argv + argc));
}
