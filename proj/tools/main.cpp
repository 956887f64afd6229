#include <string>
#include <vector>

#include "mricolor/cli.hpp"

int main(int argc, char** argv) {
  return mricolor::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
