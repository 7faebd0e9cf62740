#include "lossmix/cli.hpp"

int main(int argc, char** argv) {
  return lossmix::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
