#include <string>
#include <vector>

#include "bnnood/cli.hpp"

int main(int argc, char** argv) {
  return bnnood::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
