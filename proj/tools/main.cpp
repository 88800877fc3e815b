// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return comprnn::cli::run(args);
}
