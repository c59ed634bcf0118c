// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "t1moco/cli.hpp"

int main(int argc, char **argv) {
  return t1moco::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
