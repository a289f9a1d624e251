// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cednn/cli.hpp"

int main(int argc, char** argv) {
  return cednn::run_command(std::vector<std::string>(argv + 1, argv + argc), std::cout,
                            std::cerr);
}
