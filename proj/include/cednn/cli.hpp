// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cednn {

/// Runs one `cednn` subcommand. `args` excludes the program name. Returns the
/// process exit status; diagnostics go to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace cednn
