// tools/cli.hpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>

namespace comoe {

// Entry point of the `comoe` command. Subcommands: gen-data, train, eval,
// flops, compare, grad-check. Returns 0 on success, 1 on invalid input
// (bad flags, configs, files), 2 on numerical failure (non-finite values,
// failed gradient check).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace comoe
