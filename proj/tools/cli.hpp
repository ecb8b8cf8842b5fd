// Copyright 2026 The softprompt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. run() is the whole program minus process plumbing
// so tests can drive it in-process.

#ifndef SOFTPROMPT_TOOLS_CLI_HPP_
#define SOFTPROMPT_TOOLS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace softprompt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Expands "a,b,...,c" into the arithmetic progression a, b, ..., c; plain
// comma lists pass through.
std::vector<std::string> expand_values(const std::string& list);

}  // namespace softprompt::cli

#endif  // SOFTPROMPT_TOOLS_CLI_HPP_
