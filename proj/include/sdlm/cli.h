// Copyright 2026 The SDLM Authors.
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

// Command-line front end: preprocess, synth, train and eval subcommands.

#ifndef SDLM_CLI_H_
#define SDLM_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace sdlm::cli {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr const char *kSeedEnv = "SDLM_SEED";

enum ExitCode { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

std::string Sha256Hex(std::string_view bytes);

// Whole-file IO; failures raise DataError naming the path.
std::string ReadFile(const std::string &path);
void WriteFile(const std::string &path, std::string_view bytes);

// Identifies the inputs of one run. Embedded in every artifact.
struct RunManifest {
  std::string command;  // arguments after the program name, space-joined
  std::string config;   // config or preprocessing-rules snapshot
  std::uint64_t seed = 0;
  std::string corpus_sha256;
  std::string checkpoint_sha256;  // eval only
  std::string version{kVersion};

  nlohmann::ordered_json ToJson() const;
  static RunManifest FromJson(const nlohmann::json &j);
};

// Runs one command line (args[0] is the program name) and returns the exit
// code: 0 success, 1 usage or configuration error, 2 data error, 3 numeric
// failure.
int Run(const std::vector<std::string> &args, std::ostream &out,
        std::ostream &err);

}  // namespace sdlm::cli

#endif  // SDLM_CLI_H_
