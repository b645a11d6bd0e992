#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "llmpoet/config.hpp"
#include "llmpoet/llm_client.hpp"

namespace llmpoet::cli {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

struct Hooks {
  /// Replaces the HTTP client for --generator llm (tests inject canned
  /// completions here).
  std::function<std::unique_ptr<llm::TextCompleter>(const RunConfig&)> make_client;
};

/// The `llmpoet` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks = {});

}  // namespace llmpoet::cli
