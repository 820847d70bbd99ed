#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace fullface::cli {

struct Options {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  std::optional<std::string> variant;
  std::optional<int> jobs;
  std::optional<std::filesystem::path> model;  // importance: overrides [importance] model
};

int cmd_synth(const Options& o, std::ostream& log);
int cmd_normalize(const Options& o, std::ostream& log);
int cmd_train(const Options& o, std::ostream& log);
int cmd_eval(const Options& o, std::ostream& log);
int cmd_importance(const Options& o, std::ostream& log);
int cmd_gradcheck(const Options& o, std::ostream& log);

/// Parses arguments and dispatches. Exit codes: 0 success, 2 usage or
/// validation error, 1 runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fullface::cli
