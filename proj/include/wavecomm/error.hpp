#pragma once

#include <filesystem>
#include <new>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace wavecomm {

enum class ErrorKind {
  config,
  input,
  decomposition_depth,
  corrupt_decomposition,
  heterogeneous_dataset,
  threshold_too_aggressive,
  degenerate_feature,
  degenerate_geometry,
  invalid_affinity,
  numerical,
  insufficient_class,
  ingestion,
  corrupt_artifact,
  version_mismatch,
  missing_artifact,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Input errors map to CLI exit code 2; everything else is a stage failure (1).
bool is_input_error(ErrorKind kind) noexcept;

// Default remediation advice for an error kind.
std::string_view remediation_hint(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }
  const std::string& hint() const noexcept { return hint_; }

  // Copy of this error whose message is prefixed with the pipeline stage.
  Error at_stage(std::string stage, std::string hint) const;

 private:
  ErrorKind kind_;
  std::string stage_;
  std::string hint_;
};

// Runs fn(), tagging any error that escapes with the stage name and the default
// hint for its kind. Already-tagged errors pass through unchanged.
template <class Fn>
decltype(auto) run_stage(std::string_view stage, Fn&& fn) {
  try {
    return std::forward<Fn>(fn)();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.at_stage(std::string(stage), std::string(remediation_hint(e.kind())));
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorKind::io, e.what()).at_stage(std::string(stage), std::string(remediation_hint(ErrorKind::io)));
  } catch (const std::bad_alloc&) {
    throw Error(ErrorKind::numerical, "out of memory")
        .at_stage(std::string(stage), "reduce --size or the number of images");
  }
}

}  // namespace wavecomm
