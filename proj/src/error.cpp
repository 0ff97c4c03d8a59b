#include "wavecomm/error.hpp"

namespace wavecomm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "configuration error";
    case ErrorKind::input: return "input error";
    case ErrorKind::decomposition_depth: return "decomposition-depth error";
    case ErrorKind::corrupt_decomposition: return "corrupt-decomposition error";
    case ErrorKind::heterogeneous_dataset: return "heterogeneous-dataset error";
    case ErrorKind::threshold_too_aggressive: return "threshold-too-aggressive error";
    case ErrorKind::degenerate_feature: return "degenerate-feature error";
    case ErrorKind::degenerate_geometry: return "degenerate-geometry error";
    case ErrorKind::invalid_affinity: return "invalid-affinity error";
    case ErrorKind::numerical: return "numerical error";
    case ErrorKind::insufficient_class: return "insufficient-class error";
    case ErrorKind::ingestion: return "ingestion error";
    case ErrorKind::corrupt_artifact: return "corrupt-artifact error";
    case ErrorKind::version_mismatch: return "version-mismatch error";
    case ErrorKind::missing_artifact: return "missing-artifact error";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

bool is_input_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::input:
    case ErrorKind::ingestion:
    case ErrorKind::insufficient_class:
    case ErrorKind::missing_artifact:
      return true;
    default:
      return false;
  }
}

std::string_view remediation_hint(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "check the command-line flags";
    case ErrorKind::input: return "check the input files and their shapes";
    case ErrorKind::decomposition_depth: return "lower --levels or raise --size";
    case ErrorKind::corrupt_decomposition: return "regenerate the decomposition with the same basis";
    case ErrorKind::heterogeneous_dataset: return "resize every image to a common --size";
    case ErrorKind::threshold_too_aggressive: return "lower the importance threshold or use --keep-top";
    case ErrorKind::degenerate_feature: return "remove constant images or keep more features";
    case ErrorKind::degenerate_geometry: return "the dataset needs at least two distinct images";
    case ErrorKind::invalid_affinity: return "regenerate the affinity matrix";
    case ErrorKind::numerical: return "try --metric euclidean or a different --seed";
    case ErrorKind::insufficient_class: return "provide labels for at least two classes";
    case ErrorKind::ingestion: return "check that the dataset path holds readable PNG, JPEG or BMP files";
    case ErrorKind::corrupt_artifact: return "re-run the stage that writes this file";
    case ErrorKind::version_mismatch: return "re-run the pipeline with this version";
    case ErrorKind::missing_artifact: return "run the earlier stages first (see `wavecomm detect`)";
    case ErrorKind::io: return "check permissions and free space in the run directory";
  }
  return "";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

Error Error::at_stage(std::string stage, std::string hint) const {
  std::string message = "[" + stage + "] " + std::string(to_string(kind_)) + ": " + what();
  if (!hint.empty()) message += " (hint: " + hint + ")";
  Error annotated(kind_, message);
  annotated.stage_ = std::move(stage);
  annotated.hint_ = std::move(hint);
  return annotated;
}

}  // namespace wavecomm
