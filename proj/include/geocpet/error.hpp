#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geocpet {

/// Error categories raised by the library. Each maps to one CLI exit class.
enum class Errc {
  non_symmetric,
  no_convergence,
  not_positive_definite,
  dimension_mismatch,
  empty_input,
  degenerate_window,
  no_peaks_found,
  empty_corpus,
  vocabulary_mismatch,
  class_too_small,
  schema_error,
  missing_file,
  scaler_not_fitted,
  missing_target,
  singular_system,
  single_class,
  degenerate_target,
  insufficient_samples,
  degenerate_input,
  leakage,
  io_error,
  config_error,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::non_symmetric: return "NonSymmetric";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::empty_input: return "EmptyInput";
    case Errc::degenerate_window: return "DegenerateWindow";
    case Errc::no_peaks_found: return "NoPeaksFound";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::vocabulary_mismatch: return "VocabularyMismatch";
    case Errc::class_too_small: return "ClassTooSmall";
    case Errc::schema_error: return "SchemaError";
    case Errc::missing_file: return "MissingFile";
    case Errc::scaler_not_fitted: return "ScalerNotFitted";
    case Errc::missing_target: return "MissingTarget";
    case Errc::singular_system: return "SingularSystem";
    case Errc::single_class: return "SingleClass";
    case Errc::degenerate_target: return "DegenerateTarget";
    case Errc::insufficient_samples: return "InsufficientSamples";
    case Errc::degenerate_input: return "DegenerateInput";
    case Errc::leakage: return "Leakage";
    case Errc::io_error: return "IoError";
    case Errc::config_error: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// True for errors produced by numerical routines (solvers, matrix functions).
constexpr bool is_numerical(Errc c) {
  switch (c) {
    case Errc::non_symmetric:
    case Errc::no_convergence:
    case Errc::not_positive_definite:
    case Errc::singular_system:
    case Errc::degenerate_target:
    case Errc::degenerate_input:
      return true;
    default:
      return false;
  }
}

}  // namespace geocpet
