#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace expertroute {

/// Inclusive n-gram length range. `lo == 0` disables the range.
struct NgramRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;

  bool disabled() const noexcept { return lo == 0; }
  bool operator==(const NgramRange&) const = default;
};

struct FeaturizerConfig {
  std::uint32_t dimension = 1u << 16;
  NgramRange word_ngrams{1, 2};
  NgramRange char_ngrams{3, 5};
  bool lowercase = true;

  /// Throws UsageError when dimension < 2 or a range is empty or inverted.
  void validate() const;
  bool operator==(const FeaturizerConfig&) const = default;
};

/// Sparse, L2-normalized hashed n-gram counts.
struct FeatureVector {
  std::uint32_t dimension = 0;
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;          // parallel to indices, all > 0

  bool empty() const noexcept { return indices.empty(); }
  bool operator==(const FeatureVector&) const = default;
};

/// Word n-grams (space-joined), shortest first, then character n-grams over
/// the whitespace-normalized text, prefixed with "c#". Characters are Unicode
/// code points. A disabled range contributes nothing.
std::vector<std::string> extract_ngrams(std::string_view text, NgramRange words, NgramRange chars);

FeatureVector featurize(const FeaturizerConfig& config, std::string_view text);

double dot(const FeatureVector& a, const FeatureVector& b) noexcept;

}  // namespace expertroute
