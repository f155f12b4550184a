#include "expertroute/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "expertroute/error.hpp"
#include "expertroute/hash.hpp"
#include "expertroute/text.hpp"

namespace expertroute {

void FeaturizerConfig::validate() const {
  if (dimension < 2) throw UsageError("featurizer: dimension must be >= 2");
  for (const auto& range : {word_ngrams, char_ngrams}) {
    if (range.disabled() || range.lo > range.hi) {
      throw UsageError("featurizer: n-gram ranges must satisfy 1 <= lo <= hi");
    }
  }
}

std::vector<std::string> extract_ngrams(std::string_view text, NgramRange words, NgramRange chars) {
  const auto tokens = text::split_whitespace(text);
  std::vector<std::string> out;

  if (!words.disabled()) {
    for (std::size_t n = words.lo; n <= words.hi; ++n) {
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string gram = tokens[i];
        for (std::size_t j = i + 1; j < i + n; ++j) {
          gram.push_back(' ');
          gram += tokens[j];
        }
        out.push_back(std::move(gram));
      }
    }
  }

  if (!chars.disabled()) {
    std::u32string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i != 0) joined.push_back(U' ');
      joined += text::decode_utf8(tokens[i]);
    }
    for (std::size_t n = chars.lo; n <= chars.hi; ++n) {
      for (std::size_t i = 0; i + n <= joined.size(); ++i) {
        std::string gram = "c#";
        for (std::size_t j = i; j < i + n; ++j) text::append_utf8(gram, joined[j]);
        out.push_back(std::move(gram));
      }
    }
  }
  return out;
}

FeatureVector featurize(const FeaturizerConfig& config, std::string_view text) {
  FeatureVector fv;
  fv.dimension = config.dimension;
  const std::string folded = config.lowercase ? text::ascii_lower(text) : std::string(text);

  std::map<std::uint32_t, double> counts;
  for (const auto& gram : extract_ngrams(folded, config.word_ngrams, config.char_ngrams)) {
    counts[static_cast<std::uint32_t>(fnv1a64(gram) % config.dimension)] += 1.0;
  }
  if (counts.empty()) return fv;

  double norm_sq = 0.0;
  for (const auto& [idx, c] : counts) norm_sq += c * c;
  const double norm = std::sqrt(norm_sq);
  fv.indices.reserve(counts.size());
  fv.values.reserve(counts.size());
  for (const auto& [idx, c] : counts) {
    fv.indices.push_back(idx);
    fv.values.push_back(c / norm);
  }
  return fv;
}

double dot(const FeatureVector& a, const FeatureVector& b) noexcept {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (a.indices[i] > b.indices[j]) {
      ++j;
    } else {
      s += a.values[i++] * b.values[j++];
    }
  }
  return s;
}

}  // namespace expertroute
