#pragma once

// Term-frequency features for clinical-letter style documents.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geocpet/error.hpp"
#include "geocpet/rng.hpp"

namespace geocpet {

using Tokens = std::vector<std::string>;

/// Lowercase ASCII alphanumeric runs of length >= 2, in order. Every other
/// byte (punctuation, whitespace, non-ASCII) separates tokens.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// Which part of a letter is counted.
enum class LetterMode {
  lists,  // only "Diagnosis List:", "Intervention List:", "Medication List:" lines
  raw,    // the whole text
};

namespace detail {

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

}  // namespace detail

/// Text to count for one letter. In lists mode, the bodies of the three list
/// lines are concatenated; a letter with none of them falls back to raw text.
inline std::string letter_document(std::string_view text, LetterMode mode) {
  if (mode == LetterMode::raw) return std::string(text);
  static constexpr std::string_view kHeaders[] = {"Diagnosis List:", "Intervention List:",
                                                  "Medication List:"};
  std::string out;
  bool found = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos) line.remove_prefix(first);
    for (auto h : kHeaders) {
      if (detail::starts_with_ci(line, h)) {
        out.append(line.substr(h.size()));
        out.push_back('\n');
        found = true;
      }
    }
    pos = nl + 1;
  }
  return found ? out : std::string(text);
}

/// Sorted unique terms. `fold_id` records which training split built it.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> sorted_terms, std::optional<int> fold_id)
      : terms_(std::move(sorted_terms)), fold_(fold_id) {
    id_ = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      index_.emplace(terms_[i], i);
      id_ = fnv1a(terms_[i].data(), terms_[i].size(), id_);
      id_ = fnv1a("\0", 1, id_);
    }
  }

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  std::optional<std::size_t> find(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::uint64_t id() const { return id_; }
  std::optional<int> fold_id() const { return fold_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t id_ = 0;
  std::optional<int> fold_;
};

/// Build from training documents only; terms sorted lexicographically.
inline Vocabulary build_vocabulary(const std::vector<Tokens>& docs,
                                   std::optional<int> fold_id = std::nullopt) {
  std::vector<std::string> terms;
  for (const auto& d : docs) terms.insert(terms.end(), d.begin(), d.end());
  if (terms.empty()) throw Error(Errc::empty_corpus, "no tokens in training documents");
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return Vocabulary(std::move(terms), fold_id);
}

/// Nonnegative term weights over one vocabulary.
struct TermVector {
  std::vector<double> values;
  std::uint64_t vocab_id = 0;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const TermVector&) const = default;
};

/// Counts of in-vocabulary tokens; unseen tokens are dropped.
inline TermVector vectorize(const Tokens& doc, const Vocabulary& vocab) {
  TermVector v{std::vector<double>(vocab.size(), 0.0), vocab.id()};
  for (const auto& tok : doc) {
    if (auto i = vocab.find(tok)) v.values[*i] += 1.0;
  }
  return v;
}

/// (1 - alpha) v1 + alpha v2, evaluated as v1 + alpha (v2 - v1) so that equal
/// inputs and alpha = 0 reproduce v1 bit for bit.
inline TermVector mix_term_vectors(const TermVector& v1, const TermVector& v2, double alpha) {
  if (v1.vocab_id != v2.vocab_id || v1.size() != v2.size()) {
    throw Error(Errc::vocabulary_mismatch, "term vectors come from different vocabularies");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::schema_error, "alpha outside [0, 1]");
  TermVector out{std::vector<double>(v1.size()), v1.vocab_id};
  for (std::size_t i = 0; i < v1.size(); ++i) {
    out.values[i] = v1.values[i] + alpha * (v2.values[i] - v1.values[i]);
  }
  return out;
}

}  // namespace geocpet
