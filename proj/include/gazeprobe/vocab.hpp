#pragma once

#include <filesystem>
#include "json.hpp"
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gazeprobe::slm {

// Whitespace-tokenized sentences, one per line of a text file.
using Corpus = std::vector<std::vector<std::string>>;

Corpus read_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view text);

struct VocabOptions {
  int min_freq = 2;
  bool lowercase = true;
  // Strip leading/trailing punctuation ("world." -> "world") unless nothing is left.
  bool strip_punct = true;
  // Predict an end-of-sentence symbol after the last word.
  bool use_eos = false;
};

// Outcome ids: 0 = <unk>, then words in lexicographic order, then </s> when
// enabled. The begin-of-sentence symbol only conditions and gets id size().
class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";

  Vocabulary() = default;
  static Vocabulary build(const Corpus& corpus, const VocabOptions& opts);

  std::string normalize(std::string_view word) const;
  // Normalizes first; unknown words map to unk().
  std::size_t id(std::string_view word) const;
  std::vector<std::size_t> ids(std::span<const std::string> words) const;
  const std::string& word(std::size_t id) const;

  std::size_t size() const { return words_.size(); }
  std::size_t unk() const { return 0; }
  std::size_t bos() const { return words_.size(); }
  std::optional<std::size_t> eos() const;
  const VocabOptions& options() const { return opts_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  void index();

  VocabOptions opts_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace gazeprobe::slm
