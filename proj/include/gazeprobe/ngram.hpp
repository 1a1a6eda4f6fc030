#pragma once

#include <cstdint>
#include <map>
#include "json.hpp"
#include <vector>

#include "gazeprobe/word_model.hpp"

namespace gazeprobe::slm {

struct NGramConfig {
  int order = 3;
  double k = 0.1;
  // Interpolation weights for orders 1..n; empty means equal weights.
  std::vector<double> lambdas;
  VocabOptions vocab;
};

// Interpolated add-k n-gram model:
//   p(w | h) = sum_i lambda_i * (c(h_i w) + k) / (c(h_i) + k V)
// where h_i is the last i-1 words of the history (padded with <s>) and V is
// the outcome vocabulary size.
class NGramModel : public WordModel {
 public:
  using Key = std::vector<std::size_t>;

  static NGramModel train(const Corpus& corpus, const NGramConfig& config);

  std::string kind() const override { return "ngram"; }
  const Vocabulary& vocab() const override { return vocab_; }
  Vector distribution(std::span<const std::string> context) const override;
  std::vector<double> sentence_logprobs(std::span<const std::string> words) const override;
  void save(const std::filesystem::path& path) const override;

  // Add-k estimate of a single order (1..n) for the last order-1 ids of `history`.
  double component_prob(int order, std::span<const std::size_t> history, std::size_t word) const;
  // Interpolated probability; `history` is the full id prefix, without padding.
  double prob(std::span<const std::size_t> history, std::size_t word) const;

  // Count of an n-gram of any order 1..n, ids in text order.
  std::uint64_t count(const Key& gram) const;
  const std::vector<std::map<Key, std::uint64_t>>& counts() const { return counts_; }
  const NGramConfig& config() const { return config_; }

  nlohmann::json to_json() const;
  static NGramModel from_json(const nlohmann::json& j);

 private:
  void finalize();
  Key padded_history(std::span<const std::size_t> history, int order) const;

  NGramConfig config_;
  Vocabulary vocab_;
  std::vector<std::map<Key, std::uint64_t>> counts_;          // [order-1]
  std::vector<std::map<Key, std::uint64_t>> history_counts_;  // [order-1], key length order-1
  std::uint64_t total_words_ = 0;
};

}  // namespace gazeprobe::slm
