#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gazeprobe/tensor.hpp"
#include "gazeprobe/vocab.hpp"

namespace gazeprobe::slm {

// Word-level language model: conditional distributions over the outcome
// vocabulary given a sentence prefix.
class WordModel {
 public:
  virtual ~WordModel() = default;

  virtual std::string kind() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  // Distribution over vocab() ids after `context` (may be empty).
  virtual Vector distribution(std::span<const std::string> context) const = 0;

  // log p(w_i | w_<i) for every word, in one pass where the model allows.
  virtual std::vector<double> sentence_logprobs(std::span<const std::string> words) const;

  // Out-of-vocabulary targets get the <unk> probability.
  double word_prob(std::span<const std::string> context, const std::string& target) const;

  // Writes `<path>` (JSON sidecar) and, for models with tensors, a GPTW1 file
  // next to it.
  virtual void save(const std::filesystem::path& path) const = 0;
};

// exp of the mean per-word negative log-likelihood.
double perplexity(const WordModel& model, const Corpus& corpus);

// Dispatches on the sidecar's "kind".
std::unique_ptr<WordModel> load_word_model(const std::filesystem::path& sidecar);

}  // namespace gazeprobe::slm
