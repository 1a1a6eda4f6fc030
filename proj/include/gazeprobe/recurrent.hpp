#pragma once

#include <cstdint>
#include <map>
#include "json.hpp"
#include <optional>
#include <string>
#include <vector>

#include "gazeprobe/autodiff.hpp"
#include "gazeprobe/word_model.hpp"

namespace gazeprobe::slm {

enum class CellKind { RNN, GRU, LSTM };

std::string_view cell_kind_name(CellKind k);
std::optional<CellKind> parse_cell_kind(std::string_view name);

struct RecurrentConfig {
  CellKind kind = CellKind::LSTM;
  int embed = 64;
  int hidden = 128;
  int bptt = 32;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  int epochs = 5;
  std::uint64_t seed = 1;
  double init_scale = 0.1;
  VocabOptions vocab;
};

struct TrainStats {
  double initial_loss = 0.0;  // mean per-word NLL over the corpus before training
  double final_loss = 0.0;    // same, after training
  std::vector<double> epoch_loss;
  bool monotone = true;       // epoch_loss never increased
  std::size_t steps = 0;
  std::size_t saturated_gates = 0;  // sigmoid outputs that reached 0 or 1
};

class RecurrentModel : public WordModel {
 public:
  using Params = std::map<std::string, Matrix>;

  static RecurrentModel init(const RecurrentConfig& config, Vocabulary vocab);
  static RecurrentModel load(const std::filesystem::path& sidecar, const nlohmann::json& j);

  std::string kind() const override { return std::string(cell_kind_name(config_.kind)); }
  const Vocabulary& vocab() const override { return vocab_; }
  Vector distribution(std::span<const std::string> context) const override;
  std::vector<double> sentence_logprobs(std::span<const std::string> words) const override;
  void save(const std::filesystem::path& path) const override;

  const RecurrentConfig& config() const { return config_; }
  const Params& params() const { return params_; }
  Params& params() { return params_; }

  // Runs the cell over `inputs` from (h0, c0), or zeros, on `tape`. When
  // `targets` is non-empty, `loss` is the mean NLL of targets[t] given
  // inputs[0..t].
  struct Unroll {
    autodiff::Var loss;
    std::vector<autodiff::Var> logits;
    std::vector<autodiff::Var> hidden;
    std::vector<autodiff::Var> cell;
  };
  std::map<std::string, autodiff::Var> leaves(autodiff::Tape& tape, bool trainable) const;
  Unroll unroll(autodiff::Tape& tape, const std::map<std::string, autodiff::Var>& p,
                std::span<const std::size_t> inputs, std::span<const std::size_t> targets,
                const Matrix* h0 = nullptr, const Matrix* c0 = nullptr,
                std::size_t* saturated = nullptr) const;

  // Input ids ([bos, w1..]) and target ids ([w1.., eos?]) for one sentence.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> sequence(std::span<const std::string> words) const;

 private:
  RecurrentConfig config_;
  Vocabulary vocab_;
  Params params_;
};

// Truncated BPTT with gradient-norm clipping and Adam. Deterministic for a
// fixed seed. Throws NumericError naming the epoch and step on divergence.
RecurrentModel train_recurrent(const RecurrentConfig& config, const Corpus& corpus, TrainStats* stats = nullptr);

}  // namespace gazeprobe::slm
