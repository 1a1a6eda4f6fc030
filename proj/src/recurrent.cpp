#include "gazeprobe/recurrent.hpp"

#include <cmath>
#include <fstream>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/gptw.hpp"
#include "gazeprobe/random.hpp"

namespace gazeprobe::slm {

namespace ad = autodiff;

std::string_view cell_kind_name(CellKind k) {
  switch (k) {
    case CellKind::RNN: return "rnn";
    case CellKind::GRU: return "gru";
    case CellKind::LSTM: return "lstm";
  }
  return "?";
}

std::optional<CellKind> parse_cell_kind(std::string_view name) {
  for (auto k : {CellKind::RNN, CellKind::GRU, CellKind::LSTM}) {
    if (cell_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

std::vector<std::string> gate_names(CellKind k) {
  switch (k) {
    case CellKind::RNN: return {""};
    case CellKind::GRU: return {"z", "r", "n"};
    case CellKind::LSTM: return {"i", "f", "o", "g"};
  }
  return {};
}

std::string prefix(CellKind k) { return std::string(cell_kind_name(k)) + "."; }

void validate(const RecurrentConfig& c) {
  if (c.embed <= 0 || c.hidden <= 0 || c.bptt <= 0 || c.epochs < 0) {
    throw DataError("recurrent: dimensions, bptt length and epochs must be positive");
  }
  if (!(c.learning_rate > 0.0) || !(c.clip_norm > 0.0)) {
    throw DataError("recurrent: learning rate and clip norm must be positive");
  }
}

nlohmann::json config_json(const RecurrentConfig& c) {
  return {{"embed", c.embed},         {"hidden", c.hidden},     {"bptt", c.bptt},
          {"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm}, {"epochs", c.epochs},
          {"seed", c.seed},           {"init_scale", c.init_scale}};
}

// Sigmoid outputs must stay strictly inside (0, 1).
std::size_t count_saturated(const Matrix& gate) {
  return static_cast<std::size_t>((gate.array() <= 0.0 || gate.array() >= 1.0).count());
}

}  // namespace

RecurrentModel RecurrentModel::init(const RecurrentConfig& config, Vocabulary vocab) {
  validate(config);
  RecurrentModel m;
  m.config_ = config;
  m.vocab_ = std::move(vocab);
  m.config_.vocab = m.vocab_.options();
  Rng rng(config.seed);
  const double s = config.init_scale;
  const auto V = static_cast<Eigen::Index>(m.vocab_.size());
  const Eigen::Index E = config.embed, H = config.hidden;
  m.params_["embedding"] = rng.uniform_matrix(V + 1, E, -s, s);
  const std::string p = prefix(config.kind);
  for (const auto& g : gate_names(config.kind)) {
    const std::string suffix = g.empty() ? "" : "_" + g;
    m.params_[p + "W" + suffix] = rng.uniform_matrix(E, H, -s, s);
    m.params_[p + "U" + suffix] = rng.uniform_matrix(H, H, -s, s);
    m.params_[p + "b" + suffix] = Matrix::Zero(1, H);
  }
  m.params_["out.W"] = rng.uniform_matrix(H, V, -s, s);
  m.params_["out.b"] = Matrix::Zero(1, V);
  return m;
}

std::map<std::string, ad::Var> RecurrentModel::leaves(ad::Tape& tape, bool trainable) const {
  std::map<std::string, ad::Var> out;
  for (const auto& [name, value] : params_) out.emplace(name, trainable ? tape.leaf(value) : tape.constant(value));
  return out;
}

RecurrentModel::Unroll RecurrentModel::unroll(ad::Tape& tape, const std::map<std::string, ad::Var>& p,
                                              std::span<const std::size_t> inputs,
                                              std::span<const std::size_t> targets, const Matrix* h0,
                                              const Matrix* c0, std::size_t* saturated) const {
  if (!targets.empty() && targets.size() != inputs.size()) {
    throw ShapeError("unroll: inputs and targets differ in length");
  }
  const Eigen::Index H = config_.hidden;
  const std::string pre = prefix(config_.kind);
  auto param = [&](const std::string& name) { return p.at(name); };
  auto gate_pre = [&](ad::Var x, ad::Var h, const std::string& g) {
    const std::string suffix = g.empty() ? "" : "_" + g;
    return ad::add_row(ad::add(ad::matmul(x, param(pre + "W" + suffix)), ad::matmul(h, param(pre + "U" + suffix))),
                       param(pre + "b" + suffix));
  };
  auto gate = [&](ad::Var x, ad::Var h, const std::string& g) {
    ad::Var out = ad::sigmoid(gate_pre(x, h, g));
    if (saturated) *saturated += count_saturated(out.value());
    return out;
  };

  Unroll u;
  ad::Var h = tape.constant(h0 ? *h0 : Matrix::Zero(1, H));
  ad::Var c = tape.constant(c0 ? *c0 : Matrix::Zero(1, H));
  ad::Var loss_sum;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t id = inputs[t];
    ad::Var x = ad::gather_rows(param("embedding"), std::span(&id, 1));
    switch (config_.kind) {
      case CellKind::RNN:
        h = ad::tanh(gate_pre(x, h, ""));
        break;
      case CellKind::GRU: {
        ad::Var z = gate(x, h, "z");
        ad::Var r = gate(x, h, "r");
        ad::Var n = ad::tanh(ad::add_row(
            ad::add(ad::matmul(x, param(pre + "W_n")), ad::matmul(ad::hadamard(r, h), param(pre + "U_n"))),
            param(pre + "b_n")));
        h = ad::add(ad::hadamard(ad::one_minus(z), n), ad::hadamard(z, h));
        break;
      }
      case CellKind::LSTM: {
        ad::Var i = gate(x, h, "i");
        ad::Var f = gate(x, h, "f");
        ad::Var o = gate(x, h, "o");
        ad::Var g = ad::tanh(gate_pre(x, h, "g"));
        c = ad::add(ad::hadamard(f, c), ad::hadamard(i, g));
        h = ad::hadamard(o, ad::tanh(c));
        break;
      }
    }
    u.hidden.push_back(h);
    u.cell.push_back(c);
    ad::Var logits = ad::add_row(ad::matmul(h, param("out.W")), param("out.b"));
    u.logits.push_back(logits);
    if (!targets.empty()) {
      ad::Var nll = ad::cross_entropy(logits, targets.subspan(t, 1));
      loss_sum = t == 0 ? nll : ad::add(loss_sum, nll);
    }
  }
  if (!targets.empty()) u.loss = ad::scale(loss_sum, 1.0 / static_cast<double>(targets.size()));
  return u;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> RecurrentModel::sequence(
    std::span<const std::string> words) const {
  std::vector<std::size_t> inputs{vocab_.bos()};
  std::vector<std::size_t> targets = vocab_.ids(words);
  if (const auto eos = vocab_.eos()) targets.push_back(*eos);
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  return {std::move(inputs), std::move(targets)};
}

Vector RecurrentModel::distribution(std::span<const std::string> context) const {
  ad::Tape tape;
  const auto p = leaves(tape, false);
  std::vector<std::size_t> inputs{vocab_.bos()};
  const auto ids = vocab_.ids(context);
  inputs.insert(inputs.end(), ids.begin(), ids.end());
  const Unroll u = unroll(tape, p, inputs, {});
  return tensor::softmax_rows(u.logits.back().value()).row(0).transpose();
}

std::vector<double> RecurrentModel::sentence_logprobs(std::span<const std::string> words) const {
  if (words.empty()) return {};
  ad::Tape tape;
  const auto p = leaves(tape, false);
  auto [inputs, targets] = sequence(words);
  const Unroll u = unroll(tape, p, inputs, {});
  std::vector<double> out;
  out.reserve(words.size());
  for (std::size_t t = 0; t < words.size(); ++t) {
    const Matrix lp = tensor::log_softmax_rows(u.logits[t].value());
    out.push_back(lp(0, static_cast<Eigen::Index>(targets[t])));
  }
  return out;
}

void RecurrentModel::save(const std::filesystem::path& path) const {
  std::filesystem::path weights = path;
  weights.replace_extension(".gptw");
  std::vector<gptw::NamedTensor> tensors;
  for (const auto& [name, value] : params_) tensors.push_back({name, Tensor(value)});
  gptw::write(weights, tensors);
  const nlohmann::json j = {{"kind", cell_kind_name(config_.kind)},
                            {"config", config_json(config_)},
                            {"vocab", vocab_.to_json()},
                            {"weights", weights.filename().string()}};
  std::ofstream f(path);
  if (!f) throw ModelError("cannot write " + path.string());
  f << j.dump(1) << '\n';
}

RecurrentModel RecurrentModel::load(const std::filesystem::path& sidecar, const nlohmann::json& j) {
  RecurrentConfig cfg;
  Vocabulary vocab;
  std::filesystem::path weights;
  try {
    cfg.kind = parse_cell_kind(j.at("kind").get<std::string>()).value();
    const auto& c = j.at("config");
    cfg.embed = c.at("embed").get<int>();
    cfg.hidden = c.at("hidden").get<int>();
    cfg.bptt = c.at("bptt").get<int>();
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.clip_norm = c.at("clip_norm").get<double>();
    cfg.epochs = c.at("epochs").get<int>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.init_scale = c.at("init_scale").get<double>();
    vocab = Vocabulary::from_json(j.at("vocab"));
    weights = sidecar.parent_path() / j.at("weights").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(sidecar.string() + ": " + e.what());
  }
  RecurrentModel m = init(cfg, std::move(vocab));
  std::map<std::string, Matrix> loaded;
  for (const auto& t : gptw::read(weights)) loaded.emplace(t.name, t.tensor.as_matrix());
  for (auto& [name, value] : m.params_) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) throw ModelError(weights.string() + ": missing tensor " + name);
    if (it->second.rows() != value.rows() || it->second.cols() != value.cols()) {
      throw ModelError(weights.string() + ": tensor " + name + " has the wrong shape");
    }
    value = it->second;
    loaded.erase(it);
  }
  if (!loaded.empty()) throw ModelError(weights.string() + ": unexpected tensor " + loaded.begin()->first);
  return m;
}

namespace {

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::map<std::string, Matrix> m, v;

  void step(RecurrentModel::Params& params, const std::map<std::string, Matrix>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, value] : params) {
      const Matrix& g = grads.at(name);
      auto [mi, fresh_m] = m.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
      auto [vi, fresh_v] = v.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
      mi->second = beta1 * mi->second + (1.0 - beta1) * g;
      vi->second = beta2 * vi->second + (1.0 - beta2) * g.cwiseProduct(g);
      value.array() -= lr * (mi->second.array() / c1) / ((vi->second.array() / c2).sqrt() + eps);
    }
  }
};

double mean_nll(const RecurrentModel& model, const Corpus& corpus) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& s : corpus) {
    ad::Tape tape;
    const auto p = model.leaves(tape, false);
    auto [inputs, targets] = model.sequence(s);
    const auto u = model.unroll(tape, p, inputs, targets);
    nll += u.loss.value()(0, 0) * static_cast<double>(targets.size());
    count += targets.size();
  }
  return nll / static_cast<double>(count);
}

}  // namespace

RecurrentModel train_recurrent(const RecurrentConfig& config, const Corpus& corpus, TrainStats* stats) {
  if (corpus.empty()) throw DataError("recurrent: empty corpus");
  RecurrentModel model = RecurrentModel::init(config, Vocabulary::build(corpus, config.vocab));
  TrainStats local;
  TrainStats& st = stats ? *stats : local;
  st = TrainStats{};
  st.initial_loss = mean_nll(model, corpus);

  Adam adam;
  adam.lr = config.learning_rate;
  Rng order_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bptt = static_cast<std::size_t>(config.bptt);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t si : order) {
      auto [inputs, targets] = model.sequence(corpus[si]);
      Matrix h_carry = Matrix::Zero(1, config.hidden);
      Matrix c_carry = Matrix::Zero(1, config.hidden);
      for (std::size_t start = 0; start < inputs.size(); start += bptt) {
        const std::size_t len = std::min(bptt, inputs.size() - start);
        ++st.steps;
        try {
          ad::Tape tape;
          const auto p = model.leaves(tape, true);
          const auto u = model.unroll(tape, p, std::span(inputs).subspan(start, len),
                                      std::span(targets).subspan(start, len), &h_carry, &c_carry,
                                      &st.saturated_gates);
          tape.backward(u.loss);
          std::map<std::string, Matrix> grads;
          double sq = 0.0;
          for (const auto& [name, var] : p) {
            grads.emplace(name, var.grad());
            sq += var.grad().squaredNorm();
          }
          const double norm = std::sqrt(sq);
          if (!std::isfinite(norm)) throw NumericError("non-finite gradient");
          if (norm > config.clip_norm) {
            for (auto& [_, g] : grads) g *= config.clip_norm / norm;
          }
          adam.step(model.params(), grads);
          for (const auto& [name, value] : model.params()) tensor::check_finite(value, name);
          epoch_nll += u.loss.value()(0, 0) * static_cast<double>(len);
          epoch_tokens += len;
          h_carry = u.hidden.back().value();
          c_carry = u.cell.back().value();
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(st.steps) + ": " + e.what());
        }
      }
    }
    const double loss = epoch_nll / static_cast<double>(epoch_tokens);
    if (!st.epoch_loss.empty() && loss > st.epoch_loss.back()) st.monotone = false;
    st.epoch_loss.push_back(loss);
  }
  st.final_loss = mean_nll(model, corpus);
  return model;
}

}  // namespace gazeprobe::slm
