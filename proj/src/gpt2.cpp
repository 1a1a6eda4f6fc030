#include "gazeprobe/gpt2.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <regex>
#include <set>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/random.hpp"

namespace gazeprobe::gpt2 {
namespace {

constexpr int kGpt2HeadDim = 64;

std::string strip_prefix(const std::string& name) {
  static const std::string prefix = "transformer.";
  return name.starts_with(prefix) ? name.substr(prefix.size()) : name;
}

class TensorTable {
 public:
  explicit TensorTable(const std::vector<gptw::NamedTensor>& tensors) {
    for (const auto& t : tensors) {
      const std::string name = strip_prefix(t.name);
      if (!table_.emplace(name, &t.tensor).second) throw ModelError("duplicate tensor " + t.name);
    }
  }

  const Tensor& take(const std::string& name) {
    const auto it = table_.find(name);
    if (it == table_.end()) throw ModelError("missing tensor " + name);
    used_.insert(name);
    return *it->second;
  }

  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) {
    const Tensor& t = take(name);
    if (t.shape() != std::vector<std::size_t>{rows, cols}) {
      throw ModelError("tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                       shape_string({rows, cols}));
    }
    return t.as_matrix();
  }

  RowVector vector(const std::string& name, std::size_t len) {
    const Tensor& t = take(name);
    if (t.shape() != std::vector<std::size_t>{len}) {
      throw ModelError("tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                       shape_string({len}));
    }
    return t.as_matrix().row(0);
  }

  std::optional<double> meta(const std::string& name) {
    const auto it = table_.find(name);
    if (it == table_.end()) return std::nullopt;
    used_.insert(name);
    if (it->second->size() != 1) throw ModelError("meta tensor " + name + " must hold one value");
    return it->second->data()[0];
  }

  const std::map<std::string, const Tensor*>& all() const { return table_; }
  const std::set<std::string>& used() const { return used_; }

 private:
  std::map<std::string, const Tensor*> table_;
  std::set<std::string> used_;
};

}  // namespace

Model Model::from_tensors(const std::vector<gptw::NamedTensor>& tensors, const LoadOptions& opts) {
  TensorTable table(tensors);
  Model m;
  ModelConfig& cfg = m.config_;

  const Tensor& wte = table.take("wte.weight");
  const Tensor& wpe = table.take("wpe.weight");
  if (wte.rank() != 2) throw ModelError("tensor wte.weight must be rank 2");
  if (wpe.rank() != 2) throw ModelError("tensor wpe.weight must be rank 2");
  cfg.vocab_size = static_cast<int>(wte.shape()[0]);
  cfg.d_model = static_cast<int>(wte.shape()[1]);
  cfg.max_positions = static_cast<int>(wpe.shape()[0]);
  if (wpe.shape()[1] != wte.shape()[1]) {
    throw ModelError("tensor wpe.weight has shape " + shape_string(wpe.shape()) +
                     ", width differs from wte.weight");
  }

  static const std::regex layer_re(R"(h\.(\d+)\..*)");
  int max_layer = -1;
  for (const auto& [name, _] : table.all()) {
    std::smatch match;
    if (std::regex_match(name, match, layer_re)) max_layer = std::max(max_layer, std::stoi(match[1]));
  }
  cfg.n_layer = max_layer + 1;
  if (cfg.n_layer <= 0) throw ModelError("checkpoint has no transformer layers (missing tensor h.0.ln_1.weight)");

  const auto meta_heads = table.meta("meta.n_head");
  const auto meta_eps = table.meta("meta.layer_norm_epsilon");
  if (opts.n_head) {
    cfg.n_head = *opts.n_head;
  } else if (meta_heads) {
    cfg.n_head = static_cast<int>(std::lround(*meta_heads));
  } else if (cfg.d_model % kGpt2HeadDim == 0) {
    cfg.n_head = cfg.d_model / kGpt2HeadDim;
  } else {
    throw ModelError("cannot infer head count for d_model=" + std::to_string(cfg.d_model) +
                     "; add meta.n_head");
  }
  cfg.eps = opts.eps.value_or(meta_eps.value_or(1e-5));
  cfg.gelu = opts.gelu;
  if (cfg.n_head <= 0 || cfg.d_model % cfg.n_head != 0) {
    throw ModelError("d_model " + std::to_string(cfg.d_model) + " is not divisible by n_head " +
                     std::to_string(cfg.n_head));
  }
  if (!(cfg.eps > 0.0)) throw ModelError("layer norm epsilon must be positive");

  m.token_embedding_ = wte.as_matrix();
  m.position_embedding_ = wpe.as_matrix();

  const auto d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t ff = [&] {
    const Tensor& fc = table.take("h.0.mlp.c_fc.weight");
    if (fc.rank() != 2 || fc.shape()[0] != d) {
      throw ModelError("tensor h.0.mlp.c_fc.weight has shape " + shape_string(fc.shape()));
    }
    return fc.shape()[1];
  }();

  for (int l = 0; l < cfg.n_layer; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_gain = table.vector(p + "ln_1.weight", d);
    layer.ln1_bias = table.vector(p + "ln_1.bias", d);
    const Matrix qkv = table.matrix(p + "attn.c_attn.weight", d, 3 * d);
    const RowVector qkv_b = table.vector(p + "attn.c_attn.bias", 3 * d);
    const auto di = static_cast<Eigen::Index>(d);
    layer.w_q = qkv.middleCols(0, di);
    layer.w_k = qkv.middleCols(di, di);
    layer.w_v = qkv.middleCols(2 * di, di);
    layer.b_q = qkv_b.segment(0, di);
    layer.b_k = qkv_b.segment(di, di);
    layer.b_v = qkv_b.segment(2 * di, di);
    layer.w_attn_proj = table.matrix(p + "attn.c_proj.weight", d, d);
    layer.b_attn_proj = table.vector(p + "attn.c_proj.bias", d);
    layer.ln2_gain = table.vector(p + "ln_2.weight", d);
    layer.ln2_bias = table.vector(p + "ln_2.bias", d);
    layer.w_fc = table.matrix(p + "mlp.c_fc.weight", d, ff);
    layer.b_fc = table.vector(p + "mlp.c_fc.bias", ff);
    layer.w_mlp_proj = table.matrix(p + "mlp.c_proj.weight", ff, d);
    layer.b_mlp_proj = table.vector(p + "mlp.c_proj.bias", d);
    m.layers_.push_back(std::move(layer));
  }
  m.lnf_gain_ = table.vector("ln_f.weight", d);
  m.lnf_bias_ = table.vector("ln_f.bias", d);

  for (const auto& [name, _] : table.all()) {
    if (!table.used().contains(name)) throw ModelError("unexpected tensor " + name);
  }
  for (const auto& [name, _] : table.all()) {
    if (!name.starts_with("meta.")) ++m.parameter_tensors_;
  }
  for (const auto& t : tensors) {
    for (double v : t.tensor.data()) {
      if (!std::isfinite(v)) throw ModelError("tensor " + t.name + " holds a non-finite value");
    }
  }
  return m;
}

Model Model::load(const std::filesystem::path& weights, const LoadOptions& opts) {
  return from_tensors(gptw::read(weights), opts);
}

void Model::set_tokenizer(bpe::BpeTokenizer tok) {
  if (tok.vocab_size() > static_cast<std::size_t>(config_.vocab_size)) {
    throw ModelError("tokenizer has " + std::to_string(tok.vocab_size()) + " ids but the model only " +
                     std::to_string(config_.vocab_size));
  }
  tokenizer_.emplace(std::move(tok));
}

const bpe::BpeTokenizer& Model::tokenizer() const {
  if (!tokenizer_) throw ModelError("model has no tokenizer attached");
  return *tokenizer_;
}

Trace Model::forward(std::span<const TokenId> tokens, const CaptureFlags& capture) const {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  if (T == 0) throw ModelError("forward: empty token sequence");
  if (T > config_.max_positions) {
    throw ModelError("forward: sequence of " + std::to_string(T) + " tokens exceeds max_positions " +
                     std::to_string(config_.max_positions));
  }
  const Eigen::Index d = config_.d_model;
  const int H = config_.n_head;
  const Eigen::Index dh = config_.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Trace trace;
  trace.tokens.assign(tokens.begin(), tokens.end());

  Matrix x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const TokenId id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= config_.vocab_size) {
      throw ModelError("forward: token id " + std::to_string(id) + " out of range");
    }
    x.row(t) = token_embedding_.row(id) + position_embedding_.row(t);
  }
  if (capture.residual) trace.embeddings = x;

  for (const Layer& layer : layers_) {
    const Matrix h = tensor::layer_norm_rows(x, layer.ln1_gain, layer.ln1_bias, config_.eps);
    const Matrix q = (h * layer.w_q).rowwise() + layer.b_q;
    const Matrix k = (h * layer.w_k).rowwise() + layer.b_k;
    const Matrix v = (h * layer.w_v).rowwise() + layer.b_v;

    Matrix context(T, d);
    std::vector<Matrix> head_weights;
    std::vector<Matrix> head_value_weighted;
    for (int head = 0; head < H; ++head) {
      const Eigen::Index c0 = head * dh;
      Matrix scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * inv_sqrt_dh;
      for (Eigen::Index i = 0; i < T; ++i) {
        for (Eigen::Index j = i + 1; j < T; ++j) scores(i, j) = -std::numeric_limits<double>::infinity();
      }
      Matrix weights = tensor::softmax_rows(scores);
      context.middleCols(c0, dh) = weights * v.middleCols(c0, dh);
      if (capture.attn_value_norms) {
        const RowVector norms = v.middleCols(c0, dh).rowwise().norm().transpose();
        head_value_weighted.push_back(weights.array().rowwise() * norms.array());
      }
      if (capture.attention) head_weights.push_back(std::move(weights));
    }
    Matrix attn_out = (context * layer.w_attn_proj).rowwise() + layer.b_attn_proj;
    tensor::check_finite(attn_out, "attention");
    x += attn_out;

    const Matrix h2 = tensor::layer_norm_rows(x, layer.ln2_gain, layer.ln2_bias, config_.eps);
    const Matrix hidden = tensor::gelu(Matrix((h2 * layer.w_fc).rowwise() + layer.b_fc), config_.gelu);
    Matrix ffn = (hidden * layer.w_mlp_proj).rowwise() + layer.b_mlp_proj;
    tensor::check_finite(ffn, "ffn");
    x += ffn;

    if (capture.attention) trace.attn.push_back(std::move(head_weights));
    if (capture.attn_value_norms) trace.attn_value_weighted.push_back(std::move(head_value_weighted));
    if (capture.ffn) trace.ffn_out.push_back(std::move(ffn));
    if (capture.residual) {
      trace.attn_out.push_back(std::move(attn_out));
      trace.residual_stream.push_back(x);
    }
  }

  const Matrix final_norm = tensor::layer_norm_rows(x, lnf_gain_, lnf_bias_, config_.eps);
  trace.logits = final_norm * token_embedding_.transpose();
  tensor::check_finite(trace.logits, "logits");
  return trace;
}

Model load_model(const std::filesystem::path& weights, const std::filesystem::path& vocab,
                 const std::filesystem::path& merges, const LoadOptions& opts) {
  Model m = Model::load(weights, opts);
  m.set_tokenizer(bpe::BpeTokenizer::load(vocab, merges));
  return m;
}

RowVector next_token_logprobs(const Trace& trace, std::size_t position) {
  if (position >= trace.length()) {
    throw ShapeError("next_token_logprobs: position " + std::to_string(position) + " out of range for " +
                std::to_string(trace.length()) + " tokens");
  }
  return tensor::log_softmax_rows(trace.logits.row(static_cast<Eigen::Index>(position)));
}

std::vector<gptw::NamedTensor> random_checkpoint(const ModelConfig& cfg, std::uint64_t seed, double stddev) {
  if (cfg.n_layer <= 0 || cfg.n_head <= 0 || cfg.d_model <= 0 || cfg.vocab_size <= 0 ||
      cfg.max_positions <= 0 || cfg.d_model % cfg.n_head != 0) {
    throw ModelError("random_checkpoint: invalid config");
  }
  Rng rng(seed);
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index ff = 4 * d;
  std::vector<gptw::NamedTensor> out;
  auto mat = [&](std::string name, Eigen::Index r, Eigen::Index c, double sd) {
    out.push_back({std::move(name), Tensor(rng.normal_matrix(r, c, sd))});
  };
  auto vec = [&](std::string name, Eigen::Index n, double center, double sd) {
    Matrix v = rng.normal_matrix(1, n, sd).array() + center;
    out.push_back({std::move(name), Tensor({static_cast<std::size_t>(n)},
                                           std::vector<double>(v.data(), v.data() + v.size()))});
  };
  mat("wte.weight", cfg.vocab_size, d, stddev);
  mat("wpe.weight", cfg.max_positions, d, stddev / 2);
  for (int l = 0; l < cfg.n_layer; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    vec(p + "ln_1.weight", d, 1.0, 0.1);
    vec(p + "ln_1.bias", d, 0.0, 0.1);
    mat(p + "attn.c_attn.weight", d, 3 * d, stddev);
    vec(p + "attn.c_attn.bias", 3 * d, 0.0, stddev);
    mat(p + "attn.c_proj.weight", d, d, stddev);
    vec(p + "attn.c_proj.bias", d, 0.0, stddev);
    vec(p + "ln_2.weight", d, 1.0, 0.1);
    vec(p + "ln_2.bias", d, 0.0, 0.1);
    mat(p + "mlp.c_fc.weight", d, ff, stddev);
    vec(p + "mlp.c_fc.bias", ff, 0.0, stddev);
    mat(p + "mlp.c_proj.weight", ff, d, stddev);
    vec(p + "mlp.c_proj.bias", d, 0.0, stddev);
  }
  vec("ln_f.weight", d, 1.0, 0.1);
  vec("ln_f.bias", d, 0.0, 0.1);
  out.push_back({"meta.n_head", Tensor({1}, {static_cast<double>(cfg.n_head)})});
  out.push_back({"meta.layer_norm_epsilon", Tensor({1}, {cfg.eps})});
  return out;
}

}  // namespace gazeprobe::gpt2
