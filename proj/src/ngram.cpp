#include "gazeprobe/ngram.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::slm {
namespace {

void validate(const NGramConfig& c) {
  if (c.order < 1) throw DataError("ngram: order must be at least 1");
  if (!(c.k > 0.0)) throw DataError("ngram: k must be positive");
  if (c.lambdas.size() != static_cast<std::size_t>(c.order)) {
    throw DataError("ngram: need " + std::to_string(c.order) + " interpolation weights");
  }
  double total = 0.0;
  for (double l : c.lambdas) {
    if (l < 0.0) throw DataError("ngram: interpolation weights must be non-negative");
    total += l;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("ngram: interpolation weights must sum to 1");
}

}  // namespace

NGramModel NGramModel::train(const Corpus& corpus, const NGramConfig& config) {
  if (corpus.empty()) throw DataError("ngram: empty corpus");
  NGramModel m;
  m.config_ = config;
  if (m.config_.lambdas.empty() && m.config_.order >= 1) {
    m.config_.lambdas.assign(static_cast<std::size_t>(m.config_.order), 1.0 / m.config_.order);
  }
  validate(m.config_);
  m.vocab_ = Vocabulary::build(corpus, config.vocab);
  const auto n = static_cast<std::size_t>(m.config_.order);
  m.counts_.assign(n, {});

  for (const auto& sentence : corpus) {
    std::vector<std::size_t> seq(n - 1, m.vocab_.bos());
    for (const auto& w : sentence) seq.push_back(m.vocab_.id(w));
    if (const auto eos = m.vocab_.eos()) seq.push_back(*eos);
    for (std::size_t pos = n - 1; pos < seq.size(); ++pos) {
      for (std::size_t ord = 1; ord <= n; ++ord) {
        Key gram(seq.begin() + static_cast<std::ptrdiff_t>(pos + 1 - ord),
                 seq.begin() + static_cast<std::ptrdiff_t>(pos + 1));
        ++m.counts_[ord - 1][gram];
      }
    }
  }
  m.finalize();
  return m;
}

void NGramModel::finalize() {
  history_counts_.assign(counts_.size(), {});
  total_words_ = 0;
  for (std::size_t ord = 1; ord <= counts_.size(); ++ord) {
    for (const auto& [gram, c] : counts_[ord - 1]) {
      history_counts_[ord - 1][Key(gram.begin(), gram.end() - 1)] += c;
      if (ord == 1) total_words_ += c;
    }
  }
}

std::uint64_t NGramModel::count(const Key& gram) const {
  if (gram.empty() || gram.size() > counts_.size()) return 0;
  const auto& table = counts_[gram.size() - 1];
  const auto it = table.find(gram);
  return it == table.end() ? 0 : it->second;
}

NGramModel::Key NGramModel::padded_history(std::span<const std::size_t> history, int order) const {
  const auto need = static_cast<std::size_t>(order - 1);
  Key h;
  h.reserve(need);
  for (std::size_t i = history.size(); i < need; ++i) h.push_back(vocab_.bos());
  const std::size_t take = std::min(need, history.size());
  h.insert(h.end(), history.end() - static_cast<std::ptrdiff_t>(take), history.end());
  return h;
}

double NGramModel::component_prob(int order, std::span<const std::size_t> history, std::size_t word) const {
  if (order < 1 || order > config_.order) throw DataError("ngram: order " + std::to_string(order) + " out of range");
  const double V = static_cast<double>(vocab_.size());
  const double k = config_.k;
  Key gram = padded_history(history, order);
  std::uint64_t hist = 0;
  {
    const auto& table = history_counts_[static_cast<std::size_t>(order - 1)];
    const auto it = table.find(gram);
    if (it != table.end()) hist = it->second;
  }
  gram.push_back(word);
  return (static_cast<double>(count(gram)) + k) / (static_cast<double>(hist) + k * V);
}

double NGramModel::prob(std::span<const std::size_t> history, std::size_t word) const {
  double p = 0.0;
  for (int ord = 1; ord <= config_.order; ++ord) {
    p += config_.lambdas[static_cast<std::size_t>(ord - 1)] * component_prob(ord, history, word);
  }
  return p;
}

Vector NGramModel::distribution(std::span<const std::string> context) const {
  const auto history = vocab_.ids(context);
  Vector p(static_cast<Eigen::Index>(vocab_.size()));
  for (std::size_t w = 0; w < vocab_.size(); ++w) p(static_cast<Eigen::Index>(w)) = prob(history, w);
  return p;
}

std::vector<double> NGramModel::sentence_logprobs(std::span<const std::string> words) const {
  const auto ids = vocab_.ids(words);
  std::vector<double> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back(std::log(prob(std::span(ids).subspan(0, i), ids[i])));
  }
  return out;
}

nlohmann::json NGramModel::to_json() const {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& table : counts_) {
    for (const auto& [gram, c] : table) {
      std::string key;
      for (std::size_t i = 0; i < gram.size(); ++i) {
        if (i) key += ' ';
        key += vocab_.word(gram[i]);
      }
      counts[key] = c;
    }
  }
  return {{"kind", "ngram"},
          {"config", {{"order", config_.order}, {"k", config_.k}, {"lambdas", config_.lambdas}}},
          {"vocab", vocab_.to_json()},
          {"counts", std::move(counts)}};
}

NGramModel NGramModel::from_json(const nlohmann::json& j) {
  NGramModel m;
  try {
    const auto& c = j.at("config");
    m.config_.order = c.at("order").get<int>();
    m.config_.k = c.at("k").get<double>();
    m.config_.lambdas = c.at("lambdas").get<std::vector<double>>();
    m.vocab_ = Vocabulary::from_json(j.at("vocab"));
    m.config_.vocab = m.vocab_.options();
    validate(m.config_);
    std::unordered_map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i <= m.vocab_.size(); ++i) ids.emplace(m.vocab_.word(i), i);
    m.counts_.assign(static_cast<std::size_t>(m.config_.order), {});
    for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it) {
      Key gram;
      std::istringstream words(it.key());
      std::string w;
      while (words >> w) {
        const auto id = ids.find(w);
        if (id == ids.end()) throw ModelError("ngram: count key uses unknown word \"" + w + "\"");
        gram.push_back(id->second);
      }
      if (gram.empty() || gram.size() > m.counts_.size()) {
        throw ModelError("ngram: count key \"" + it.key() + "\" has the wrong order");
      }
      m.counts_[gram.size() - 1][gram] = it.value().get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("ngram model file: ") + e.what());
  } catch (const DataError& e) {
    throw ModelError(std::string("ngram model file: ") + e.what());
  }
  m.finalize();
  return m;
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw ModelError("cannot write " + path.string());
  f << to_json().dump(1) << '\n';
}

}  // namespace gazeprobe::slm
