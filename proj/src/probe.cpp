#include "gazeprobe/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/random.hpp"

namespace gazeprobe::probe {

std::string_view task_filter_name(TaskFilter t) {
  switch (t) {
    case TaskFilter::NR: return "nr";
    case TaskFilter::TSR: return "tsr";
    case TaskFilter::Both: return "both";
  }
  return "?";
}

std::optional<TaskFilter> parse_task_filter(std::string_view s) {
  for (auto t : {TaskFilter::NR, TaskFilter::TSR, TaskFilter::Both}) {
    if (task_filter_name(t) == s) return t;
  }
  return std::nullopt;
}

std::string_view pooling_name(Pooling p) { return p == Pooling::Pooled ? "pooled" : "per-sentence"; }

std::optional<Pooling> parse_pooling(std::string_view s) {
  if (s == "pooled") return Pooling::Pooled;
  if (s == "per-sentence") return Pooling::PerSentence;
  return std::nullopt;
}

std::string_view prob_transform_name(ProbTransform t) { return t == ProbTransform::LogP ? "logp" : "p"; }

std::optional<ProbTransform> parse_prob_transform(std::string_view s) {
  if (s == "logp") return ProbTransform::LogP;
  if (s == "p") return ProbTransform::P;
  return std::nullopt;
}

std::string_view agg_name(gaze::AggregationPolicy a) {
  return a == gaze::AggregationPolicy::DefinedOnlyMean ? "defined" : "zerofill";
}

std::optional<gaze::AggregationPolicy> parse_agg(std::string_view s) {
  if (s == "defined") return gaze::AggregationPolicy::DefinedOnlyMean;
  if (s == "zerofill") return gaze::AggregationPolicy::ZeroFillMean;
  return std::nullopt;
}

std::vector<LayerGroup> layer_groups(int n_layer) {
  const int b1 = static_cast<int>(std::lround(n_layer / 3.0));
  const int b2 = static_cast<int>(std::lround(2.0 * n_layer / 3.0));
  return {{"bottom", 1, b1}, {"middle", b1 + 1, b2}, {"upper", b2 + 1, n_layer}};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Scope {
  std::string name;
  std::vector<gaze::Task> tasks;
  bool contains(gaze::Task t) const { return std::ranges::find(tasks, t) != tasks.end(); }
};

std::vector<Scope> scopes_for(TaskFilter f) {
  switch (f) {
    case TaskFilter::NR: return {{"NR", {gaze::Task::NR}}};
    case TaskFilter::TSR: return {{"TSR", {gaze::Task::TSR}}};
    case TaskFilter::Both:
      return {{"NR", {gaze::Task::NR}}, {"TSR", {gaze::Task::TSR}}, {"both", {gaze::Task::NR, gaze::Task::TSR}}};
  }
  return {};
}

// Per-word model values for one sentence. Absent optionals mark words a
// signal does not cover (sentence-initial words for log-probabilities).
struct SentenceSignals {
  gaze::Task task = gaze::Task::NR;
  int sentence_id = 0;
  std::size_t n_words = 0;
  std::optional<std::string> rejected;
  std::vector<std::vector<double>> ffn;                // [layer][word]
  std::vector<std::vector<std::vector<double>>> attn;  // [layer][head][word]
  std::vector<std::optional<double>> logprob;          // transformer, [word]
  std::vector<std::vector<std::optional<double>>> shallow;  // [model][word]
};

struct Needs {
  bool ffn = false;
  bool attn = false;
  bool logprob = false;
};

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void extract_transformer(const gpt2::Model& model, const gaze::Sentence& s, const ProbeConfig& cfg,
                         const Needs& needs, SentenceSignals& out) {
  const auto words = s.surfaces();
  const std::string text = align::sentence_text(words);
  const auto& tok = model.tokenizer();
  const auto ids = tok.encode(text);
  if (ids.empty()) throw DataError("sentence encodes to no tokens");
  if (ids.size() > static_cast<std::size_t>(model.config().max_positions)) {
    throw ModelError("sentence has " + std::to_string(ids.size()) + " tokens, above max_positions " +
                     std::to_string(model.config().max_positions));
  }
  std::vector<std::string> token_texts;
  token_texts.reserve(ids.size());
  for (auto id : ids) token_texts.push_back(tok.token_bytes(id));
  const align::AlignmentMap map = align::align(words, token_texts);

  gpt2::CaptureFlags capture;
  capture.ffn = needs.ffn;
  capture.attention = needs.attn;
  const gpt2::Trace trace = model.forward(ids, capture);
  const int L = model.config().n_layer;
  if (needs.ffn) {
    for (int l = 1; l <= L; ++l) out.ffn.push_back(align::ffn_word_scalars(trace, map, l, cfg.ffn_reduce));
  }
  if (needs.attn) {
    for (int l = 1; l <= L; ++l) {
      std::vector<std::vector<double>> heads;
      for (int h = 1; h <= model.config().n_head; ++h) {
        heads.push_back(align::attn_word_scalars(trace, map, l, h, cfg.attn_mode));
      }
      out.attn.push_back(std::move(heads));
    }
  }
  if (needs.logprob) {
    const auto lp = align::token_logprobs(trace);
    for (std::size_t w = 0; w < words.size(); ++w) out.logprob.push_back(align::word_logprob(lp, map, w));
  }
}

std::vector<SentenceSignals> extract_all(const ProbeConfig& cfg, const gaze::GazeCorpus& corpus,
                                         const gpt2::Model* model, const Needs& needs,
                                         const std::vector<NamedWordModel>& shallow) {
  const auto scopes = scopes_for(cfg.task);
  std::vector<const gaze::Sentence*> sentences;
  for (const auto& s : corpus.sentences()) {
    if (std::ranges::any_of(scopes, [&](const Scope& sc) { return sc.contains(s.task); })) sentences.push_back(&s);
  }
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle_order) {
    Rng rng(*cfg.shuffle_order);
    rng.shuffle(order.begin(), order.end());
  }

  std::vector<SentenceSignals> out(sentences.size());
  parallel_for(order.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = order[k];
    const gaze::Sentence& s = *sentences[i];
    SentenceSignals& sig = out[i];
    sig.task = s.task;
    sig.sentence_id = s.sentence_id;
    sig.n_words = s.words.size();
    if (model) {
      try {
        extract_transformer(*model, s, cfg, needs, sig);
      } catch (const DataError& e) {
        sig.rejected = e.what();
      } catch (const ModelError& e) {
        sig.rejected = e.what();
      }
    }
    if (!shallow.empty()) {
      const auto words = s.surfaces();
      for (const auto& m : shallow) {
        const auto lp = m.model->sentence_logprobs(words);
        std::vector<std::optional<double>> col(lp.begin(), lp.end());
        if (!col.empty()) col[0] = std::nullopt;
        sig.shallow.push_back(std::move(col));
      }
    }
  });
  return out;
}

using SignalFn = std::function<std::optional<double>(const SentenceSignals&, std::size_t)>;

stats::CorrelationResult safe_correlate(stats::Metric metric, const std::vector<double>& x,
                                        const std::vector<double>& y) {
  try {
    return stats::correlate(metric, x, y);
  } catch (const stats::InsufficientSample&) {
    return {metric, kNaN, kNaN, x.size(), true};
  }
}

// Mean of per-sentence coefficients; p from a one-sample t-test against 0.
stats::CorrelationResult per_sentence_mean(stats::Metric metric,
                                           const std::vector<std::pair<std::vector<double>, std::vector<double>>>& groups) {
  std::vector<double> coefs;
  for (const auto& [x, y] : groups) {
    if (x.size() < 3) continue;
    const auto r = stats::correlate(metric, x, y);
    if (!r.degenerate) coefs.push_back(r.coefficient);
  }
  stats::CorrelationResult out{metric, kNaN, kNaN, coefs.size(), true};
  if (coefs.empty()) return out;
  const double n = static_cast<double>(coefs.size());
  const double mean = std::accumulate(coefs.begin(), coefs.end(), 0.0) / n;
  out.coefficient = mean;
  out.degenerate = false;
  if (coefs.size() >= 2) {
    double ss = 0.0;
    for (double c : coefs) ss += (c - mean) * (c - mean);
    const double se = std::sqrt(ss / (n - 1.0) / n);
    out.p_value = se > 0.0 ? stats::student_t_two_sided_p(mean / se, n - 1.0) : (mean == 0.0 ? 1.0 : 0.0);
  }
  return out;
}

class Correlator {
 public:
  Correlator(const ProbeConfig& cfg, const std::vector<SentenceSignals>& signals, ProbeReport& report)
      : cfg_(cfg), signals_(signals), report_(report) {
    for (auto m : cfg.measures) {
      gaze_.emplace(m, std::map<gaze::WordKey, double>{});
    }
  }

  void set_gaze(const gaze::GazeCorpus& corpus) {
    for (auto& [m, values] : gaze_) values = gaze::aggregate(corpus, m, cfg_.agg, cfg_.min_participants);
  }

  // Transformer signals skip rejected sentences; shallow-model signals do not.
  Cell cell(const Scope& scope, gaze::Measure measure, const std::string& signal, const SignalFn& fn,
            bool skip_rejected = true) {
    const auto& gaze_values = gaze_.at(measure);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& s : signals_) {
      if (s.rejected && skip_rejected) continue;
      if (!scope.contains(s.task)) continue;
      std::pair<std::vector<double>, std::vector<double>> g;
      for (std::size_t w = 0; w < s.n_words; ++w) {
        const gaze::WordKey key{s.task, s.sentence_id, static_cast<int>(w)};
        const auto gv = gaze_values.find(key);
        if (gv == gaze_values.end()) continue;
        const auto mv = fn(s, w);
        if (!mv) continue;
        g.first.push_back(*mv);
        g.second.push_back(gv->second);
        if (cfg_.dump_pairs) {
          report_.pairs.push_back({scope.name, signal, std::string(gaze::measure_name(measure)), key, *mv, gv->second});
        }
      }
      groups.push_back(std::move(g));
    }
    Cell c;
    auto compute = [&](stats::Metric metric) {
      if (cfg_.pooling == Pooling::PerSentence) return per_sentence_mean(metric, groups);
      std::vector<double> x, y;
      for (const auto& [gx, gy] : groups) {
        x.insert(x.end(), gx.begin(), gx.end());
        y.insert(y.end(), gy.begin(), gy.end());
      }
      return safe_correlate(metric, x, y);
    };
    c.result = compute(cfg_.metric);
    if (cfg_.cross_check) {
      for (auto m : {stats::Metric::Pearson, stats::Metric::Spearman, stats::Metric::Kendall}) {
        if (m != cfg_.metric) c.cross.push_back(compute(m));
      }
    }
    return c;
  }

 private:
  const ProbeConfig& cfg_;
  const std::vector<SentenceSignals>& signals_;
  ProbeReport& report_;
  std::map<gaze::Measure, std::map<gaze::WordKey, double>> gaze_;
};

ProbeReport base_report(const std::string& probe, const ProbeConfig& cfg, const gaze::GazeCorpus& corpus,
                        const std::vector<SentenceSignals>& signals) {
  ProbeReport r;
  r.probe = probe;
  r.config = cfg;
  for (auto t : gaze::kAllTasks) {
    bool wanted = false;
    for (const auto& sc : scopes_for(cfg.task)) wanted = wanted || sc.contains(t);
    if (!wanted) continue;
    r.eligible_words[std::string(gaze::task_name(t))] = gaze::word_count(corpus, t);
    r.sentences_processed[std::string(gaze::task_name(t))] = 0;
  }
  for (const auto& s : signals) {
    if (s.rejected) {
      r.rejected.push_back({std::string(gaze::task_name(s.task)), s.sentence_id, *s.rejected});
    } else {
      ++r.sentences_processed[std::string(gaze::task_name(s.task))];
    }
  }
  return r;
}

ModelInfo model_info(const gpt2::Model& m) {
  const auto& c = m.config();
  return {c.n_layer, c.n_head, c.d_model, c.vocab_size};
}

std::vector<std::string> measure_labels(const ProbeConfig& cfg) {
  std::vector<std::string> out;
  for (auto m : cfg.measures) out.emplace_back(gaze::measure_name(m));
  return out;
}

std::optional<double> transform(const ProbeConfig& cfg, std::optional<double> logp) {
  if (!logp || cfg.prob_transform == ProbTransform::LogP) return logp;
  return std::exp(*logp);
}

}  // namespace

ProbeReport run_ffn_probe(const ProbeConfig& cfg, const gpt2::Model& model, const gaze::GazeCorpus& corpus) {
  const auto signals = extract_all(cfg, corpus, &model, Needs{.ffn = true}, {});
  ProbeReport report = base_report("ffn", cfg, corpus, signals);
  report.model = model_info(model);
  Correlator corr(cfg, signals, report);
  corr.set_gaze(corpus);
  const int L = model.config().n_layer;
  const auto groups = layer_groups(L);
  for (const auto& scope : scopes_for(cfg.task)) {
    CorrelationTable table;
    table.scope = scope.name;
    table.row_labels = measure_labels(cfg);
    for (int l = 1; l <= L; ++l) table.col_labels.push_back("L" + std::to_string(l));
    for (auto m : cfg.measures) {
      std::vector<Cell> row;
      for (int l = 1; l <= L; ++l) {
        const std::string label = "ffn/L" + std::to_string(l) + "/" + std::string(align::reduction_name(cfg.ffn_reduce));
        row.push_back(corr.cell(scope, m, label, [l](const SentenceSignals& s, std::size_t w) -> std::optional<double> {
          return s.ffn[static_cast<std::size_t>(l - 1)][w];
        }));
      }
      for (const auto& g : groups) {
        double total = 0.0;
        int count = 0;
        for (int l = g.first; l <= g.last; ++l) {
          const auto& r = row[static_cast<std::size_t>(l - 1)].result;
          if (!r.degenerate) {
            total += r.coefficient;
            ++count;
          }
        }
        report.groups.push_back({scope.name, std::string(gaze::measure_name(m)), g, count ? total / count : kNaN});
      }
      table.cells.push_back(std::move(row));
    }
    report.tables.push_back(std::move(table));
  }
  return report;
}

ProbeReport run_attention_probe(const ProbeConfig& cfg, const gpt2::Model& model, const gaze::GazeCorpus& corpus) {
  const auto signals = extract_all(cfg, corpus, &model, Needs{.attn = true}, {});
  ProbeReport report = base_report("attn", cfg, corpus, signals);
  report.model = model_info(model);
  Correlator corr(cfg, signals, report);
  corr.set_gaze(corpus);
  const int L = model.config().n_layer;
  const int H = model.config().n_head;
  for (const auto& scope : scopes_for(cfg.task)) {
    for (auto m : cfg.measures) {
      CorrelationTable table;
      table.scope = scope.name;
      table.measure = gaze::measure_name(m);
      for (int l = 1; l <= L; ++l) table.row_labels.push_back("L" + std::to_string(l));
      for (int h = 1; h <= H; ++h) table.col_labels.push_back("H" + std::to_string(h));
      for (int l = 1; l <= L; ++l) {
        std::vector<Cell> row;
        for (int h = 1; h <= H; ++h) {
          const std::string label = "attn/L" + std::to_string(l) + "/H" + std::to_string(h) + "/" +
                                    std::string(align::attn_mode_name(cfg.attn_mode));
          row.push_back(corr.cell(scope, m, label, [l, h](const SentenceSignals& s, std::size_t w) -> std::optional<double> {
              return s.attn[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(h - 1)][w];
          }));
        }
        table.cells.push_back(std::move(row));
      }
      report.tables.push_back(std::move(table));
    }
  }
  return report;
}

ProbeReport run_prob_probe(const ProbeConfig& cfg, const gpt2::Model* transformer,
                           const std::vector<NamedWordModel>& shallow, const gaze::GazeCorpus& corpus) {
  if (!transformer && shallow.empty()) throw ModelError("probability probe needs at least one model");
  const auto signals = extract_all(cfg, corpus, transformer, Needs{.logprob = true}, shallow);
  ProbeReport report = base_report("prob", cfg, corpus, signals);
  if (transformer) report.model = model_info(*transformer);
  Correlator corr(cfg, signals, report);
  corr.set_gaze(corpus);
  const std::string suffix = "/" + std::string(prob_transform_name(cfg.prob_transform));
  // One table: rows are models, columns are scope x measure.
  CorrelationTable table;
  table.scope = task_filter_name(cfg.task);
  const auto scopes = scopes_for(cfg.task);
  for (const auto& scope : scopes) {
    for (auto m : cfg.measures) table.col_labels.push_back(scope.name + "/" + std::string(gaze::measure_name(m)));
  }
  auto add_row = [&](const std::string& id, const SignalFn& fn, bool skip_rejected) {
    table.row_labels.push_back(id);
    std::vector<Cell> row;
    for (const auto& scope : scopes) {
      for (auto m : cfg.measures) row.push_back(corr.cell(scope, m, "logprob/" + id + suffix, fn, skip_rejected));
    }
    table.cells.push_back(std::move(row));
  };
  if (transformer) {
    add_row("gpt2", [&cfg](const SentenceSignals& s, std::size_t w) { return transform(cfg, s.logprob[w]); }, true);
  }
  // Shallow signals exist even when the transformer rejected the sentence.
  for (std::size_t k = 0; k < shallow.size(); ++k) {
    add_row(shallow[k].id, [&cfg, k](const SentenceSignals& s, std::size_t w) { return transform(cfg, s.shallow[k][w]); },
            false);
  }
  report.tables.push_back(std::move(table));
  return report;
}

namespace {

gpt2::Model load_transformer(const ProbeConfig& cfg) {
  if (cfg.weights.empty() || cfg.vocab.empty() || cfg.merges.empty()) {
    throw ModelError("--weights, --vocab and --merges are required");
  }
  return gpt2::load_model(cfg.weights, cfg.vocab, cfg.merges);
}

}  // namespace

ProbeReport run_ffn_probe(const ProbeConfig& cfg) {
  const auto corpus = gaze::load_corpus(cfg.gaze);
  const auto model = load_transformer(cfg);
  return run_ffn_probe(cfg, model, corpus);
}

ProbeReport run_attention_probe(const ProbeConfig& cfg) {
  const auto corpus = gaze::load_corpus(cfg.gaze);
  const auto model = load_transformer(cfg);
  return run_attention_probe(cfg, model, corpus);
}

ProbeReport run_prob_probe(const ProbeConfig& cfg) {
  const auto corpus = gaze::load_corpus(cfg.gaze);
  std::optional<gpt2::Model> transformer;
  if (!cfg.weights.empty()) transformer = load_transformer(cfg);
  std::vector<NamedWordModel> shallow;
  std::map<std::string, std::string> skipped;
  for (const auto& path : cfg.slm_models) {
    const std::string id = path.stem().string();
    try {
      shallow.push_back({id, slm::load_word_model(path)});
    } catch (const Error& e) {
      skipped[id] = e.what();
    }
  }
  if (!transformer && shallow.empty()) {
    throw ModelError(skipped.empty() ? "probability probe needs --weights or --slm"
                                     : "no model could be loaded: " + skipped.begin()->second);
  }
  ProbeReport r = run_prob_probe(cfg, transformer ? &*transformer : nullptr, shallow, corpus);
  r.skipped_models = std::move(skipped);
  return r;
}

}  // namespace gazeprobe::probe
