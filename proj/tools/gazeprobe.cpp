// gazeprobe command line: probes, shallow-model training, report re-emission.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "json.hpp"
#include "gazeprobe/bpe.hpp"
#include "gazeprobe/errors.hpp"
#include "gazeprobe/ngram.hpp"
#include "gazeprobe/probe.hpp"
#include "gazeprobe/recurrent.hpp"
#include "gazeprobe/report.hpp"

namespace {

using namespace gazeprobe;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

// String-typed flag values; validated after parsing so config-file values get
// the same checks as flags.
struct ProbeFlags {
  std::string config;
  std::string weights, vocab, merges, gaze, out = "probe-out";
  std::string task = "both", metric = "spearman", agg = "defined", ffn_reduce = "l2mean", attn_mode = "mass";
  std::string pooling = "pooled", prob_transform = "logp";
  std::vector<std::string> measures, slm;
  std::uint64_t seed = 0;
  int min_participants = 1;
  int threads = 0;
  bool dump_pairs = false, cross_check = false;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
T require(std::optional<T> v, const std::string& flag, const std::string& value) {
  if (!v) throw UsageError("invalid value for --" + flag + ": '" + value + "'");
  return *v;
}

probe::ProbeConfig to_config(const ProbeFlags& f) {
  probe::ProbeConfig c;
  c.weights = f.weights;
  c.vocab = f.vocab;
  c.merges = f.merges;
  c.gaze = f.gaze;
  c.out_dir = f.out;
  c.task = require(probe::parse_task_filter(f.task), "task", f.task);
  c.metric = require(stats::parse_metric(f.metric), "metric", f.metric);
  c.agg = require(probe::parse_agg(f.agg), "agg", f.agg);
  c.ffn_reduce = require(align::parse_reduction(f.ffn_reduce), "ffn-reduce", f.ffn_reduce);
  c.attn_mode = require(align::parse_attn_mode(f.attn_mode), "attn-mode", f.attn_mode);
  c.pooling = require(probe::parse_pooling(f.pooling), "pooling", f.pooling);
  c.prob_transform = require(probe::parse_prob_transform(f.prob_transform), "prob-transform", f.prob_transform);
  if (!f.measures.empty()) {
    c.measures.clear();
    for (const auto& m : f.measures) c.measures.push_back(require(gaze::parse_measure(m), "measures", m));
  }
  for (const auto& s : f.slm) c.slm_models.emplace_back(s);
  c.seed = f.seed;
  c.min_participants = f.min_participants;
  c.threads = f.threads;
  c.dump_pairs = f.dump_pairs;
  c.cross_check = f.cross_check;
  if (c.gaze.empty()) throw UsageError("--gaze is required");
  for (const auto& p : {c.gaze, c.weights, c.vocab, c.merges}) {
    if (!p.empty() && !std::filesystem::exists(p)) throw DataError("no such file: " + p.string());
  }
  return c;
}

// CLI11 only reads config files for the top-level app, so subcommand config
// files are applied here: each key fills the option of the same name unless
// the command line already set it.
void apply_config_file(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (!opt || key == "config") throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (opt->get_items_expected_max() > 1) {
      std::stringstream items(value);
      for (std::string item; std::getline(items, item, ',');) opt->add_result(trim(item));
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

void add_probe_flags(CLI::App* app, ProbeFlags& f) {
  app->add_option("--config", f.config, "flat key=value file mirroring the flags; flags override it")
      ->check(CLI::ExistingFile);
  app->add_option("--weights", f.weights, "GPTW1 checkpoint");
  app->add_option("--vocab", f.vocab, "tokenizer vocab.json");
  app->add_option("--merges", f.merges, "tokenizer merges.txt");
  app->add_option("--gaze", f.gaze, "gaze TSV");
  app->add_option("--task", f.task, "nr|tsr|both")->capture_default_str();
  app->add_option("--measures", f.measures, "subset of GD,TRT,FFD,SFD,GPT")->delimiter(',');
  app->add_option("--metric", f.metric, "pearson|spearman|kendall")->capture_default_str();
  app->add_flag("--cross-check", f.cross_check, "also compute the other two metrics");
  app->add_option("--agg", f.agg, "defined|zerofill")->capture_default_str();
  app->add_option("--min-participants", f.min_participants, "defined-only mean: minimum contributing readers")
      ->capture_default_str();
  app->add_option("--ffn-reduce", f.ffn_reduce, "l2mean|l2all|meanabs")->capture_default_str();
  app->add_option("--attn-mode", f.attn_mode, "mass|massnorm")->capture_default_str();
  app->add_option("--pooling", f.pooling, "pooled|per-sentence")->capture_default_str();
  app->add_option("--prob-transform", f.prob_transform, "logp|p")->capture_default_str();
  app->add_option("--slm", f.slm, "shallow model sidecar JSON (repeatable)");
  app->add_option("--out", f.out, "output directory")->capture_default_str();
  app->add_option("--seed", f.seed)->capture_default_str();
  app->add_option("--threads", f.threads, "worker threads, 0 = all cores")->capture_default_str();
  app->add_flag("--dump-pairs", f.dump_pairs, "write the pooled (model, gaze) pairs");
}

void print_summary(const probe::ProbeReport& r, const std::vector<std::filesystem::path>& files) {
  for (const auto& [task, n] : r.sentences_processed) {
    std::printf("%s: %zu sentences, %zu eligible words\n", task.c_str(), n,
                r.eligible_words.count(task) ? r.eligible_words.at(task) : std::size_t{0});
  }
  if (!r.rejected.empty()) std::printf("rejected sentences: %zu\n", r.rejected.size());
  for (const auto& [id, why] : r.skipped_models) std::printf("skipped model %s: %s\n", id.c_str(), why.c_str());
  for (const auto& g : r.groups) {
    if (g.group.first > g.group.last) {
      std::printf("%-4s %-3s %-6s (empty)\n", g.scope.c_str(), g.measure.c_str(), g.group.name.c_str());
      continue;
    }
    std::printf("%-4s %-3s %-6s L%d-L%d mean %s\n", g.scope.c_str(), g.measure.c_str(), g.group.name.c_str(),
                g.group.first, g.group.last, report::format_double(g.mean_coefficient).c_str());
  }
  std::printf("wrote %zu files to %s\n", files.size(),
              files.empty() ? "" : files.front().parent_path().string().c_str());
}

int run_probe(const std::string& which, const ProbeFlags& flags) {
  const auto cfg = to_config(flags);
  probe::ProbeReport r;
  if (which == "ffn") {
    r = probe::run_ffn_probe(cfg);
  } else if (which == "attn") {
    r = probe::run_attention_probe(cfg);
  } else {
    r = probe::run_prob_probe(cfg);
  }
  print_summary(r, report::emit_report(r, cfg.out_dir));
  return kOk;
}

struct SlmFlags {
  std::string kind = "lstm", corpus, out;
  int order = 3;
  double k = 0.1;
  std::vector<double> lambdas;
  int embed = 64, hidden = 128, bptt = 32, epochs = 5, min_freq = 2;
  double lr = 1e-3, clip = 1.0;
  std::uint64_t seed = 1;
  bool eos = false, keep_case = false, keep_punct = false;
};

int run_slm_train(const SlmFlags& f) {
  const auto corpus = slm::read_corpus(f.corpus);
  slm::VocabOptions vo;
  vo.min_freq = f.min_freq;
  vo.use_eos = f.eos;
  vo.lowercase = !f.keep_case;
  vo.strip_punct = !f.keep_punct;
  if (f.kind == "ngram") {
    slm::NGramConfig cfg;
    cfg.order = f.order;
    cfg.k = f.k;
    cfg.lambdas = f.lambdas;
    cfg.vocab = vo;
    const auto model = slm::NGramModel::train(corpus, cfg);
    model.save(f.out);
    std::printf("ngram order %d, vocab %zu, perplexity %.4f\n", cfg.order, model.vocab().size(),
                slm::perplexity(model, corpus));
  } else {
    slm::RecurrentConfig cfg;
    cfg.kind = require(slm::parse_cell_kind(f.kind), "kind", f.kind);
    cfg.embed = f.embed;
    cfg.hidden = f.hidden;
    cfg.bptt = f.bptt;
    cfg.learning_rate = f.lr;
    cfg.clip_norm = f.clip;
    cfg.epochs = f.epochs;
    cfg.seed = f.seed;
    cfg.vocab = vo;
    slm::TrainStats st;
    const auto model = slm::train_recurrent(cfg, corpus, &st);
    model.save(f.out);
    for (std::size_t e = 0; e < st.epoch_loss.size(); ++e) std::printf("epoch %zu loss %.6f\n", e + 1, st.epoch_loss[e]);
    std::printf("%s: loss %.6f -> %.6f (%.1f%% lower), %zu steps\n", f.kind.c_str(), st.initial_loss, st.final_loss,
                100.0 * (1.0 - st.final_loss / st.initial_loss), st.steps);
  }
  std::printf("saved %s\n", f.out.c_str());
  return kOk;
}

// One input line per text (a JSON string literal with --json, so texts may
// hold newlines); prints the token ids of each, space-separated.
int run_tokenize(const std::string& vocab, const std::string& merges, bool json_lines) {
  const auto tok = bpe::BpeTokenizer::load(vocab, merges);
  std::string line;
  while (std::getline(std::cin, line)) {
    std::string text = line;
    if (json_lines) {
      try {
        text = nlohmann::json::parse(line).get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("tokenize: bad JSON string: ") + e.what());
      }
    }
    const auto ids = tok.encode(text);
    for (std::size_t i = 0; i < ids.size(); ++i) std::printf(i ? " %d" : "%d", static_cast<int>(ids[i]));
    std::printf("\n");
  }
  return kOk;
}

int run_report(const std::string& in, const std::string& out, const std::vector<std::string>& formats) {
  std::ifstream file(in, std::ios::binary);
  if (!file) throw DataError("cannot read " + in);
  std::stringstream ss;
  ss << file.rdbuf();
  const auto r = report::from_json(ss.str());
  std::vector<report::Format> fs;
  for (const auto& f : formats) {
    if (f == "csv") fs.push_back(report::Format::Csv);
    else if (f == "json") fs.push_back(report::Format::Json);
    else if (f == "svg") fs.push_back(report::Format::Svg);
    else throw UsageError("invalid format '" + f + "'");
  }
  const auto files = report::emit_report(r, out, fs);
  std::printf("wrote %zu files to %s\n", files.size(), out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gazeprobe: correlate transformer internals and word probabilities with eye-tracking measures"};
  app.set_version_flag("--version", GAZEPROBE_VERSION);
  app.require_subcommand(1);

  auto* probe_cmd = app.add_subcommand("probe", "run a probe");
  probe_cmd->require_subcommand(1);
  ProbeFlags ffn_flags, attn_flags, prob_flags;
  auto* ffn = probe_cmd->add_subcommand("ffn", "per-layer FFN output probe");
  auto* attn = probe_cmd->add_subcommand("attn", "per-head attention probe");
  auto* prob = probe_cmd->add_subcommand("prob", "word log-probability probe");
  add_probe_flags(ffn, ffn_flags);
  add_probe_flags(attn, attn_flags);
  add_probe_flags(prob, prob_flags);

  auto* slm_cmd = app.add_subcommand("slm", "shallow language models");
  slm_cmd->require_subcommand(1);
  auto* train = slm_cmd->add_subcommand("train", "train a shallow model");
  SlmFlags sf;
  train->add_option("--kind", sf.kind, "ngram|rnn|gru|lstm")
      ->check(CLI::IsMember({"ngram", "rnn", "gru", "lstm"}))
      ->capture_default_str();
  train->add_option("--corpus", sf.corpus, "one sentence per line")->required()->check(CLI::ExistingFile);
  train->add_option("--out", sf.out, "model sidecar JSON path")->required();
  train->add_option("--order", sf.order)->capture_default_str();
  train->add_option("--k", sf.k, "add-k smoothing")->capture_default_str();
  train->add_option("--lambdas", sf.lambdas, "interpolation weights, orders 1..n")->delimiter(',');
  train->add_option("--embed", sf.embed)->capture_default_str();
  train->add_option("--hidden", sf.hidden)->capture_default_str();
  train->add_option("--bptt", sf.bptt)->capture_default_str();
  train->add_option("--lr", sf.lr)->capture_default_str();
  train->add_option("--clip", sf.clip, "global gradient-norm clip")->capture_default_str();
  train->add_option("--epochs", sf.epochs)->capture_default_str();
  train->add_option("--seed", sf.seed)->capture_default_str();
  train->add_option("--min-freq", sf.min_freq)->capture_default_str();
  train->add_flag("--eos", sf.eos, "predict an end-of-sentence token");
  train->add_flag("--keep-case", sf.keep_case);
  train->add_flag("--keep-punct", sf.keep_punct);

  auto* report_cmd = app.add_subcommand("report", "re-emit CSV/SVG/JSON from a saved JSON report");
  std::string report_in, report_out = "probe-out";
  std::vector<std::string> formats{"csv", "svg"};
  report_cmd->add_option("input", report_in, "report JSON")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out)->capture_default_str();
  report_cmd->add_option("--format", formats, "csv,json,svg")->delimiter(',')->capture_default_str();

  auto* tokenize_cmd = app.add_subcommand("tokenize", "print BPE token ids for each line of stdin");
  std::string tok_vocab, tok_merges;
  bool tok_json = false;
  tokenize_cmd->add_option("--vocab", tok_vocab, "tokenizer vocab.json")->required()->check(CLI::ExistingFile);
  tokenize_cmd->add_option("--merges", tok_merges, "tokenizer merges.txt")->required()->check(CLI::ExistingFile);
  tokenize_cmd->add_flag("--json", tok_json, "each line is a JSON string literal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto [sub, flags, name] : {std::tuple{ffn, &ffn_flags, "ffn"}, std::tuple{attn, &attn_flags, "attn"},
                                    std::tuple{prob, &prob_flags, "prob"}}) {
      if (!sub->parsed()) continue;
      if (!flags->config.empty()) apply_config_file(sub, flags->config);
      return run_probe(name, *flags);
    }
    if (train->parsed()) return run_slm_train(sf);
    if (report_cmd->parsed()) return run_report(report_in, report_out, formats);
    if (tokenize_cmd->parsed()) return run_tokenize(tok_vocab, tok_merges, tok_json);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
