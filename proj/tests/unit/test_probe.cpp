#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>
#include <sstream>

#include "fixture.hpp"
#include "gazeprobe/errors.hpp"
#include "gazeprobe/gptw.hpp"
#include "gazeprobe/ngram.hpp"
#include "gazeprobe/probe.hpp"
#include "gazeprobe/random.hpp"
#include "gazeprobe/report.hpp"

using namespace gazeprobe;
using namespace gazeprobe::probe;

namespace {

ProbeConfig config_for(const fixture::Toy& toy) {
  ProbeConfig c;
  c.weights = toy.paths.weights;
  c.vocab = toy.paths.vocab;
  c.merges = toy.paths.merges;
  c.gaze = toy.paths.gaze;
  c.threads = 1;
  return c;
}

std::vector<NamedWordModel> ngram_model() {
  std::vector<std::vector<std::string>> corpus = toy::grammar_sentences(200, 99);
  return {{"ngram", std::make_shared<slm::NGramModel>(slm::NGramModel::train(corpus, slm::NGramConfig{}))}};
}

std::vector<std::vector<double>> coefficients(const ProbeReport& r) {
  std::vector<std::vector<double>> out;
  for (const auto& t : r.tables)
    for (const auto& row : t.cells) {
      out.emplace_back();
      for (const auto& c : row) out.back().push_back(c.result.coefficient);
    }
  return out;
}

}  // namespace

TEST(Probe, LayerGroupsForTwelveLayers) {
  const auto g = layer_groups(12);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].name, "bottom");
  EXPECT_EQ(std::pair(g[0].first, g[0].last), std::pair(1, 4));
  EXPECT_EQ(std::pair(g[1].first, g[1].last), std::pair(5, 8));
  EXPECT_EQ(std::pair(g[2].first, g[2].last), std::pair(9, 12));
}

TEST(Probe, LayerGroupsPartitionAnyDepth) {
  for (int L = 1; L <= 48; ++L) {
    const auto g = layer_groups(L);
    int next = 1;
    for (const auto& grp : g) {
      EXPECT_EQ(grp.first, next) << L;
      EXPECT_GE(grp.last, grp.first - 1) << L;
      next = grp.last + 1;
    }
    EXPECT_EQ(next, L + 1) << L;
  }
}

TEST(Probe, FfnTablesHaveOneColumnPerLayer) {
  const auto& toy = fixture::shared();
  const auto r = run_ffn_probe(config_for(toy), toy.model, toy.corpus);
  ASSERT_EQ(r.tables.size(), 3u);  // NR, TSR, both
  for (const auto& t : r.tables) {
    EXPECT_EQ(t.row_labels.size(), 5u);
    EXPECT_EQ(t.col_labels, (std::vector<std::string>{"L1", "L2"}));
    for (const auto& row : t.cells)
      for (const auto& c : row) EXPECT_FALSE(c.result.degenerate);
  }
  EXPECT_EQ(r.groups.size(), 3u * 5u * 3u);
  EXPECT_EQ(r.sentences_processed.at("NR"), 12u);
  EXPECT_TRUE(r.rejected.empty());
}

TEST(Probe, ReportBytesAreDeterministicAcrossThreadCounts) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  const std::string a = report::to_json(run_attention_probe(c, toy.model, toy.corpus));
  const std::string b = report::to_json(run_attention_probe(c, toy.model, toy.corpus));
  c.threads = 4;
  const std::string d = report::to_json(run_attention_probe(c, toy.model, toy.corpus));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, d);
}

TEST(Probe, SentenceProcessingOrderDoesNotMatter) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  const auto base = run_ffn_probe(c, toy.model, toy.corpus);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    c.shuffle_order = seed;
    c.threads = 3;
    EXPECT_EQ(report::to_json(run_ffn_probe(c, toy.model, toy.corpus)), report::to_json(base));
  }
}

TEST(Probe, ShuffledInputRowsGiveIdenticalCoefficients) {
  const auto& toy = fixture::shared();
  std::ifstream in(toy.paths.gaze);
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  Rng rng(8);
  rng.shuffle(rows.begin(), rows.end());
  std::stringstream shuffled;
  shuffled << header << "\n";
  for (const auto& r : rows) shuffled << r << "\n";
  const auto corpus2 = gaze::parse_corpus(shuffled);
  const auto c = config_for(toy);
  EXPECT_EQ(coefficients(run_attention_probe(c, toy.model, corpus2)),
            coefficients(run_attention_probe(c, toy.model, toy.corpus)));
}

TEST(Probe, EveryCellRecomputesFromDumpedPairs) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  c.dump_pairs = true;
  c.metric = stats::Metric::Kendall;
  const auto r = run_attention_probe(c, toy.model, toy.corpus);
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> pools;
  for (const auto& p : r.pairs) {
    auto& pool = pools[{p.scope, p.signal, p.measure}];
    pool.first.push_back(p.model_value);
    pool.second.push_back(p.gaze_value);
  }
  std::size_t checked = 0;
  for (const auto& t : r.tables) {
    for (std::size_t i = 0; i < t.cells.size(); ++i) {
      for (std::size_t j = 0; j < t.cells[i].size(); ++j) {
        const std::string signal = "attn/" + t.row_labels[i] + "/" + t.col_labels[j] + "/mass";
        const auto& pool = pools.at({t.scope, signal, t.measure});
        const auto again = stats::kendall_tau_b(pool.first, pool.second);
        EXPECT_EQ(again.coefficient, t.cells[i][j].result.coefficient);
        EXPECT_EQ(again.p_value, t.cells[i][j].result.p_value);
        EXPECT_EQ(again.n, t.cells[i][j].result.n);
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 3u * 5u * 2u * 2u);
}

TEST(Probe, RankMetricsIgnoreProbabilityTransform) {
  const auto& toy = fixture::shared();
  for (auto metric : {stats::Metric::Spearman, stats::Metric::Kendall}) {
    auto c = config_for(toy);
    c.metric = metric;
    const auto shallow = ngram_model();
    const auto logp = run_prob_probe(c, &toy.model, shallow, toy.corpus);
    c.prob_transform = ProbTransform::P;
    const auto p = run_prob_probe(c, &toy.model, shallow, toy.corpus);
    const auto a = coefficients(logp), b = coefficients(p);
    ASSERT_EQ(a.size(), 2u);  // gpt2 and ngram rows
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) EXPECT_NEAR(a[i][j], b[i][j], 1e-12);
  }
}

TEST(Probe, ProbTableLayout) {
  const auto& toy = fixture::shared();
  const auto r = run_prob_probe(config_for(toy), &toy.model, ngram_model(), toy.corpus);
  ASSERT_EQ(r.tables.size(), 1u);
  const auto& t = r.tables[0];
  EXPECT_EQ(t.row_labels, (std::vector<std::string>{"gpt2", "ngram"}));
  ASSERT_EQ(t.col_labels.size(), 15u);
  EXPECT_EQ(t.col_labels[0], "NR/GD");
  EXPECT_EQ(t.col_labels[5], "TSR/GD");
  // Sentence-initial words have no prediction: n counts eligible words with gaze data.
  EXPECT_LE(t.cells[0][0].result.n, r.eligible_words.at("NR"));
}

TEST(Probe, ConstantFfnOutputFlagsEveryCell) {
  auto tensors = gptw::read(fixture::shared().paths.weights);
  for (auto& t : tensors) {
    if (t.name.find("mlp.c_proj") != std::string::npos) std::ranges::fill(t.tensor.data(), 0.0);
  }
  auto model = gpt2::Model::from_tensors(tensors);
  model.set_tokenizer(fixture::shared().model.tokenizer());
  const auto r = run_ffn_probe(config_for(fixture::shared()), model, fixture::shared().corpus);
  for (const auto& t : r.tables)
    for (const auto& row : t.cells)
      for (const auto& c : row) EXPECT_TRUE(c.result.degenerate);
  for (const auto& g : r.groups) EXPECT_TRUE(std::isnan(g.mean_coefficient));
}

TEST(Probe, OverlongSentencesAreCountedNotDropped) {
  toy::FixtureOptions o;
  o.max_positions = 10;
  const auto toy = fixture::make("short_context", o);
  const auto r = run_ffn_probe(config_for(toy), toy.model, toy.corpus);
  ASSERT_FALSE(r.rejected.empty());
  std::size_t processed = 0;
  for (const auto& [task, n] : r.sentences_processed) processed += n;
  EXPECT_EQ(processed + r.rejected.size(), toy.corpus.sentences().size());
  EXPECT_NE(r.rejected[0].reason.find("max_positions"), std::string::npos);
}

TEST(Probe, UnloadableShallowModelIsSkippedWithDiagnostic) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  c.slm_models = {toy.dir / "missing_model.json"};
  const auto r = run_prob_probe(c);
  ASSERT_EQ(r.skipped_models.size(), 1u);
  EXPECT_TRUE(r.skipped_models.contains("missing_model"));
  EXPECT_EQ(r.tables[0].row_labels, (std::vector<std::string>{"gpt2"}));
  c.weights.clear();
  EXPECT_THROW(run_prob_probe(c), ModelError);
}

TEST(Probe, PerSentencePoolingIsLabelled) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  c.pooling = Pooling::PerSentence;
  c.task = TaskFilter::NR;
  const auto r = run_ffn_probe(c, toy.model, toy.corpus);
  ASSERT_EQ(r.tables.size(), 1u);
  EXPECT_EQ(r.tables[0].scope, "NR");
  const auto& cell = r.tables[0].cells[0][0].result;
  EXPECT_FALSE(cell.degenerate);
  EXPECT_LE(cell.n, 12u);  // one coefficient per sentence
  EXPECT_NE(report::to_json(r).find("\"per-sentence\""), std::string::npos);
}

TEST(Probe, CrossCheckAddsTheOtherMetrics) {
  const auto& toy = fixture::shared();
  auto c = config_for(toy);
  c.cross_check = true;
  const auto r = run_ffn_probe(c, toy.model, toy.corpus);
  const auto& cell = r.tables[0].cells[0][0];
  ASSERT_EQ(cell.cross.size(), 2u);
  EXPECT_EQ(cell.cross[0].metric, stats::Metric::Pearson);
  EXPECT_EQ(cell.cross[1].metric, stats::Metric::Kendall);
}
