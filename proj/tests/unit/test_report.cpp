#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "fixture.hpp"
#include "gazeprobe/probe.hpp"
#include "gazeprobe/random.hpp"
#include "gazeprobe/report.hpp"
#include "gazeprobe/svg.hpp"

using namespace gazeprobe;
using namespace gazeprobe::probe;

namespace {

// A 12 x 12 attention-shaped table with random values and a few undefined cells.
ProbeReport synthetic_report(std::uint64_t seed) {
  Rng rng(seed);
  ProbeReport r;
  r.probe = "attn";
  r.model = ModelInfo{12, 12, 768, 50257};
  r.sentences_processed = {{"NR", 300}, {"TSR", 390}};
  r.eligible_words = {{"NR", 6000}, {"TSR", 7000}};
  r.rejected.push_back({"TSR", 17, "too long"});
  r.skipped_models["lstm"] = "cannot open";
  CorrelationTable t;
  t.scope = "NR";
  t.measure = "TRT";
  for (int i = 1; i <= 12; ++i) {
    t.row_labels.push_back("L" + std::to_string(i));
    t.col_labels.push_back("H" + std::to_string(i));
  }
  for (int i = 0; i < 12; ++i) {
    t.cells.emplace_back();
    for (int j = 0; j < 12; ++j) {
      Cell c;
      c.result.metric = stats::Metric::Spearman;
      c.result.n = 100 + rng.below(50);
      if (rng.uniform() < 0.05) {
        c.result.degenerate = true;
        c.result.coefficient = std::numeric_limits<double>::quiet_NaN();
        c.result.p_value = std::numeric_limits<double>::quiet_NaN();
      } else {
        c.result.coefficient = rng.uniform(-1, 1);
        c.result.p_value = rng.uniform();
      }
      t.cells.back().push_back(c);
    }
  }
  r.tables.push_back(t);
  r.groups.push_back({"NR", "TRT", {"bottom", 1, 4}, 0.125});
  r.groups.push_back({"NR", "TRT", {"middle", 5, 8}, std::numeric_limits<double>::quiet_NaN()});
  return r;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Report, FormatDoubleRoundTrips) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(std::stod(report::format_double(v)), v);
  }
  EXPECT_EQ(report::format_double(std::numeric_limits<double>::quiet_NaN()), "NA");
  EXPECT_EQ(report::format_double(0.5), "0.5");
}

TEST(Report, CsvParsesBackToTheSameNumbers) {
  const auto r = synthetic_report(3);
  const auto& t = r.tables[0];
  for (auto field : {report::CsvField::Coefficient, report::CsvField::PValue, report::CsvField::N}) {
    const auto m = report::parse_csv(report::table_csv(t, field));
    EXPECT_EQ(m.row_labels, t.row_labels);
    EXPECT_EQ(m.col_labels, t.col_labels);
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t j = 0; j < 12; ++j) {
        const auto& c = t.cells[i][j].result;
        const double want = field == report::CsvField::Coefficient ? c.coefficient
                            : field == report::CsvField::PValue    ? c.p_value
                                                                   : static_cast<double>(c.n);
        EXPECT_TRUE(same(m.values[i][j], want)) << i << "," << j;
      }
    }
  }
}

TEST(Report, JsonRoundTripIsStable) {
  const auto r = synthetic_report(4);
  const std::string text = report::to_json(r);
  const auto back = report::from_json(text);
  EXPECT_EQ(report::to_json(back), text);
  ASSERT_EQ(back.tables.size(), 1u);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) {
      const auto& a = r.tables[0].cells[i][j].result;
      const auto& b = back.tables[0].cells[i][j].result;
      EXPECT_TRUE(same(a.coefficient, b.coefficient));
      EXPECT_EQ(a.degenerate, b.degenerate);
      EXPECT_EQ(a.n, b.n);
    }
  EXPECT_TRUE(std::isnan(back.groups[1].mean_coefficient));
  EXPECT_EQ(back.skipped_models, r.skipped_models);
  EXPECT_EQ(back.rejected.size(), 1u);
}

TEST(Report, UndefinedValuesAreJsonNull) {
  const auto text = report::to_json(synthetic_report(5));
  EXPECT_EQ(text.find("NaN"), std::string::npos);
  EXPECT_EQ(text.find("nan"), std::string::npos);
  EXPECT_NE(text.find("null"), std::string::npos);
}

TEST(Report, HeatmapHasOneCellPerEntry) {
  const auto r = synthetic_report(6);
  const std::string svg = svg::heatmap(r.tables[0], {.title = "attention"});
  const std::regex cell("class=\"cell[ \"]");
  const auto n = std::distance(std::sregex_iterator(svg.begin(), svg.end(), cell), std::sregex_iterator());
  EXPECT_EQ(n, 144);
  std::size_t degenerate = 0;
  for (const auto& row : r.tables[0].cells)
    for (const auto& c : row) degenerate += c.result.degenerate;
  const std::regex hatched("class=\"cell degenerate\"");
  EXPECT_EQ(static_cast<std::size_t>(std::distance(std::sregex_iterator(svg.begin(), svg.end(), hatched),
                                                   std::sregex_iterator())),
            degenerate);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Report, EmitWritesEveryFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "gazeprobe_emit_test";
  std::filesystem::remove_all(dir);
  auto r = synthetic_report(7);
  const auto files = report::emit_report(r, dir);
  const std::string stem = report::table_stem(r, r.tables[0]);
  EXPECT_EQ(stem, "attn_nr_trt");
  for (const auto& name : {stem + ".csv", stem + "_p.csv", stem + "_n.csv", stem + ".svg", std::string("attn_report.json")}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
    EXPECT_NE(std::ranges::find(files, dir / name), files.end()) << name;
  }
  EXPECT_EQ(slurp(dir / "attn_report.json"), report::to_json(r));

  const auto only_csv = dir / "csv_only";
  report::emit_report(r, only_csv, {report::Format::Csv});
  EXPECT_TRUE(std::filesystem::exists(only_csv / (stem + ".csv")));
  EXPECT_FALSE(std::filesystem::exists(only_csv / "attn_report.json"));
}

TEST(Report, PairsDumpHasOneLinePerPair) {
  const auto& toy = fixture::shared();
  ProbeConfig c;
  c.threads = 1;
  c.dump_pairs = true;
  c.task = TaskFilter::NR;
  c.measures = {gaze::Measure::TRT};
  const auto r = run_ffn_probe(c, toy.model, toy.corpus);
  const std::string tsv = report::pairs_tsv(r.pairs);
  EXPECT_EQ(static_cast<std::size_t>(std::ranges::count(tsv, '\n')), r.pairs.size() + 1);
  EXPECT_EQ(r.pairs.size(), r.tables[0].cells[0][0].result.n * 2);  // one measure, two layers
}
