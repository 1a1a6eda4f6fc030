#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/gaze.hpp"
#include "gazeprobe/random.hpp"
#include "gazeprobe/toy.hpp"

using namespace gazeprobe;
using namespace gazeprobe::gaze;

namespace {

const std::string kHeader = "task\tsentence_id\tword_index\tword\tparticipant\tgd_ms\ttrt_ms\tffd_ms\tsfd_ms\tgpt_ms\n";

GazeCorpus parse(const std::string& body) {
  std::istringstream in(kHeader + body);
  return parse_corpus(in, "t.tsv");
}

std::string error_of(const std::string& body) {
  try {
    parse(body);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

const std::string kSmall =
    "NR\t1\t0\tThe\tA\t200\t250\t200\t200\t200\n"
    "NR\t1\t0\tThe\tB\t\t\t\t\t\n"
    "NR\t1\t1\tcat.\tA\t300\t400\t180\t\t350\n"
    "NR\t1\t1\tcat.\tB\t100\t100\t100\t100\t100\n"
    "TSR\t4\t0\tDogs\tA\t150\t150\t150\t150\t150\n"
    "TSR\t4\t1\tbark\tA\t\t90\t\t\t\n"
    "TSR\t4\t2\tloudly.\tA\t210\t210\t100\t\t300\n";

}  // namespace

TEST(Gaze, ParsesRowsIntoSentences) {
  const auto c = parse(kSmall);
  ASSERT_EQ(c.sentences().size(), 2u);
  EXPECT_EQ(c.participants(), (std::vector<std::string>{"A", "B"}));
  const auto& s = c.sentences()[0];
  EXPECT_EQ(s.task, Task::NR);
  EXPECT_EQ(s.surfaces(), (std::vector<std::string>{"The", "cat."}));
  EXPECT_EQ(*s.words[1].participants.at("A")[Measure::TRT], 400.0);
  EXPECT_FALSE(s.words[1].participants.at("A")[Measure::SFD]);
  EXPECT_FALSE(s.words[0].participants.at("B")[Measure::GD]);
  EXPECT_EQ(c.sentence_count(Task::TSR), 1u);
}

TEST(Gaze, AcceptsBomAndCrlf) {
  std::istringstream in("\xEF\xBB\xBF" + kHeader + "NR\t1\t0\tHi\tA\t1\t1\t1\t1\t1\r\n");
  EXPECT_EQ(parse_corpus(in).sentences().size(), 1u);
}

TEST(Gaze, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t200\n").find(":2:"), std::string::npos);
  EXPECT_NE(error_of(kSmall + "XX\t1\t2\tx\tA\t1\t1\t1\t1\t1\n").find(":9:"), std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\tabc\t1\t1\t1\t1\n").find("gd_ms"), std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t-5\t1\t1\t1\t1\n").find(":2:"), std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t1\t10\t1\t20\t1\n").find("sfd"), std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t1\t1\t1\t1\t1\nNR\t1\t0\tThe\tA\t1\t1\t1\t1\t1\n").find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t1\t1\t1\t1\t1\nNR\t1\t0\tA\tB\t1\t1\t1\t1\t1\n").find("conflicts"),
            std::string::npos);
  EXPECT_NE(error_of("NR\t1\t0\tThe\tA\t1\t1\t1\t1\t1\nNR\t1\t2\tx\tA\t1\t1\t1\t1\t1\n").find("word_index 1"),
            std::string::npos);
  std::istringstream bad_header("task\tsentence\n");
  EXPECT_THROW(parse_corpus(bad_header), DataError);
  EXPECT_THROW(load_corpus("/nonexistent.tsv"), DataError);
}

TEST(Gaze, WriteThenParseRoundTrips) {
  const auto c = parse(kSmall);
  std::ostringstream out;
  write_corpus(c, out);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_corpus(in), c);
}

TEST(Gaze, DefinedOnlyMeanSkipsMissingValues) {
  const auto c = parse(kSmall);
  const auto gd = aggregate(c, Measure::GD);
  EXPECT_EQ(gd.at({Task::NR, 1, 0}), 200.0);
  EXPECT_EQ(gd.at({Task::NR, 1, 1}), 200.0);
  EXPECT_FALSE(gd.contains({Task::TSR, 4, 1}));
  const auto sfd = aggregate(c, Measure::SFD, AggregationPolicy::DefinedOnlyMean, 2);
  EXPECT_FALSE(sfd.contains({Task::NR, 1, 0}));  // only one reader defined
  EXPECT_FALSE(sfd.contains({Task::NR, 1, 1}));
  EXPECT_THROW(aggregate(c, Measure::GD, AggregationPolicy::DefinedOnlyMean, 0), DataError);
}

TEST(Gaze, ZeroFillCountsSkipsAsZero) {
  const auto c = parse(kSmall);
  const auto gd = aggregate(c, Measure::GD, AggregationPolicy::ZeroFillMean);
  EXPECT_EQ(gd.at({Task::NR, 1, 0}), 100.0);
  EXPECT_EQ(gd.at({Task::TSR, 4, 1}), 0.0);
  EXPECT_EQ(gd.size(), 5u);
}

TEST(Gaze, EligibleWordsExcludeSentenceInitial) {
  const auto c = parse(kSmall);
  EXPECT_EQ(word_count(c, Task::NR), 1u);
  EXPECT_EQ(word_count(c, Task::TSR), 2u);
  EXPECT_EQ(word_count(c, Task::TSR, Eligibility::All), 3u);
}

TEST(Gaze, RowOrderDoesNotChangeAggregates) {
  const auto nr = toy::grammar_sentences(6, 1), tsr = toy::grammar_sentences(6, 2);
  const auto corpus = toy::gaze_corpus(nr, tsr, 4, 3);
  std::ostringstream out;
  write_corpus(corpus, out);
  std::istringstream lines_in(out.str());
  std::string header, line;
  std::getline(lines_in, header);
  std::vector<std::string> rows;
  while (std::getline(lines_in, line)) rows.push_back(line);
  Rng rng(4);
  rng.shuffle(rows.begin(), rows.end());
  std::string shuffled = header + "\n";
  for (const auto& r : rows) shuffled += r + "\n";
  std::istringstream in(shuffled);
  const auto again = parse_corpus(in);
  EXPECT_EQ(again, corpus);
  for (auto m : kAllMeasures) {
    for (auto p : {AggregationPolicy::DefinedOnlyMean, AggregationPolicy::ZeroFillMean}) {
      EXPECT_EQ(aggregate(again, m, p), aggregate(corpus, m, p));
    }
  }
}

TEST(Gaze, MeasureAndTaskNames) {
  EXPECT_EQ(parse_measure("gd"), Measure::GD);
  EXPECT_EQ(parse_measure("GPT"), Measure::GPT);
  EXPECT_FALSE(parse_measure("xyz"));
  EXPECT_EQ(measure_name(Measure::SFD), "SFD");
  EXPECT_EQ(parse_task("TSR"), Task::TSR);
}
