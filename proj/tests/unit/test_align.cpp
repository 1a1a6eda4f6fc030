#include <gtest/gtest.h>

#include "gazeprobe/align.hpp"
#include "gazeprobe/errors.hpp"

using namespace gazeprobe::align;
using gazeprobe::AlignmentError;
using gazeprobe::DataError;
using gazeprobe::Error;
using gazeprobe::Matrix;
using gazeprobe::ShapeError;

namespace {

std::vector<Span> spans(const std::vector<std::string>& words, const std::vector<std::string>& toks) {
  return align(words, toks).spans;
}

}  // namespace

TEST(Align, SentenceTextNormalizesWhitespace) {
  EXPECT_EQ(sentence_text({" The", "cat\t", "sat."}), "The cat sat.");
  EXPECT_EQ(normalize_whitespace("  a \n\t b  "), "a b");
  EXPECT_THROW(sentence_text({"a", "  "}), DataError);
}

TEST(Align, TokensJoinTheWordOfTheirFirstNonSpaceByte) {
  using S = std::vector<Span>;
  EXPECT_EQ(spans({"The", "cat", "sat."}, {"The", " cat", " sat", "."}), (S{{0, 1}, {1, 2}, {2, 4}}));
  // A bare space token attaches to the following word.
  EXPECT_EQ(spans({"a", "b"}, {"a", " ", "b"}), (S{{0, 1}, {1, 3}}));
  // One token may not straddle two words, but a word may take many tokens.
  EXPECT_EQ(spans({"unbelievable", "x"}, {"un", "bel", "iev", "able", " x"}), (S{{0, 4}, {4, 5}}));
}

TEST(Align, WordWithInnerSpaceStaysOneWord) {
  using S = std::vector<Span>;
  EXPECT_EQ(spans({"New York", "is", "big"}, {"New", " York", " is", " big"}), (S{{0, 2}, {2, 3}, {3, 4}}));
}

TEST(Align, DivergenceReportsByteOffset) {
  try {
    align({"The", "cat"}, {"The", " cot"});
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
  EXPECT_THROW(align({"The", "cat"}, {"The", " ca"}), AlignmentError);
  EXPECT_THROW(align({"The", "cat"}, {"The", " cat", "s"}), AlignmentError);
}

TEST(Align, PartialUtf8TokensAlignByBytes) {
  // "é" split across two byte-level tokens.
  const std::string e = "\xC3\xA9";
  EXPECT_EQ(spans({"caf" + e, "ok"}, {"caf", "\xC3", "\xA9", " ok"}), (std::vector<Span>{{0, 3}, {3, 4}}));
}

TEST(Align, FfnReductions) {
  AlignmentMap map{{{0, 1}, {1, 3}}, 3};
  Matrix f(3, 2);
  f << 3, 4,   // norm 5
      0, 1,    // norm 1
      0, -2;   // norm 2
  EXPECT_EQ(ffn_word_scalars(f, map, FfnReduction::L2Mean), (std::vector<double>{5.0, 1.5}));
  EXPECT_NEAR(ffn_word_scalars(f, map, FfnReduction::L2OfAll)[1], std::sqrt(5.0), 1e-15);
  EXPECT_EQ(ffn_word_scalars(f, map, FfnReduction::MeanAbs), (std::vector<double>{3.5, 0.75}));
  EXPECT_THROW(ffn_word_scalars(Matrix::Zero(2, 2), map, FfnReduction::L2Mean), ShapeError);
}

TEST(Align, AttentionReceivedMass) {
  AlignmentMap map{{{0, 1}, {1, 3}}, 3};
  Matrix a(3, 3);
  a << 1, 0, 0,
      0.5, 0.5, 0,
      0.2, 0.3, 0.5;
  const auto mass = attn_word_scalars(a, map, AttnMode::ReceivedMass);
  EXPECT_NEAR(mass[0], 1.7, 1e-15);
  EXPECT_NEAR(mass[1], 1.3, 1e-15);
  const auto norm = attn_word_scalars(a, map, AttnMode::ReceivedMassNormalized);
  EXPECT_NEAR(norm[0], 1.7 / 3, 1e-15);
  EXPECT_NEAR(norm[1], 1.3 / 2, 1e-15);
}

TEST(Align, WordLogprobSumsSpanAndSkipsFirstWord) {
  AlignmentMap map{{{0, 2}, {2, 3}, {3, 5}}, 5};
  const std::vector<double> lp{0.0, -1.0, -2.0, -0.5, -0.25};
  EXPECT_FALSE(word_logprob(lp, map, 0));
  EXPECT_EQ(*word_logprob(lp, map, 1), -2.0);
  EXPECT_EQ(*word_logprob(lp, map, 2), -0.75);
  EXPECT_THROW(word_logprob(lp, map, 3), Error);
}

TEST(Align, ModeNames) {
  EXPECT_EQ(parse_reduction("l2all"), FfnReduction::L2OfAll);
  EXPECT_EQ(parse_attn_mode("massnorm"), AttnMode::ReceivedMassNormalized);
  EXPECT_FALSE(parse_reduction("mean"));
  EXPECT_EQ(reduction_name(FfnReduction::MeanAbs), "meanabs");
}
