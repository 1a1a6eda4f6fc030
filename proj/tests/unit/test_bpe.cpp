#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fuzz.hpp"
#include "gazeprobe/bpe.hpp"
#include "gazeprobe/errors.hpp"
#include "gazeprobe/toy.hpp"

using namespace gazeprobe;

namespace {

std::vector<std::string> pieces(std::string_view s) {
  std::vector<std::string> out;
  for (auto p : bpe::pretokenize(s)) out.emplace_back(p);
  return out;
}

bpe::BpeTokenizer toy_tokenizer() {
  const auto data = toy::learn_tokenizer({"the cat sat on the mat.", "the dog's toy isn't there", "1234 5678"}, 40);
  return bpe::BpeTokenizer(data.vocab, data.merges);
}

}  // namespace

// Expected splits produced by the reference regex engine on the GPT-2 pattern.
TEST(Bpe, PretokenizeMatchesGpt2Pattern) {
  using V = std::vector<std::string>;
  EXPECT_EQ(pieces("Hello world"), (V{"Hello", " world"}));
  EXPECT_EQ(pieces("I'm here, isn't it?"), (V{"I", "'m", " here", ",", " isn", "'t", " it", "?"}));
  EXPECT_EQ(pieces("  two  spaces  "), (V{" ", " two", " ", " spaces", "  "}));
  EXPECT_EQ(pieces("tabs\t\tand\nnewlines\n"), (V{"tabs", "\t", "\t", "and", "\n", "newlines", "\n"}));
  EXPECT_EQ(pieces("numbers 12345 and 3.14"), (V{"numbers", " 12345", " and", " 3", ".", "14"}));
  EXPECT_EQ(pieces("ünïcödé wörds 日本語"), (V{"ünïcödé", " wörds", " 日本語"}));
  EXPECT_EQ(pieces("they'll've 'D"), (V{"they", "'ll", "'ve", " '", "D"}));
  EXPECT_EQ(pieces("end   "), (V{"end", "   "}));
  EXPECT_EQ(pieces("a  b"), (V{"a", " ", " b"}));
  EXPECT_EQ(pieces("!!! ???"), (V{"!!!", " ???"}));
  EXPECT_EQ(pieces("x\r\n y"), (V{"x", "\r\n", " y"}));
  EXPECT_TRUE(pieces("").empty());
}

TEST(Bpe, ByteTableIsGpt2Map) {
  const auto& t = bpe::byte_to_unicode();
  EXPECT_EQ(t['A'], U'A');
  EXPECT_EQ(t[' '], U'Ġ');  // Ġ
  EXPECT_EQ(t['\n'], U'Ċ');  // Ċ
  EXPECT_EQ(t[0], U'Ā');
  EXPECT_EQ(t[0xAD], U'Ń');
  std::vector<char32_t> sorted(t.begin(), t.end());
  std::ranges::sort(sorted);
  EXPECT_EQ(std::ranges::adjacent_find(sorted), sorted.end());
}

TEST(Bpe, MergesApplyByRank) {
  const auto tok = toy_tokenizer();
  const auto ids = tok.encode("the cat");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(tok.token_bytes(ids[0]), "the");
  EXPECT_EQ(tok.token_bytes(ids[1]), " cat");
  // A word never seen in training falls back to smaller pieces.
  EXPECT_GT(tok.encode("zebra").size(), 1u);
  EXPECT_EQ(tok.decode(tok.encode("zebra")), "zebra");
}

TEST(Bpe, FuzzRoundTrip) {
  const auto tok = toy_tokenizer();
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const std::string s = fuzz::utf8_string(rng);
    ASSERT_EQ(tok.decode(tok.encode(s)), s);
  }
}

TEST(Bpe, ArbitraryBytesRoundTrip) {
  const auto tok = toy_tokenizer();
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (std::size_t n = rng.below(30); n > 0; --n) s += static_cast<char>(rng.below(256));
    ASSERT_EQ(tok.decode(tok.encode(s)), s);
  }
}

TEST(Bpe, LoadsFilesAndValidates) {
  const auto dir = std::filesystem::temp_directory_path() / "gazeprobe_bpe_test";
  std::filesystem::create_directories(dir);
  const auto data = toy::learn_tokenizer({"hello hello world"}, 10);
  toy::write_tokenizer(data, dir / "vocab.json", dir / "merges.txt");
  const auto tok = bpe::BpeTokenizer::load(dir / "vocab.json", dir / "merges.txt");
  EXPECT_EQ(tok.merge_count(), data.merges.size());
  EXPECT_EQ(tok.vocab_size(), data.vocab.size());
  EXPECT_EQ(tok.decode(tok.encode("hello world")), "hello world");

  std::ofstream(dir / "bad_merges.txt") << "#version\nab\n";
  EXPECT_THROW(bpe::BpeTokenizer::load(dir / "vocab.json", dir / "bad_merges.txt"), Error);
  std::ofstream(dir / "bad_vocab.json") << "{\"a\": 0}";
  EXPECT_THROW(bpe::BpeTokenizer::load(dir / "bad_vocab.json", dir / "merges.txt"), Error);
  std::filesystem::remove_all(dir);
}
