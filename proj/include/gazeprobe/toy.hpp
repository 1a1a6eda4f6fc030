#pragma once

// Small synthetic inputs: a grammar-generated corpus, a byte-level BPE
// tokenizer learned from it, a random checkpoint and a gaze table. Used by
// the fixture tool, the tests and the demo.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazeprobe/bpe.hpp"
#include "gazeprobe/gaze.hpp"

namespace gazeprobe::toy {

// Sentences from a tiny English-like grammar, words split on spaces; the
// last word carries the full stop.
std::vector<std::vector<std::string>> grammar_sentences(std::size_t n, std::uint64_t seed);

struct TokenizerData {
  std::unordered_map<std::string, bpe::TokenId> vocab;
  std::vector<bpe::BpeTokenizer::Merge> merges;
};

// Byte-level BPE: the 256 byte symbols, then up to n_merges greedy merges
// (most frequent pair, ties broken lexicographically).
TokenizerData learn_tokenizer(const std::vector<std::string>& texts, int n_merges);
void write_tokenizer(const TokenizerData& data, const std::filesystem::path& vocab_json,
                     const std::filesystem::path& merges_txt);

// Per-participant readings whose durations grow with word length and shrink
// with word frequency in the corpus; some words are skipped (undefined).
gaze::GazeCorpus gaze_corpus(const std::vector<std::vector<std::string>>& nr,
                             const std::vector<std::vector<std::string>>& tsr, int participants,
                             std::uint64_t seed);

struct FixtureOptions {
  int n_layer = 2;
  int n_head = 2;
  int d_model = 16;
  int max_positions = 64;
  std::size_t sentences_per_task = 12;
  int participants = 3;
  int merges = 60;
  std::uint64_t seed = 7;
};

struct FixturePaths {
  std::filesystem::path weights, vocab, merges, gaze;
};

FixturePaths write_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

}  // namespace gazeprobe::toy
