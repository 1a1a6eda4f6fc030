#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gazeprobe/gaze.hpp"
#include "gazeprobe/gpt2.hpp"
#include "gazeprobe/tensor.hpp"

namespace gazeprobe::align {

// Half-open token range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

// One span per word; the spans partition [0, token_count).
struct AlignmentMap {
  std::vector<Span> spans;
  std::size_t token_count = 0;
};

// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

// Words joined by single spaces after normalization. Throws DataError on an
// empty word.
std::string sentence_text(const std::vector<std::string>& words);

// Assigns each token to the word holding its first non-space byte. Token
// texts are raw bytes and must concatenate to sentence_text(words); otherwise
// AlignmentError reports the first divergent byte offset.
AlignmentMap align(const std::vector<std::string>& words, const std::vector<std::string>& token_texts);

enum class FfnReduction { L2Mean, L2OfAll, MeanAbs };
enum class AttnMode { ReceivedMass, ReceivedMassNormalized };

std::string_view reduction_name(FfnReduction r);
std::string_view attn_mode_name(AttnMode m);
std::optional<FfnReduction> parse_reduction(std::string_view s);
std::optional<AttnMode> parse_attn_mode(std::string_view s);

// Word scalars from one layer's T x d FFN output.
std::vector<double> ffn_word_scalars(const Matrix& ffn_out, const AlignmentMap& map, FfnReduction reduction);
// `layer` is 1-based.
std::vector<double> ffn_word_scalars(const gpt2::Trace& trace, const AlignmentMap& map, int layer,
                                     FfnReduction reduction);

// Attention received by each word's span from all query positions.
std::vector<double> attn_word_scalars(const Matrix& weights, const AlignmentMap& map, AttnMode mode);
// `layer` and `head` are 1-based.
std::vector<double> attn_word_scalars(const gpt2::Trace& trace, const AlignmentMap& map, int layer, int head,
                                      AttnMode mode);

// token_logprobs[t] = log p(token t | tokens < t); entry 0 is unused.
// nullopt for the sentence-initial word.
std::optional<double> word_logprob(std::span<const double> token_logprobs, const AlignmentMap& map,
                                   std::size_t word_index);
std::optional<double> word_logprob(const gpt2::Trace& trace, const AlignmentMap& map, std::size_t word_index);

// log p of every token given its prefix, read off the trace.
std::vector<double> token_logprobs(const gpt2::Trace& trace);

}  // namespace gazeprobe::align
