#include "gazeprobe/align.hpp"

#include <cmath>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::align {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

void check_map(const AlignmentMap& map, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(map.token_count) != rows) {
    throw ShapeError("alignment covers " + std::to_string(map.token_count) + " tokens but the signal has " +
                     std::to_string(rows));
  }
}

}  // namespace

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string sentence_text(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string w = normalize_whitespace(words[i]);
    if (w.empty()) throw DataError("word " + std::to_string(i) + " is empty after whitespace normalization");
    if (i) out += ' ';
    out += w;
  }
  return out;
}

AlignmentMap align(const std::vector<std::string>& words, const std::vector<std::string>& token_texts) {
  const std::string text = sentence_text(words);
  // word_of[b] for every byte; separators belong to no word. Built from the
  // words themselves so a word with an inner space stays one word.
  std::vector<int> word_of;
  word_of.reserve(text.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w) word_of.push_back(-1);
    word_of.insert(word_of.end(), normalize_whitespace(words[w]).size(), static_cast<int>(w));
  }

  std::vector<int> owner(token_texts.size(), -1);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < token_texts.size(); ++t) {
    const std::string& tok = token_texts[t];
    for (std::size_t k = 0; k < tok.size(); ++k) {
      if (offset + k >= text.size() || text[offset + k] != tok[k]) {
        throw AlignmentError("tokens diverge from the sentence text at byte " + std::to_string(offset + k),
                             offset + k);
      }
    }
    std::size_t probe = offset;
    while (probe < text.size() && word_of[probe] < 0) ++probe;
    owner[t] = probe < text.size() ? word_of[probe] : static_cast<int>(words.size()) - 1;
    offset += tok.size();
  }
  if (offset != text.size()) {
    throw AlignmentError("tokens end at byte " + std::to_string(offset) + " of " + std::to_string(text.size()),
                         offset);
  }

  AlignmentMap map;
  map.token_count = token_texts.size();
  map.spans.assign(words.size(), Span{});
  std::vector<bool> seen(words.size(), false);
  for (std::size_t t = 0; t < owner.size(); ++t) {
    const auto w = static_cast<std::size_t>(owner[t]);
    if (!seen[w]) {
      map.spans[w] = Span{t, t + 1};
      seen[w] = true;
    } else {
      map.spans[w].end = t + 1;
    }
  }
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (!seen[w]) throw AlignmentError("word " + std::to_string(w) + " received no token", 0);
  }
  return map;
}

std::string_view reduction_name(FfnReduction r) {
  switch (r) {
    case FfnReduction::L2Mean: return "l2mean";
    case FfnReduction::L2OfAll: return "l2all";
    case FfnReduction::MeanAbs: return "meanabs";
  }
  return "?";
}

std::string_view attn_mode_name(AttnMode m) { return m == AttnMode::ReceivedMass ? "mass" : "massnorm"; }

std::optional<FfnReduction> parse_reduction(std::string_view s) {
  for (auto r : {FfnReduction::L2Mean, FfnReduction::L2OfAll, FfnReduction::MeanAbs}) {
    if (reduction_name(r) == s) return r;
  }
  return std::nullopt;
}

std::optional<AttnMode> parse_attn_mode(std::string_view s) {
  if (s == "mass") return AttnMode::ReceivedMass;
  if (s == "massnorm") return AttnMode::ReceivedMassNormalized;
  return std::nullopt;
}

std::vector<double> ffn_word_scalars(const Matrix& ffn_out, const AlignmentMap& map, FfnReduction reduction) {
  check_map(map, ffn_out.rows());
  std::vector<double> out;
  out.reserve(map.spans.size());
  for (const Span& s : map.spans) {
    const auto rows = ffn_out.middleRows(static_cast<Eigen::Index>(s.begin), static_cast<Eigen::Index>(s.size()));
    double v = 0.0;
    switch (reduction) {
      case FfnReduction::L2Mean:
        v = rows.rowwise().norm().sum() / static_cast<double>(s.size());
        break;
      case FfnReduction::L2OfAll:
        v = rows.norm();
        break;
      case FfnReduction::MeanAbs:
        v = rows.cwiseAbs().sum() / static_cast<double>(rows.size());
        break;
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> ffn_word_scalars(const gpt2::Trace& trace, const AlignmentMap& map, int layer,
                                     FfnReduction reduction) {
  if (layer < 1 || layer > static_cast<int>(trace.ffn_out.size())) {
    throw Error("ffn_word_scalars: layer " + std::to_string(layer) + " outside 1.." +
                std::to_string(trace.ffn_out.size()));
  }
  return ffn_word_scalars(trace.ffn_out[static_cast<std::size_t>(layer - 1)], map, reduction);
}

std::vector<double> attn_word_scalars(const Matrix& weights, const AlignmentMap& map, AttnMode mode) {
  check_map(map, weights.rows());
  const RowVector received = weights.colwise().sum();
  const auto T = static_cast<double>(map.token_count);
  std::vector<double> out;
  out.reserve(map.spans.size());
  for (const Span& s : map.spans) {
    double v = received.segment(static_cast<Eigen::Index>(s.begin), static_cast<Eigen::Index>(s.size())).sum();
    // Queries at or after the span start can see it.
    if (mode == AttnMode::ReceivedMassNormalized) v /= (T - static_cast<double>(s.begin));
    out.push_back(v);
  }
  return out;
}

std::vector<double> attn_word_scalars(const gpt2::Trace& trace, const AlignmentMap& map, int layer, int head,
                                      AttnMode mode) {
  if (layer < 1 || layer > static_cast<int>(trace.attn.size())) {
    throw Error("attn_word_scalars: layer " + std::to_string(layer) + " outside 1.." +
                std::to_string(trace.attn.size()));
  }
  const auto& heads = trace.attn[static_cast<std::size_t>(layer - 1)];
  if (head < 1 || head > static_cast<int>(heads.size())) {
    throw Error("attn_word_scalars: head " + std::to_string(head) + " outside 1.." +
                std::to_string(heads.size()));
  }
  return attn_word_scalars(heads[static_cast<std::size_t>(head - 1)], map, mode);
}

std::optional<double> word_logprob(std::span<const double> token_logprobs, const AlignmentMap& map,
                                   std::size_t word_index) {
  if (word_index == 0) return std::nullopt;
  if (word_index >= map.spans.size()) {
    throw Error("word_logprob: word " + std::to_string(word_index) + " out of range");
  }
  if (token_logprobs.size() != map.token_count) {
    throw ShapeError("word_logprob: token log-probabilities do not match the alignment");
  }
  const Span& s = map.spans[word_index];
  double total = 0.0;
  for (std::size_t t = s.begin; t < s.end; ++t) total += token_logprobs[t];
  return total;
}

std::optional<double> word_logprob(const gpt2::Trace& trace, const AlignmentMap& map, std::size_t word_index) {
  const auto lp = token_logprobs(trace);
  return word_logprob(lp, map, word_index);
}

std::vector<double> token_logprobs(const gpt2::Trace& trace) {
  std::vector<double> out(trace.length(), 0.0);
  for (std::size_t t = 1; t < trace.length(); ++t) {
    const RowVector lp = gpt2::next_token_logprobs(trace, t - 1);
    out[t] = lp(trace.tokens[t]);
  }
  return out;
}

}  // namespace gazeprobe::align
