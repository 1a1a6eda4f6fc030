#include "gazeprobe/toy.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "gazeprobe/align.hpp"
#include "gazeprobe/errors.hpp"
#include "gazeprobe/gpt2.hpp"
#include "gazeprobe/gptw.hpp"
#include "gazeprobe/random.hpp"
#include "json.hpp"

namespace gazeprobe::toy {

namespace {

template <std::size_t N>
std::string pick(Rng& rng, const std::array<std::string_view, N>& words) {
  return std::string(words[rng.below(N)]);
}

std::string utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> grammar_sentences(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 4> det = {"the", "a", "every", "one"};
  static constexpr std::array<std::string_view, 6> adj = {"small", "old", "quiet", "bright", "green", "lazy"};
  static constexpr std::array<std::string_view, 8> noun = {"cat", "dog", "teacher", "river",
                                                           "garden", "child", "bird", "house"};
  static constexpr std::array<std::string_view, 6> verb = {"sees", "likes", "follows", "finds", "watches", "hears"};
  static constexpr std::array<std::string_view, 5> prep = {"near", "behind", "under", "beside", "across"};
  Rng rng(seed);
  std::vector<std::vector<std::string>> out;
  auto np = [&](std::vector<std::string>& s) {
    s.push_back(pick(rng, det));
    if (rng.uniform() < 0.5) s.push_back(pick(rng, adj));
    s.push_back(pick(rng, noun));
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> s;
    np(s);
    s.push_back(pick(rng, verb));
    np(s);
    if (rng.uniform() < 0.4) {
      s.push_back(pick(rng, prep));
      np(s);
    }
    s[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0][0])));
    s.back() += ".";
    out.push_back(std::move(s));
  }
  return out;
}

TokenizerData learn_tokenizer(const std::vector<std::string>& texts, int n_merges) {
  const auto& table = bpe::byte_to_unicode();
  TokenizerData data;
  for (int b = 0; b < 256; ++b) data.vocab.emplace(utf8(table[static_cast<std::size_t>(b)]), b);

  std::map<std::vector<std::string>, long> words;
  for (const auto& t : texts) {
    for (auto piece : bpe::pretokenize(t)) {
      std::vector<std::string> symbols;
      for (unsigned char c : piece) symbols.push_back(utf8(table[c]));
      ++words[symbols];
    }
  }
  for (int m = 0; m < n_merges; ++m) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [w, freq] : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) pairs[{w[i], w[i + 1]}] += freq;
    }
    if (pairs.empty()) break;
    // std::map iteration order makes ties resolve to the smallest pair.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    data.merges.emplace_back(a, b);
    data.vocab.emplace(a + b, static_cast<bpe::TokenId>(data.vocab.size()));
    std::map<std::vector<std::string>, long> next;
    for (const auto& [w, freq] : words) {
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == a && w[i + 1] == b) {
          merged.push_back(a + b);
          ++i;
        } else {
          merged.push_back(w[i]);
        }
      }
      next[merged] += freq;
    }
    words = std::move(next);
  }
  return data;
}

void write_tokenizer(const TokenizerData& data, const std::filesystem::path& vocab_json,
                     const std::filesystem::path& merges_txt) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [tok, id] : data.vocab) j[tok] = id;
  std::ofstream v(vocab_json, std::ios::binary);
  v << j.dump() << "\n";
  std::ofstream m(merges_txt, std::ios::binary);
  m << "#version: 0.2\n";
  for (const auto& [a, b] : data.merges) m << a << " " << b << "\n";
  if (!v || !m) throw Error("cannot write tokenizer files");
}

gaze::GazeCorpus gaze_corpus(const std::vector<std::vector<std::string>>& nr,
                             const std::vector<std::vector<std::string>>& tsr, int participants,
                             std::uint64_t seed) {
  std::map<std::string, int> freq;
  for (const auto* set : {&nr, &tsr}) {
    for (const auto& s : *set) {
      for (const auto& w : s) ++freq[w];
    }
  }
  Rng rng(seed);
  std::vector<std::string> roster;
  for (int p = 0; p < participants; ++p) roster.push_back("P" + std::to_string(p + 1));
  std::vector<gaze::Sentence> sentences;
  for (auto task : gaze::kAllTasks) {
    const auto& set = task == gaze::Task::NR ? nr : tsr;
    for (std::size_t si = 0; si < set.size(); ++si) {
      gaze::Sentence s{task, static_cast<int>(si + 1), {}};
      for (std::size_t wi = 0; wi < set[si].size(); ++wi) {
        const std::string& word = set[si][wi];
        gaze::WordRecord rec{task, s.sentence_id, static_cast<int>(wi), word, {}};
        const double base = 140.0 + 18.0 * static_cast<double>(word.size()) - 12.0 * std::log(freq[word]);
        for (const auto& p : roster) {
          gaze::Reading r;
          const double skip = word.size() <= 3 ? 0.35 : 0.08;
          if (rng.uniform() >= skip) {
            const double ffd = std::max(60.0, std::round(base * 0.8 + 25.0 * rng.normal()));
            const bool single = rng.uniform() < 0.6;
            const double gd = single ? ffd : std::round(ffd + 80.0 + 40.0 * rng.uniform());
            const double trt = std::round(gd + (rng.uniform() < 0.3 ? 150.0 * rng.uniform() : 0.0));
            const double gpt = std::round(gd + (rng.uniform() < 0.2 ? 200.0 * rng.uniform() : 0.0));
            r[gaze::Measure::FFD] = ffd;
            r[gaze::Measure::GD] = gd;
            r[gaze::Measure::TRT] = trt;
            r[gaze::Measure::GPT] = gpt;
            if (single) r[gaze::Measure::SFD] = ffd;
          }
          rec.participants.emplace(p, r);
        }
        s.words.push_back(std::move(rec));
      }
      sentences.push_back(std::move(s));
    }
  }
  return gaze::GazeCorpus(std::move(sentences), roster);
}

FixturePaths write_fixture(const std::filesystem::path& dir, const FixtureOptions& o) {
  std::filesystem::create_directories(dir);
  const auto nr = grammar_sentences(o.sentences_per_task, o.seed);
  const auto tsr = grammar_sentences(o.sentences_per_task, o.seed + 1);
  std::vector<std::string> texts;
  for (const auto* set : {&nr, &tsr}) {
    for (const auto& s : *set) texts.push_back(align::sentence_text(s));
  }
  const TokenizerData tok = learn_tokenizer(texts, o.merges);

  FixturePaths p{dir / "model.gptw", dir / "vocab.json", dir / "merges.txt", dir / "gaze.tsv"};
  write_tokenizer(tok, p.vocab, p.merges);
  gpt2::ModelConfig cfg;
  cfg.n_layer = o.n_layer;
  cfg.n_head = o.n_head;
  cfg.d_model = o.d_model;
  cfg.vocab_size = static_cast<int>(tok.vocab.size());
  cfg.max_positions = o.max_positions;
  gptw::write(p.weights, gpt2::random_checkpoint(cfg, o.seed));
  std::ofstream g(p.gaze, std::ios::binary);
  gaze::write_corpus(gaze_corpus(nr, tsr, o.participants, o.seed), g);
  if (!g) throw Error("cannot write " + p.gaze.string());
  return p;
}

}  // namespace gazeprobe::toy
