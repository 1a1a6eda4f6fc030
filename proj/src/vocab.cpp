#include "gazeprobe/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::slm {

Corpus parse_corpus(std::string_view text) {
  Corpus out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<std::string> sentence;
    std::string w;
    while (words >> w) sentence.push_back(w);
    if (!sentence.empty()) out.push_back(std::move(sentence));
  }
  return out;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  Corpus c = parse_corpus(ss.str());
  if (c.empty()) throw DataError("corpus " + path.string() + " is empty");
  return c;
}

std::string Vocabulary::normalize(std::string_view word) const {
  std::string w(word);
  if (opts_.strip_punct) {
    auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    std::size_t b = 0, e = w.size();
    while (b < e && is_punct(w[b])) ++b;
    while (e > b && is_punct(w[e - 1])) --e;
    if (e > b) w = w.substr(b, e - b);
  }
  if (opts_.lowercase) {
    std::ranges::transform(w, w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  return w;
}

Vocabulary Vocabulary::build(const Corpus& corpus, const VocabOptions& opts) {
  if (opts.min_freq < 1) throw DataError("vocabulary: min_freq must be at least 1");
  Vocabulary v;
  v.opts_ = opts;
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus) {
    for (const auto& w : s) ++freq[v.normalize(w)];
  }
  v.words_.emplace_back(kUnk);
  for (const auto& [w, n] : freq) {
    if (n >= static_cast<std::size_t>(opts.min_freq) && w != kUnk && w != kBos && w != kEos) v.words_.push_back(w);
  }
  if (opts.use_eos) v.words_.emplace_back(kEos);
  v.index();
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], i);
}

std::size_t Vocabulary::id(std::string_view word) const {
  const auto it = ids_.find(normalize(word));
  return it == ids_.end() ? unk() : it->second;
}

std::vector<std::size_t> Vocabulary::ids(std::span<const std::string> words) const {
  std::vector<std::size_t> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

const std::string& Vocabulary::word(std::size_t id) const {
  static const std::string bos_word(kBos);
  if (id == bos()) return bos_word;
  if (id >= words_.size()) throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::optional<std::size_t> Vocabulary::eos() const {
  if (!opts_.use_eos) return std::nullopt;
  return words_.size() - 1;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"min_freq", opts_.min_freq},
          {"lowercase", opts_.lowercase},
          {"strip_punct", opts_.strip_punct},
          {"use_eos", opts_.use_eos},
          {"words", words_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.opts_.min_freq = j.at("min_freq").get<int>();
  v.opts_.lowercase = j.at("lowercase").get<bool>();
  v.opts_.strip_punct = j.at("strip_punct").get<bool>();
  v.opts_.use_eos = j.at("use_eos").get<bool>();
  v.words_ = j.at("words").get<std::vector<std::string>>();
  if (v.words_.empty() || v.words_[0] != kUnk) throw ModelError("vocabulary: first word must be <unk>");
  v.index();
  return v;
}

}  // namespace gazeprobe::slm
