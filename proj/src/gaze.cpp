#include "gazeprobe/gaze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::gaze {
namespace {

constexpr std::array<std::string_view, 10> kColumns = {
    "task", "sentence_id", "word_index", "word", "participant", "gd_ms", "trt_ms", "ffd_ms", "sfd_ms", "gpt_ms"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw DataError(source + ":" + std::to_string(line) + ": " + msg);
}

int parse_int(std::string_view s, const std::string& source, std::size_t line, const char* col) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(source, line, std::string("bad integer in ") + col);
  return v;
}

std::optional<double> parse_ms(std::string_view s, const std::string& source, std::size_t line, std::string_view col) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::fixed);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(source, line, "bad number \"" + std::string(s) + "\" in " + std::string(col));
  }
  if (v < 0.0) fail(source, line, "negative value in " + std::string(col));
  return v;
}

std::string format_ms(const std::optional<double>& v) {
  if (!v) return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *v, std::chars_format::fixed);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::GD: return "GD";
    case Measure::TRT: return "TRT";
    case Measure::FFD: return "FFD";
    case Measure::SFD: return "SFD";
    case Measure::GPT: return "GPT";
  }
  return "?";
}

std::optional<Measure> parse_measure(std::string_view name) {
  const std::string n = lower(name);
  for (auto m : kAllMeasures) {
    if (lower(measure_name(m)) == n) return m;
  }
  return std::nullopt;
}

std::string_view task_name(Task t) { return t == Task::NR ? "NR" : "TSR"; }

std::optional<Task> parse_task(std::string_view name) {
  const std::string n = lower(name);
  if (n == "nr") return Task::NR;
  if (n == "tsr") return Task::TSR;
  return std::nullopt;
}

std::vector<std::string> Sentence::surfaces() const {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.surface);
  return out;
}

GazeCorpus::GazeCorpus(std::vector<Sentence> sentences, std::vector<std::string> participants)
    : sentences_(std::move(sentences)), participants_(std::move(participants)) {
  std::ranges::sort(sentences_, {}, [](const Sentence& s) { return std::pair(s.task, s.sentence_id); });
  std::ranges::sort(participants_);
}

std::vector<const Sentence*> GazeCorpus::sentences(Task task) const {
  std::vector<const Sentence*> out;
  for (const auto& s : sentences_) {
    if (s.task == task) out.push_back(&s);
  }
  return out;
}

std::size_t GazeCorpus::sentence_count(Task task) const {
  return static_cast<std::size_t>(std::ranges::count(sentences_, task, &Sentence::task));
}

GazeCorpus parse_corpus(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(source + ": empty file (header row required)");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = split_tabs(line);
  if (header.size() != kColumns.size() || !std::ranges::equal(header, kColumns)) {
    fail(source, lineno, "header must be the ten columns task..gpt_ms");
  }

  std::map<std::pair<Task, int>, std::map<int, WordRecord>> grouped;
  std::set<std::string> roster;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != kColumns.size()) {
      fail(source, lineno, "expected 10 columns, found " + std::to_string(f.size()));
    }
    const auto task = parse_task(f[0]);
    if (!task) fail(source, lineno, "unknown task \"" + std::string(f[0]) + "\"");
    const int sid = parse_int(f[1], source, lineno, "sentence_id");
    const int widx = parse_int(f[2], source, lineno, "word_index");
    if (widx < 0) fail(source, lineno, "negative word_index");
    if (f[4].empty()) fail(source, lineno, "empty participant");
    Reading r;
    for (std::size_t k = 0; k < 5; ++k) r.ms[k] = parse_ms(f[5 + k], source, lineno, kColumns[5 + k]);
    if (r[Measure::SFD] && r[Measure::TRT] && *r[Measure::SFD] > *r[Measure::TRT]) {
      fail(source, lineno, "sfd_ms exceeds trt_ms");
    }

    auto& words = grouped[{*task, sid}];
    auto [it, fresh] = words.try_emplace(widx);
    WordRecord& w = it->second;
    if (fresh) {
      w.task = *task;
      w.sentence_id = sid;
      w.word_index = widx;
      w.surface = std::string(f[3]);
    } else if (w.surface != f[3]) {
      fail(source, lineno, "word \"" + std::string(f[3]) + "\" conflicts with \"" + w.surface +
                               "\" at the same position");
    }
    const std::string participant(f[4]);
    if (!w.participants.emplace(participant, r).second) {
      fail(source, lineno, "duplicate row for participant " + participant);
    }
    roster.insert(participant);
  }

  std::vector<Sentence> sentences;
  for (auto& [key, words] : grouped) {
    Sentence s{key.first, key.second, {}};
    int expected = 0;
    for (auto& [idx, w] : words) {
      if (idx != expected) {
        throw DataError(source + ": " + std::string(task_name(key.first)) + " sentence " +
                        std::to_string(key.second) + " is missing word_index " + std::to_string(expected));
      }
      ++expected;
      s.words.push_back(std::move(w));
    }
    sentences.push_back(std::move(s));
  }
  return GazeCorpus(std::move(sentences), {roster.begin(), roster.end()});
}

GazeCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open gaze file " + path.string());
  return parse_corpus(f, path.string());
}

void write_corpus(const GazeCorpus& corpus, std::ostream& out) {
  for (std::size_t k = 0; k < kColumns.size(); ++k) out << (k ? "\t" : "") << kColumns[k];
  out << '\n';
  for (const auto& s : corpus.sentences()) {
    for (const auto& w : s.words) {
      for (const auto& [participant, r] : w.participants) {
        out << task_name(s.task) << '\t' << s.sentence_id << '\t' << w.word_index << '\t' << w.surface << '\t'
            << participant;
        for (const auto& v : r.ms) out << '\t' << format_ms(v);
        out << '\n';
      }
    }
  }
}

std::map<WordKey, double> aggregate(const GazeCorpus& corpus, Measure measure, AggregationPolicy policy,
                                    int min_participants) {
  if (min_participants < 1) throw DataError("aggregate: min_participants must be at least 1");
  std::map<WordKey, double> out;
  for (const auto& s : corpus.sentences()) {
    for (const auto& w : s.words) {
      double total = 0.0;
      int defined = 0;
      for (const auto& [_, r] : w.participants) {
        if (const auto& v = r[measure]) {
          total += *v;
          ++defined;
        }
      }
      const WordKey key{s.task, s.sentence_id, w.word_index};
      if (policy == AggregationPolicy::DefinedOnlyMean) {
        if (defined >= min_participants) out.emplace(key, total / defined);
      } else if (!w.participants.empty()) {
        out.emplace(key, total / static_cast<double>(w.participants.size()));
      }
    }
  }
  return out;
}

std::size_t word_count(const GazeCorpus& corpus, Task task, Eligibility eligibility) {
  std::size_t n = 0;
  for (const auto* s : corpus.sentences(task)) {
    n += s->words.size();
    if (eligibility == Eligibility::PredictionEligible && !s->words.empty()) --n;
  }
  return n;
}

}  // namespace gazeprobe::gaze
