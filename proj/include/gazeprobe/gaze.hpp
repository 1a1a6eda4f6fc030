#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gazeprobe::gaze {

// Eye-tracking measures, in column order.
//   GD  gaze duration: first-pass fixations on the word before leaving it
//   TRT total reading time: all fixations on the word, regressions included
//   FFD first fixation duration
//   SFD single fixation duration: only defined when the word got exactly one fixation
//   GPT go-past time: everything from first entering the word until moving right of it
enum class Measure { GD, TRT, FFD, SFD, GPT };
inline constexpr std::array<Measure, 5> kAllMeasures = {Measure::GD, Measure::TRT, Measure::FFD,
                                                        Measure::SFD, Measure::GPT};
std::string_view measure_name(Measure m);
std::optional<Measure> parse_measure(std::string_view name);

enum class Task { NR, TSR };
inline constexpr std::array<Task, 2> kAllTasks = {Task::NR, Task::TSR};
std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view name);

// One participant's measures for one word; nullopt = not defined (skipped).
struct Reading {
  std::array<std::optional<double>, 5> ms;
  const std::optional<double>& operator[](Measure m) const { return ms[static_cast<std::size_t>(m)]; }
  std::optional<double>& operator[](Measure m) { return ms[static_cast<std::size_t>(m)]; }
  bool operator==(const Reading&) const = default;
};

struct WordRecord {
  Task task = Task::NR;
  int sentence_id = 0;
  int word_index = 0;
  std::string surface;
  std::map<std::string, Reading> participants;
  bool operator==(const WordRecord&) const = default;
};

struct Sentence {
  Task task = Task::NR;
  int sentence_id = 0;
  std::vector<WordRecord> words;  // ordered by word_index, contiguous from 0

  std::vector<std::string> surfaces() const;
  bool operator==(const Sentence&) const = default;
};

struct WordKey {
  Task task = Task::NR;
  int sentence_id = 0;
  int word_index = 0;
  auto operator<=>(const WordKey&) const = default;
};

class GazeCorpus {
 public:
  GazeCorpus() = default;
  GazeCorpus(std::vector<Sentence> sentences, std::vector<std::string> participants);

  // Ordered by (task, sentence_id).
  const std::vector<Sentence>& sentences() const { return sentences_; }
  std::vector<const Sentence*> sentences(Task task) const;
  const std::vector<std::string>& participants() const { return participants_; }
  std::size_t sentence_count(Task task) const;

  bool operator==(const GazeCorpus&) const = default;

 private:
  std::vector<Sentence> sentences_;
  std::vector<std::string> participants_;
};

// TSV with header
//   task sentence_id word_index word participant gd_ms trt_ms ffd_ms sfd_ms gpt_ms
// Throws DataError with the offending line number.
GazeCorpus load_corpus(const std::filesystem::path& path);
GazeCorpus parse_corpus(std::istream& in, const std::string& source = "<stream>");
void write_corpus(const GazeCorpus& corpus, std::ostream& out);

enum class AggregationPolicy { DefinedOnlyMean, ZeroFillMean };

// Mean over participants per word. DefinedOnlyMean skips absent values and
// drops words with fewer than min_participants defined values; ZeroFillMean
// counts absent values as 0.
std::map<WordKey, double> aggregate(const GazeCorpus& corpus, Measure measure,
                                    AggregationPolicy policy = AggregationPolicy::DefinedOnlyMean,
                                    int min_participants = 1);

enum class Eligibility { All, PredictionEligible };

// PredictionEligible excludes sentence-initial words (no left context).
std::size_t word_count(const GazeCorpus& corpus, Task task,
                       Eligibility eligibility = Eligibility::PredictionEligible);

}  // namespace gazeprobe::gaze
