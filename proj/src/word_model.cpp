#include "gazeprobe/word_model.hpp"

#include <cmath>
#include <fstream>
#include "json.hpp"

#include "gazeprobe/errors.hpp"
#include "gazeprobe/ngram.hpp"
#include "gazeprobe/recurrent.hpp"

namespace gazeprobe::slm {

std::vector<double> WordModel::sentence_logprobs(std::span<const std::string> words) const {
  std::vector<double> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.push_back(std::log(word_prob(words.subspan(0, i), words[i])));
  }
  return out;
}

double WordModel::word_prob(std::span<const std::string> context, const std::string& target) const {
  const Vector p = distribution(context);
  return p(static_cast<Eigen::Index>(vocab().id(target)));
}

double perplexity(const WordModel& model, const Corpus& corpus) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& s : corpus) {
    for (double lp : model.sentence_logprobs(s)) {
      nll -= lp;
      ++count;
    }
  }
  if (count == 0) throw DataError("perplexity: empty corpus");
  return std::exp(nll / static_cast<double>(count));
}

std::unique_ptr<WordModel> load_word_model(const std::filesystem::path& sidecar) {
  std::ifstream f(sidecar);
  if (!f) throw ModelError("cannot open model file " + sidecar.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(sidecar.string() + ": " + e.what());
  }
  const std::string kind = j.value("kind", "");
  if (kind == "ngram") return std::make_unique<NGramModel>(NGramModel::from_json(j));
  if (parse_cell_kind(kind)) return std::make_unique<RecurrentModel>(RecurrentModel::load(sidecar, j));
  throw ModelError(sidecar.string() + ": unknown model kind \"" + kind + "\"");
}

}  // namespace gazeprobe::slm
