// Writes a toy checkpoint, tokenizer and gaze table, or a grammar corpus for
// shallow-model training.
#include <cstdio>
#include <fstream>

#include "CLI11.hpp"
#include "gazeprobe/toy.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gazeprobe-fixture: synthetic inputs for trying the probes"};
  std::string dir = "toy";
  std::string corpus;
  std::size_t corpus_lines = 100;
  gazeprobe::toy::FixtureOptions o;
  app.add_option("--dir", dir, "output directory")->capture_default_str();
  app.add_option("--layers", o.n_layer)->capture_default_str();
  app.add_option("--heads", o.n_head)->capture_default_str();
  app.add_option("--d-model", o.d_model)->capture_default_str();
  app.add_option("--sentences", o.sentences_per_task, "per task")->capture_default_str();
  app.add_option("--participants", o.participants)->capture_default_str();
  app.add_option("--merges", o.merges)->capture_default_str();
  app.add_option("--seed", o.seed)->capture_default_str();
  app.add_option("--corpus", corpus, "instead write a grammar corpus to this file");
  app.add_option("--lines", corpus_lines, "corpus sentences")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    if (!corpus.empty()) {
      std::ofstream out(corpus, std::ios::binary);
      for (const auto& s : gazeprobe::toy::grammar_sentences(corpus_lines, o.seed)) {
        for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
        out << "\n";
      }
      if (!out) throw std::runtime_error("cannot write " + corpus);
      std::printf("wrote %zu sentences to %s\n", corpus_lines, corpus.c_str());
      return 0;
    }
    const auto p = gazeprobe::toy::write_fixture(dir, o);
    std::printf("%s\n%s\n%s\n%s\n", p.weights.c_str(), p.vocab.c_str(), p.merges.c_str(), p.gaze.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
