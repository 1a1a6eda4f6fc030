#pragma once

#include <filesystem>
#include <string>

#include "gazeprobe/gaze.hpp"
#include "gazeprobe/gpt2.hpp"
#include "gazeprobe/toy.hpp"

namespace fixture {

// A toy checkpoint + tokenizer + gaze table written once per process.
struct Toy {
  std::filesystem::path dir;
  gazeprobe::toy::FixturePaths paths;
  gazeprobe::gpt2::Model model;
  gazeprobe::gaze::GazeCorpus corpus;
};

inline Toy make(const std::string& name, const gazeprobe::toy::FixtureOptions& opts = {}) {
  const auto dir = std::filesystem::temp_directory_path() / ("gazeprobe_fixture_" + name);
  const auto paths = gazeprobe::toy::write_fixture(dir, opts);
  return {dir, paths, gazeprobe::gpt2::load_model(paths.weights, paths.vocab, paths.merges),
          gazeprobe::gaze::load_corpus(paths.gaze)};
}

inline const Toy& shared() {
  static const Toy toy = make("shared");
  return toy;
}

}  // namespace fixture
