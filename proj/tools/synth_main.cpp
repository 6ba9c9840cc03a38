// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Writes the seeded synthetic corpora used by the demos and benchmarks.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "worthiness/error.hpp"
#include "worthiness/synthetic.hpp"

int main(int argc, char** argv) {
  namespace syn = worthiness::synthetic;
  CLI::App app{"Generate synthetic corpora", "worthiness-synth"};
  app.option_defaults()->always_capture_default();
  std::string kind = "gmad";
  std::string out = "corpus";
  std::uint64_t seed = 0;
  std::size_t images = 2000;
  std::size_t models = 9;
  bool write_images = false;
  app.add_option("kind", kind, "Corpus kind")->check(CLI::IsMember({"gmad", "selection", "loop"}));
  app.add_option("--out", out, "Output directory");
  app.add_option("--seed", seed, "Random seed")->envname("WORTHINESS_SEED");
  app.add_option("--images", images, "Image count");
  app.add_option("--models", models, "Model count (gmad)");
  app.add_flag("--write-images", write_images, "Write placeholder BMP files (gmad)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    syn::Corpus corpus;
    if (kind == "gmad") {
      corpus = syn::make_gmad_corpus({models, images, seed});
    } else if (kind == "selection") {
      syn::SelectionCorpusOptions o;
      o.images = images;
      o.seed = seed;
      corpus = syn::make_selection_corpus(o);
    } else {
      syn::LoopCorpusOptions o;
      o.images = images;
      o.seed = seed;
      corpus = syn::make_loop_corpus(o);
    }
    syn::write_corpus(corpus, out, write_images);
  } catch (const worthiness::Error& e) {
    std::cerr << e.name() << ": " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << kind << " corpus to " << out << "\n";
  return 0;
}
