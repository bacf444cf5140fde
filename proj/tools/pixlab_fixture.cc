// Writes a small self-contained experiment: a synthetic corpus, a trained
// caffe-bgr source model, an inception-sym target model and exp.json.
//
//   pixlab_fixture --out demo/ [--images 60] [--seed 1]
//   pixlab run --config demo/exp.json --out demo/reports

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixlab/error.h"
#include "pixlab/synthetic.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pixlab;

int main(int argc, char** argv) {
  CLI::App app{"pixlab_fixture: generate a demo corpus, models and experiment config"};
  std::string out;
  std::size_t images = 60;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--images", images, "Corpus size")->check(CLI::Range(3, 100000));
  app.add_option("--seed", seed, "Seed");
  CLI11_PARSE(app, argc, argv);

  try {
    SyntheticCorpusOptions opts;
    opts.images = images;
    opts.seed = seed;
    const std::size_t classes = opts.classes;
    const std::string manifest = write_corpus((fs::path(out) / "corpus").string(), synthetic_corpus(opts));
    const Corpus corpus = load_corpus(manifest);

    fs::create_directories(fs::path(out) / "models");
    const std::string source = (fs::path(out) / "models" / "source_conv.pxm").string();
    const std::string target = (fs::path(out) / "models" / "target_dense.pxm").string();
    save_model(train_fixture_model(corpus, "caffe-bgr", conv_architecture(classes), classes, seed), source);
    save_model(train_fixture_model(corpus, "inception-sym", dense_architecture(classes), classes, seed + 1), target);

    const json cfg = {
        {"corpus", "corpus/manifest.csv"},
        {"source_model", "models/source_conv.pxm"},
        {"target_models", {"models/source_conv.pxm", "models/target_dense.pxm"}},
        {"clip_policy", "pixel-box"},
        {"seed", seed},
        {"out_dir", "reports"},
        {"attacks",
         {
             {{"name", "fgsm8"}, {"variant", "fgsm"}, {"epsilon", 8}},
             {{"name", "pgd8"}, {"variant", "pgd"}, {"epsilon", 8}, {"alpha", 2}, {"steps", 7}},
             {{"name", "pgd8-targeted"}, {"variant", "pgd"}, {"epsilon", 8}, {"targeted", true}},
             {{"name", "cw-l2"}, {"variant", "cw-l2"}, {"clip_policy", "model-box"}, {"binary_steps", 5}, {"iterations", 100}, {"learning_rate", 0.5}},
             {{"name", "cw-linf"}, {"variant", "cw-linf"}, {"clip_policy", "unit-box"}},
         }},
        {"detectors",
         {
             {{"detector", "gap"}, {"epsilon", 8}},
             {{"detector", "zero"}, {"threshold", 10}},
             {{"detector", "disagreement"}, {"model", "models/target_dense.pxm"}},
         }},
        {"saturation_sweep", {150, 160}},
    };
    const std::string cfg_path = (fs::path(out) / "exp.json").string();
    std::ofstream(cfg_path) << cfg.dump(2) << '\n';

    for (const auto& p : {manifest, source, target, cfg_path}) std::cout << p << '\n';
  } catch (const IoError& e) {
    std::cerr << "pixlab_fixture: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pixlab_fixture: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
