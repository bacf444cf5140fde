// pixlab: attack, transfer and detection experiments on small classifiers.
//
//   pixlab train    --config train.json --out model.pxm
//   pixlab attack   --config exp.json --out records/
//   pixlab transfer --config exp.json [--records records/] --out reports/
//   pixlab detect   --config exp.json [--records records/] [--detector gap --epsilon 8] --out verdicts.jsonl
//   pixlab stats    --config exp.json [--records records/] --out reports/
//   pixlab sweep    --config exp.json --epsilon 150 --epsilon 160 --out reports/
//   pixlab run      --config exp.json --out reports/
//
// Exit status: 0 ok, 1 validation/shape error or bad usage, 2 I/O or parse error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixlab/error.h"
#include "pixlab/experiment.h"
#include "pixlab/harness.h"
#include "pixlab/nn.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pixlab;

namespace {

struct Args {
  std::string config;
  std::string out;
  std::string records;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::vector<double> epsilons;
  std::string detector;
  std::size_t channel = kDefaultShiftChannel;
  double threshold = kDefaultZeroThreshold;
  std::string model;
};

void print_paths(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::cout << p << '\n';
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// {"corpus": "...", "preprocess": "caffe-bgr", "architecture": [{"layer": "conv2d",
//  "filters": 4, "kernel": 3}, {"layer": "relu"}, ...], "learning_rate": 1e-5,
//  "epochs": 30, "batch_size": 8, "seed": 1}
int cmd_train(const Args& a) {
  json doc;
  try {
    doc = json::parse(read_text(a.config));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid JSON: ") + e.what(), "/");
  }
  if (!doc.is_object()) throw ValidationError("expected an object", "/");
  auto need = [&](const char* key) -> const json& {
    if (!doc.contains(key)) throw ValidationError("missing required field", std::string("/") + key);
    return doc.at(key);
  };
  auto str = [](const json& v, const std::string& ptr) {
    if (!v.is_string()) throw ValidationError("expected a string", ptr);
    return v.get<std::string>();
  };
  auto uint = [](const json& v, const std::string& ptr) {
    if (!v.is_number_unsigned()) throw ValidationError("expected a non-negative integer", ptr);
    return v.get<std::uint64_t>();
  };

  const fs::path base = fs::path(a.config).parent_path();
  const std::string corpus_path = (base / str(need("corpus"), "/corpus")).lexically_normal().string();
  const std::string preprocess = str(need("preprocess"), "/preprocess");
  try {
    preprocess_spec(preprocess);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what(), "/preprocess");
  }

  const json& arch = need("architecture");
  if (!arch.is_array() || arch.empty()) throw ValidationError("expected a non-empty array", "/architecture");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const std::string ptr = "/architecture/" + std::to_string(i);
    const json& l = arch[i];
    if (!l.is_object() || !l.contains("layer")) throw ValidationError("expected {\"layer\": ...}", ptr);
    const std::string name = str(l.at("layer"), ptr + "/layer");
    LayerSpec s;
    if (name == "conv2d") {
      s.type = LayerType::kConv2d;
      if (!l.contains("filters") || !l.contains("kernel")) throw ValidationError("conv2d needs filters and kernel", ptr);
      s.size = uint(l.at("filters"), ptr + "/filters");
      s.kernel = uint(l.at("kernel"), ptr + "/kernel");
    } else if (name == "dense") {
      s.type = LayerType::kDense;
      if (!l.contains("units")) throw ValidationError("dense needs units", ptr);
      s.size = uint(l.at("units"), ptr + "/units");
    } else if (name == "relu") {
      s.type = LayerType::kRelu;
    } else if (name == "maxpool2") {
      s.type = LayerType::kMaxPool2;
    } else if (name == "flatten") {
      s.type = LayerType::kFlatten;
    } else {
      throw ValidationError("unknown layer '" + name + "'", ptr + "/layer");
    }
    layers.push_back(s);
  }

  TrainConfig tc;
  if (doc.contains("learning_rate")) {
    if (!doc.at("learning_rate").is_number()) throw ValidationError("expected a number", "/learning_rate");
    tc.learning_rate = doc.at("learning_rate").get<double>();
  }
  if (doc.contains("epochs")) tc.epochs = static_cast<int>(uint(doc.at("epochs"), "/epochs"));
  if (doc.contains("batch_size")) tc.batch_size = uint(doc.at("batch_size"), "/batch_size");
  if (doc.contains("seed")) tc.seed = uint(doc.at("seed"), "/seed");
  if (a.seed) tc.seed = *a.seed;

  const Corpus corpus = load_corpus(corpus_path);
  if (corpus.entries.empty()) throw ValidationError("corpus is empty", "/corpus");
  const auto samples = to_samples(corpus, preprocess_spec(preprocess));
  Model m = build_model(corpus.entries.front().raw.pixels.shape(), preprocess, layers, tc.seed);
  for (const auto& s : samples) {
    if (s.label >= m.classes) {
      throw ValidationError("label " + std::to_string(s.label) + " exceeds the architecture's " +
                                std::to_string(m.classes) + " outputs",
                            "/architecture");
    }
  }
  m = train(std::move(m), samples, tc);
  std::fprintf(stderr, "train: loss %.6f accuracy %.6f\n", mean_loss(m, samples), accuracy(m, samples));
  save_model(m, a.out);
  print_paths({a.out});
  return 0;
}

Experiment experiment_for(const Args& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  return load_experiment(cfg);
}

std::vector<AttackRun> attack_runs(const Experiment& exp, const Args& a) {
  return a.records.empty() ? run_attacks(exp, a.workers) : read_records(exp, a.records);
}

std::string out_dir(const Experiment& exp, const Args& a) { return a.out.empty() ? exp.config.out_dir : a.out; }

int cmd_attack(const Args& a) {
  const Experiment exp = experiment_for(a);
  const auto runs = run_attacks(exp, a.workers);
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.items.size(); ++i) {
      if (!run.items[i].record) {
        std::fprintf(stderr, "%s: %s: %s\n", run.name.c_str(), exp.corpus.entries[i].id.c_str(),
                     run.items[i].error.c_str());
      }
    }
  }
  print_paths(write_records(runs, exp, out_dir(exp, a)));
  return 0;
}

int cmd_transfer(const Args& a) {
  const Experiment exp = experiment_for(a);
  std::vector<std::string> written;
  write_transfer_reports(exp, attack_runs(exp, a), out_dir(exp, a), &written);
  print_paths(written);
  return 0;
}

int cmd_detect(const Args& a) {
  const Experiment exp = experiment_for(a);
  std::vector<DetectorEntry> detectors = exp.config.detectors;
  if (!a.detector.empty()) {
    DetectorEntry d;
    d.detector = a.detector;
    d.channel = a.channel;
    d.threshold = a.threshold;
    d.model = a.model;
    if (a.epsilons.size() > 1) throw ValidationError("detect takes at most one --epsilon");
    if (!a.epsilons.empty()) d.epsilon = a.epsilons.front();
    if (d.detector == "shift" && exp.source.model.preprocess != "inception-sym") {
      throw ValidationError("shift detector needs an inception-sym source model");
    }
    if (d.detector == "disagreement" && d.model.empty() && exp.targets.empty()) {
      throw ValidationError("disagreement detector needs --model or a target model");
    }
    if (d.channel >= 3) throw ValidationError("channel must be 0, 1 or 2");
    detectors = {d};
  }
  if (detectors.empty()) throw ValidationError("no detectors configured; pass --detector");
  std::string path = a.out.empty() ? (fs::path(exp.config.out_dir) / "verdicts.jsonl").string() : a.out;
  if (fs::is_directory(path)) path = (fs::path(path) / "verdicts.jsonl").string();
  print_paths({write_verdicts(exp, attack_runs(exp, a), detectors, path)});
  return 0;
}

int cmd_stats(const Args& a) {
  const Experiment exp = experiment_for(a);
  const auto runs = attack_runs(exp, a);
  const std::string dir = out_dir(exp, a);
  print_paths({write_channel_stats(exp, runs, dir), write_zero_counts(exp, runs, dir)});
  return 0;
}

int cmd_sweep(const Args& a) {
  const Experiment exp = experiment_for(a);
  const auto& eps = a.epsilons.empty() ? exp.config.saturation_sweep : a.epsilons;
  for (double e : eps) {
    if (!(e >= 0.0)) throw ValidationError("epsilon must be >= 0");
  }
  print_paths({write_sweep(saturation_sweep(exp, eps, a.workers), out_dir(exp, a))});
  return 0;
}

int cmd_run(const Args& a) {
  RunOptions opts;
  opts.out_dir = a.out;
  opts.workers = a.workers;
  opts.seed = a.seed;
  print_paths(run_experiment(a.config, opts));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixlab: adversarial attack, transfer and detection experiments"};
  app.require_subcommand(1);
  Args args;

  auto add_common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", args.config, "Config JSON")->required();
    auto* out = sub->add_option("--out", args.out, "Output file or directory");
    if (out_required) out->required();
    sub->add_option("--seed", args.seed, "Override the config seed");
  };
  auto add_workers = [&](CLI::App* sub) {
    sub->add_option("--workers", args.workers, "Worker threads")->check(CLI::Range(1u, 256u));
  };
  auto add_records = [&](CLI::App* sub) {
    sub->add_option("--records", args.records, "Records directory from `attack`; attacks rerun when omitted");
  };

  auto* train = app.add_subcommand("train", "Train a classifier from a train config");
  add_common(train, true);
  auto* attack = app.add_subcommand("attack", "Run the configured attacks and write records");
  add_common(attack, false);
  add_workers(attack);
  auto* transfer = app.add_subcommand("transfer", "Write transfer reports");
  add_common(transfer, false);
  add_workers(transfer);
  add_records(transfer);
  auto* detect = app.add_subcommand("detect", "Write detector verdicts as JSONL");
  add_common(detect, false);
  add_workers(detect);
  add_records(detect);
  detect->add_option("--detector", args.detector, "gap | shift | zero | disagreement")
      ->check(CLI::IsMember({"gap", "shift", "zero", "disagreement"}));
  detect->add_option("--epsilon", args.epsilons, "Detector epsilon")->expected(1);
  detect->add_option("--channel", args.channel, "Shift detector channel");
  detect->add_option("--threshold", args.threshold, "Zero detector count threshold");
  detect->add_option("--model", args.model, "Second model for the disagreement detector");
  auto* stats = app.add_subcommand("stats", "Write channel statistics and zero counts");
  add_common(stats, false);
  add_workers(stats);
  add_records(stats);
  auto* sweep = app.add_subcommand("sweep", "FGSM saturation sweep");
  add_common(sweep, false);
  add_workers(sweep);
  sweep->add_option("--epsilon", args.epsilons, "Sweep epsilon (repeatable)");
  auto* run = app.add_subcommand("run", "Full pipeline");
  add_common(run, false);
  add_workers(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*train) return cmd_train(args);
    if (*attack) return cmd_attack(args);
    if (*transfer) return cmd_transfer(args);
    if (*detect) return cmd_detect(args);
    if (*stats) return cmd_stats(args);
    if (*sweep) return cmd_sweep(args);
    if (*run) return cmd_run(args);
  } catch (const IoError& e) {  // includes ParseError
    std::cerr << "pixlab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pixlab: " << e.what() << '\n';
    return 1;
  }
  std::cerr << app.help();
  return 1;
}
