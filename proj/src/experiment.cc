#include "pixlab/experiment.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pixlab/error.h"
#include "pixlab/random.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pixlab {

namespace {

// ---- config parsing -----------------------------------------------------------

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
std::string child(const std::string& ptr, std::size_t index) { return ptr + "/" + std::to_string(index); }

const json& require_key(const json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.contains(key)) throw ValidationError("missing required field", child(ptr, key));
  return obj.at(key);
}

void require_object(const json& v, const std::string& ptr) {
  if (!v.is_object()) throw ValidationError("expected an object", ptr.empty() ? "/" : ptr);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& ptr) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError("unknown field", child(ptr, key));
    }
  }
}

std::string get_string(const json& v, const std::string& ptr) {
  if (!v.is_string()) throw ValidationError("expected a string", ptr);
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ValidationError("expected a number", ptr);
  return v.get<double>();
}

std::int64_t get_int(const json& v, const std::string& ptr) {
  if (!v.is_number_integer()) throw ValidationError("expected an integer", ptr);
  return v.get<std::int64_t>();
}

std::size_t get_index(const json& v, const std::string& ptr) {
  const auto i = get_int(v, ptr);
  if (i < 0) throw ValidationError("expected a non-negative integer", ptr);
  return static_cast<std::size_t>(i);
}

bool get_bool(const json& v, const std::string& ptr) {
  if (!v.is_boolean()) throw ValidationError("expected a boolean", ptr);
  return v.get<bool>();
}

template <class T, class F>
void optional_field(const json& obj, const char* key, const std::string& ptr, T& out, F getter) {
  if (obj.contains(key)) out = getter(obj.at(key), child(ptr, key));
}

int get_count(const json& v, const std::string& ptr) {
  const auto i = get_int(v, ptr);
  if (i < 0 || i > 100000000) throw ValidationError("out of range", ptr);
  return static_cast<int>(i);
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && s != "." && s != "..";
}

AttackEntry parse_attack(const json& a, const std::string& ptr, std::size_t index, ClipPolicy default_clip) {
  require_object(a, ptr);
  AttackEntry entry;
  const std::string variant = get_string(require_key(a, "variant", ptr), child(ptr, "variant"));
  entry.name = variant + "-" + std::to_string(index);
  optional_field(a, "name", ptr, entry.name, get_string);
  if (!valid_name(entry.name)) throw ValidationError("name must match [A-Za-z0-9._-]+", child(ptr, "name"));

  entry.config.clip = default_clip;
  if (a.contains("clip_policy")) {
    const auto p = child(ptr, "clip_policy");
    try {
      entry.config.clip.kind = parse_clip_kind(get_string(a.at("clip_policy"), p));
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), p);
    }
  }
  if (a.contains("seed")) {
    entry.config.seed = static_cast<std::uint64_t>(get_index(a.at("seed"), child(ptr, "seed")));
    entry.explicit_seed = true;
  }

  auto opt_target = [&](std::optional<std::size_t>& target) {
    if (a.contains("target")) target = get_index(a.at("target"), child(ptr, "target"));
  };

  if (variant == "fgsm") {
    reject_unknown(a, {"name", "variant", "clip_policy", "seed", "epsilon", "targeted", "target"}, ptr);
    FgsmParams p;
    p.epsilon = get_number(require_key(a, "epsilon", ptr), child(ptr, "epsilon"));
    optional_field(a, "targeted", ptr, p.targeted, get_bool);
    opt_target(p.target);
    entry.config.params = p;
  } else if (variant == "pgd") {
    reject_unknown(a, {"name", "variant", "clip_policy", "seed", "epsilon", "alpha", "steps", "random_starts",
                       "targeted", "target"},
                   ptr);
    PgdParams p;
    p.epsilon = get_number(require_key(a, "epsilon", ptr), child(ptr, "epsilon"));
    optional_field(a, "alpha", ptr, p.alpha, get_number);
    optional_field(a, "steps", ptr, p.steps, get_count);
    optional_field(a, "random_starts", ptr, p.random_starts, get_count);
    optional_field(a, "targeted", ptr, p.targeted, get_bool);
    opt_target(p.target);
    entry.config.params = p;
  } else if (variant == "cw-l2") {
    reject_unknown(a, {"name", "variant", "clip_policy", "seed", "confidence", "binary_steps", "iterations",
                       "learning_rate", "initial_const", "target"},
                   ptr);
    CwL2Params p;
    optional_field(a, "confidence", ptr, p.confidence, get_number);
    optional_field(a, "binary_steps", ptr, p.binary_steps, get_count);
    optional_field(a, "iterations", ptr, p.iterations, get_count);
    optional_field(a, "learning_rate", ptr, p.learning_rate, get_number);
    optional_field(a, "initial_const", ptr, p.initial_const, get_number);
    opt_target(p.target);
    entry.config.params = p;
  } else if (variant == "cw-linf") {
    reject_unknown(a, {"name", "variant", "clip_policy", "seed", "iterations", "initial_tau", "tau_decay",
                       "constant", "learning_rate", "target"},
                   ptr);
    CwLinfParams p;
    optional_field(a, "iterations", ptr, p.iterations, get_count);
    if (a.contains("initial_tau")) p.initial_tau = get_number(a.at("initial_tau"), child(ptr, "initial_tau"));
    optional_field(a, "tau_decay", ptr, p.tau_decay, get_number);
    optional_field(a, "constant", ptr, p.constant, get_number);
    optional_field(a, "learning_rate", ptr, p.learning_rate, get_number);
    opt_target(p.target);
    entry.config.params = p;
  } else {
    throw ValidationError("unknown attack variant '" + variant + "'", child(ptr, "variant"));
  }

  try {
    validate(entry.config);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what(), ptr);
  }
  return entry;
}

DetectorEntry parse_detector(const json& d, const std::string& ptr, const std::string& base) {
  require_object(d, ptr);
  DetectorEntry entry;
  entry.detector = get_string(require_key(d, "detector", ptr), child(ptr, "detector"));
  if (entry.detector == "gap") {
    reject_unknown(d, {"detector", "epsilon"}, ptr);
    entry.epsilon = get_number(require_key(d, "epsilon", ptr), child(ptr, "epsilon"));
  } else if (entry.detector == "shift") {
    reject_unknown(d, {"detector", "epsilon", "channel"}, ptr);
    entry.epsilon = get_number(require_key(d, "epsilon", ptr), child(ptr, "epsilon"));
    optional_field(d, "channel", ptr, entry.channel, get_index);
    if (entry.channel >= 3) throw ValidationError("channel must be 0, 1 or 2", child(ptr, "channel"));
  } else if (entry.detector == "zero") {
    reject_unknown(d, {"detector", "threshold"}, ptr);
    optional_field(d, "threshold", ptr, entry.threshold, get_number);
  } else if (entry.detector == "disagreement") {
    reject_unknown(d, {"detector", "model"}, ptr);
    if (d.contains("model")) entry.model = resolve(base, get_string(d.at("model"), child(ptr, "model")));
  } else {
    throw ValidationError("unknown detector '" + entry.detector + "'", child(ptr, "detector"));
  }
  return entry;
}

// ---- formatting -------------------------------------------------------------

std::string fmt6(double v) { return format_metric(v); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string model_stem(const std::string& path) { return fs::path(path).stem().string(); }

json metric_json(std::optional<double> v) {
  if (!v) return "-";
  return *v;
}

struct CountSummary {
  double min = 0, avg = 0, max = 0, stddev = 0;
};

std::optional<CountSummary> summarize(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  CountSummary s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (double x : v) sum += x;
  s.avg = sum / static_cast<double>(v.size());
  double sq = 0;
  for (double x : v) sq += (x - s.avg) * (x - s.avg);
  s.stddev = std::sqrt(sq / static_cast<double>(v.size()));
  return s;
}

std::uint64_t effective_seed(const Experiment& exp, const AttackEntry& entry, std::size_t index) {
  return entry.explicit_seed ? entry.config.seed : mix_seed(exp.config.seed, index);
}

}  // namespace

// ---- config ---------------------------------------------------------------------

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid JSON: ") + e.what(), "/");
  }
  require_object(doc, "");
  reject_unknown(doc, {"corpus", "source_model", "target_models", "attacks", "detectors", "clip_policy", "seed",
                       "out_dir", "saturation_sweep"},
                 "");

  ExperimentConfig cfg;
  cfg.corpus = resolve(base_dir, get_string(require_key(doc, "corpus", ""), "/corpus"));
  cfg.source_model = resolve(base_dir, get_string(require_key(doc, "source_model", ""), "/source_model"));
  if (doc.contains("clip_policy")) {
    try {
      cfg.clip.kind = parse_clip_kind(get_string(doc.at("clip_policy"), "/clip_policy"));
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), "/clip_policy");
    }
  }
  if (doc.contains("seed")) cfg.seed = static_cast<std::uint64_t>(get_index(doc.at("seed"), "/seed"));
  cfg.out_dir = resolve(base_dir, doc.contains("out_dir") ? get_string(doc.at("out_dir"), "/out_dir") : "out");

  if (doc.contains("target_models")) {
    const auto& t = doc.at("target_models");
    if (!t.is_array()) throw ValidationError("expected an array", "/target_models");
    for (std::size_t i = 0; i < t.size(); ++i) {
      cfg.target_models.push_back(resolve(base_dir, get_string(t[i], child("/target_models", i))));
    }
  }
  if (doc.contains("attacks")) {
    const auto& a = doc.at("attacks");
    if (!a.is_array()) throw ValidationError("expected an array", "/attacks");
    std::set<std::string> names;
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto entry = parse_attack(a[i], child("/attacks", i), i, cfg.clip);
      if (!names.insert(entry.name).second) {
        throw ValidationError("duplicate attack name '" + entry.name + "'", child(child("/attacks", i), "name"));
      }
      cfg.attacks.push_back(std::move(entry));
    }
  }
  if (doc.contains("detectors")) {
    const auto& d = doc.at("detectors");
    if (!d.is_array()) throw ValidationError("expected an array", "/detectors");
    for (std::size_t i = 0; i < d.size(); ++i) {
      cfg.detectors.push_back(parse_detector(d[i], child("/detectors", i), base_dir));
    }
  }
  if (doc.contains("saturation_sweep")) {
    const auto& s = doc.at("saturation_sweep");
    if (!s.is_array()) throw ValidationError("expected an array", "/saturation_sweep");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double eps = get_number(s[i], child("/saturation_sweep", i));
      if (!(eps >= 0.0)) throw ValidationError("epsilon must be >= 0", child("/saturation_sweep", i));
      cfg.saturation_sweep.push_back(eps);
    }
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), fs::path(path).parent_path().string());
}

Experiment load_experiment(const ExperimentConfig& cfg) {
  Experiment exp;
  exp.config = cfg;
  exp.corpus = load_corpus(cfg.corpus);
  exp.source = {model_stem(cfg.source_model), load_model(cfg.source_model)};
  for (const auto& path : cfg.target_models) exp.targets.push_back({model_stem(path), load_model(path)});

  const auto& m = exp.source.model;
  for (std::size_t i = 0; i < exp.corpus.entries.size(); ++i) {
    const auto& e = exp.corpus.entries[i];
    if (e.label >= m.classes) {
      throw ValidationError("label " + std::to_string(e.label) + " of '" + e.id + "' exceeds the source model's " +
                            std::to_string(m.classes) + " classes");
    }
    if (e.raw.pixels.shape() != m.input_shape) {
      throw ShapeError("corpus image shape " + shape_string(e.raw.pixels.shape()) + " does not match source model " +
                       shape_string(m.input_shape));
    }
  }
  for (const auto& t : exp.targets) {
    if (t.model.input_shape != m.input_shape) {
      throw ShapeError("target model '" + t.name + "' input " + shape_string(t.model.input_shape) +
                       " differs from source " + shape_string(m.input_shape));
    }
  }
  for (std::size_t i = 0; i < cfg.detectors.size(); ++i) {
    const auto& d = cfg.detectors[i];
    if (d.detector == "shift" && m.preprocess != "inception-sym") {
      throw ValidationError("shift detector needs an inception-sym source model", child("/detectors", i));
    }
    if (d.detector == "disagreement" && d.model.empty() && exp.targets.empty()) {
      throw ValidationError("disagreement detector needs a model or at least one target model",
                            child("/detectors", i));
    }
  }
  return exp;
}

// ---- stages ---------------------------------------------------------------------

std::vector<AdvRecord> AttackRun::records() const {
  std::vector<AdvRecord> out;
  for (const auto& item : items) {
    if (item.record) out.push_back(*item.record);
  }
  return out;
}

std::vector<AttackRun> run_attacks(const Experiment& exp, unsigned workers) {
  const auto samples = to_samples(exp.corpus, preprocess_spec(exp.source.model.preprocess));
  std::vector<AttackRun> runs;
  for (std::size_t i = 0; i < exp.config.attacks.size(); ++i) {
    const auto& entry = exp.config.attacks[i];
    AttackConfig cfg = entry.config;
    cfg.seed = effective_seed(exp, entry, i);
    runs.push_back({entry.name, cfg, attack_batch(exp.source.model, samples, cfg, workers)});
  }
  return runs;
}

std::vector<SweepRow> saturation_sweep(const Experiment& exp, const std::vector<double>& epsilons, unsigned workers) {
  const auto samples = to_samples(exp.corpus, preprocess_spec(exp.source.model.preprocess));
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    AttackConfig cfg{FgsmParams{eps, false, std::nullopt}, exp.config.clip, exp.config.seed};
    double max_linf = 0.0;
    for (const auto& item : attack_batch(exp.source.model, samples, cfg, workers)) {
      if (!item.record) throw Error("sweep attack failed: " + item.error);
      max_linf = std::max(max_linf, item.record->linf);
    }
    rows.push_back({eps, max_linf});
  }
  return rows;
}

// ---- reports ----------------------------------------------------------------------

std::string write_transfer_reports(const Experiment& exp, const std::vector<AttackRun>& runs,
                                   const std::string& out_dir, std::vector<std::string>* written) {
  ensure_dir(out_dir);
  const auto source_spec = preprocess_spec(exp.source.model.preprocess);
  std::ostringstream csv;
  csv << "attacked_model,attack,avg_linf,population,target_model,eligible,transferred,transfer_rate,"
         "hit_target_rate,clamped\n";
  json report;
  report["source_model"] = exp.source.name;
  report["population"] = "eligible";
  report["attacks"] = json::array();

  for (const auto& run : runs) {
    const auto records = run.records();
    const auto eligible = select_eligible(records);
    const auto avg = avg_linf(eligible);
    const bool targeted = is_targeted(run.config.params);
    json a;
    a["attack"] = run.name;
    a["variant"] = variant_name(run.config.params);
    a["clip_policy"] = std::string(clip_name(run.config.clip.kind));
    a["records"] = records.size();
    a["errors"] = run.items.size() - records.size();
    a["eligible"] = eligible.size();
    a["avg_linf"] = metric_json(avg);
    a["targets"] = json::array();
    for (const auto& t : exp.targets) {
      const auto res = transfer_rate(eligible, source_spec, t.model);
      const auto hit = targeted ? res.hit_target_rate : std::nullopt;
      a["targets"].push_back({{"model", t.name},
                              {"eligible", res.eligible},
                              {"transferred", res.transferred},
                              {"transfer_rate", metric_json(res.rate)},
                              {"hit_target_rate", metric_json(hit)},
                              {"clamped", res.clamped}});
      csv << exp.source.name << ',' << run.name << ',' << format_metric(avg) << ",eligible," << t.name << ','
          << res.eligible << ',' << res.transferred << ',' << format_metric(res.rate) << ',' << format_metric(hit)
          << ',' << res.clamped << '\n';
    }
    report["attacks"].push_back(std::move(a));
  }

  const std::string json_path = (fs::path(out_dir) / "transfer_report.json").string();
  const std::string csv_path = (fs::path(out_dir) / "transfer_report.csv").string();
  write_text(json_path, report.dump(2) + "\n");
  write_text(csv_path, csv.str());
  if (written) {
    written->push_back(json_path);
    written->push_back(csv_path);
  }
  return csv_path;
}

std::string write_channel_stats(const Experiment& exp, const std::vector<AttackRun>& runs, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto spec = preprocess_spec(exp.source.model.preprocess);
  std::ostringstream csv;
  csv << "images,metric,ch0_min,ch0_max,ch1_min,ch1_max,ch2_min,ch2_max\n";

  auto emit = [&](const std::string& label, const std::vector<Image>& images) {
    if (images.empty()) return;
    const auto table = corpus_channel_table(images, spec);
    csv << label << ",limit";
    for (const auto& l : table.limits) csv << ',' << fmt6(l.lo) << ',' << fmt6(l.hi);
    csv << '\n';
    const std::pair<const char*, double ExtremaAggregate::*> rows[] = {
        {"minimum", &ExtremaAggregate::min},
        {"average", &ExtremaAggregate::avg},
        {"maximum", &ExtremaAggregate::max},
        {"std", &ExtremaAggregate::stddev},
    };
    for (const auto& [name, field] : rows) {
      csv << label << ',' << name;
      for (const auto& ch : table.channels) csv << ',' << fmt6(ch.of_minima.*field) << ',' << fmt6(ch.of_maxima.*field);
      csv << '\n';
    }
  };

  std::vector<Image> clean;
  for (const auto& s : to_samples(exp.corpus, spec)) clean.push_back(s.image);
  emit("clean", clean);
  for (const auto& run : runs) {
    std::vector<Image> adv;
    for (const auto& r : run.records()) adv.push_back(r.adversarial);
    emit(run.name, adv);
  }
  const std::string path = (fs::path(out_dir) / "channel_stats.csv").string();
  write_text(path, csv.str());
  return path;
}

std::string write_zero_counts(const Experiment& exp, const std::vector<AttackRun>& runs, const std::string& out_dir) {
  ensure_dir(out_dir);
  std::ostringstream csv;
  csv << "attacked_model,attack,population,images,clean_min,clean_avg,clean_max,clean_std,adv_min,adv_avg,adv_max,"
         "adv_std\n";
  for (const auto& run : runs) {
    const auto records = run.records();
    const auto eligible = select_eligible(records);
    std::vector<double> clean, adv;
    for (const auto& r : eligible) {
      clean.push_back(static_cast<double>(zero_count(r.original.pixels)));
      adv.push_back(static_cast<double>(zero_count(r.adversarial.pixels)));
    }
    csv << exp.source.name << ',' << run.name << ",eligible," << eligible.size();
    for (const auto& s : {summarize(clean), summarize(adv)}) {
      if (s) {
        csv << ',' << fmt6(s->min) << ',' << fmt6(s->avg) << ',' << fmt6(s->max) << ',' << fmt6(s->stddev);
      } else {
        csv << ",-,-,-,-";
      }
    }
    csv << '\n';
  }
  const std::string path = (fs::path(out_dir) / "zero_counts.csv").string();
  write_text(path, csv.str());
  return path;
}

std::string write_verdicts(const Experiment& exp, const std::vector<AttackRun>& runs,
                           const std::vector<DetectorEntry>& detectors, const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) ensure_dir(parent.string());
  const auto spec = preprocess_spec(exp.source.model.preprocess);
  std::ostringstream out;

  std::map<std::string, Model> extra_models;
  for (const auto& d : detectors) {
    if (d.detector == "disagreement" && !d.model.empty() && !extra_models.count(d.model)) {
      extra_models.emplace(d.model, load_model(d.model));
    }
  }

  auto emit = [&](const DetectionVerdict& v, const std::string& image_id) {
    json line{{"detector", v.detector}, {"flagged", v.flagged},   {"score", v.score},
              {"threshold", v.threshold}, {"image_id", image_id}, {"channel", nullptr}};
    if (v.channel) line["channel"] = *v.channel;
    out << line.dump() << '\n';
  };

  auto verdict = [&](const DetectorEntry& d, const Image& pre) -> DetectionVerdict {
    if (d.detector == "gap") return gap_detect(pre, spec, d.epsilon);
    if (d.detector == "shift") return shift_detect(pre, d.channel, d.epsilon);
    if (d.detector == "zero") return zero_detect(pre, d.threshold);
    const Model& other = d.model.empty() ? exp.targets.front().model : extra_models.at(d.model);
    return disagreement_detect(exp.source.model, other, invert(spec, pre).raw);
  };

  const auto clean = to_samples(exp.corpus, spec);
  for (const auto& d : detectors) {
    for (std::size_t i = 0; i < clean.size(); ++i) emit(verdict(d, clean[i].image), exp.corpus.entries[i].id);
    for (const auto& run : runs) {
      for (std::size_t i = 0; i < run.items.size(); ++i) {
        if (!run.items[i].record) continue;
        emit(verdict(d, run.items[i].record->adversarial), run.name + "/" + exp.corpus.entries[i].id);
      }
    }
  }
  write_text(path, out.str());
  return path;
}

std::string write_sweep(const std::vector<SweepRow>& rows, const std::string& out_dir) {
  ensure_dir(out_dir);
  std::ostringstream csv;
  csv << "fgsm_epsilon,max_linf\n";
  for (const auto& r : rows) csv << fmt6(r.epsilon) << ',' << fmt6(r.max_linf) << '\n';
  const std::string path = (fs::path(out_dir) / "saturation_sweep.csv").string();
  write_text(path, csv.str());
  return path;
}

// ---- records ------------------------------------------------------------------------

std::vector<std::string> write_records(const std::vector<AttackRun>& runs, const Experiment& exp,
                                       const std::string& dir) {
  std::vector<std::string> written;
  for (const auto& run : runs) {
    const fs::path tensor_dir = fs::path(dir) / run.name;
    ensure_dir(tensor_dir.string());
    std::ostringstream lines;
    for (std::size_t i = 0; i < run.items.size(); ++i) {
      const auto& item = run.items[i];
      json line{{"index", i}, {"image_id", exp.corpus.entries[i].id}, {"error", item.error}};
      if (item.record) {
        const auto& r = *item.record;
        const std::string rel = run.name + "/" + std::to_string(i) + ".pxt";
        write_tensor_file(r.adversarial.pixels, (fs::path(dir) / rel).string());
        line["true_label"] = r.true_label;
        line["clean_pred"] = r.clean_pred;
        line["adv_pred"] = r.adv_pred;
        line["target"] = r.target ? json(*r.target) : json(nullptr);
        line["linf"] = r.linf;
        line["l2"] = r.l2;
        line["succeeded"] = r.succeeded;
        line["adversarial"] = rel;
      }
      lines << line.dump() << '\n';
    }
    const std::string path = (fs::path(dir) / (run.name + ".jsonl")).string();
    write_text(path, lines.str());
    written.push_back(path);
  }
  return written;
}

std::vector<AttackRun> read_records(const Experiment& exp, const std::string& dir) {
  const auto spec = preprocess_spec(exp.source.model.preprocess);
  const auto clean = to_samples(exp.corpus, spec);
  std::vector<AttackRun> runs;
  for (std::size_t a = 0; a < exp.config.attacks.size(); ++a) {
    const auto& entry = exp.config.attacks[a];
    const std::string path = (fs::path(dir) / (entry.name + ".jsonl")).string();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open records '" + path + "'");
    AttackRun run{entry.name, entry.config, {}};
    run.config.seed = effective_seed(exp, entry, a);
    run.items.resize(clean.size());
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
      ++line_no;
      if (text.empty()) continue;
      try {
        const json line = json::parse(text);
        const std::size_t i = line.at("index").get<std::size_t>();
        if (i >= clean.size()) throw ValidationError("record index out of range");
        auto& item = run.items[i];
        item.error = line.at("error").get<std::string>();
        if (!line.contains("adversarial")) continue;
        AdvRecord r;
        r.original = clean[i].image;
        r.adversarial = Image{read_tensor_file((fs::path(dir) / line.at("adversarial").get<std::string>()).string()),
                              spec.name};
        r.true_label = line.at("true_label").get<std::size_t>();
        r.clean_pred = line.at("clean_pred").get<std::size_t>();
        r.adv_pred = line.at("adv_pred").get<std::size_t>();
        if (!line.at("target").is_null()) r.target = line.at("target").get<std::size_t>();
        r.succeeded = line.at("succeeded").get<bool>();
        // Stored pixels are float32; recompute so the fields match the pair.
        r.linf = linf_distance(r.original.pixels, r.adversarial.pixels);
        r.l2 = l2_distance(r.original.pixels, r.adversarial.pixels);
        item.record = std::move(r);
      } catch (const json::exception& e) {
        throw ValidationError(path + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

// ---- pipeline -------------------------------------------------------------------------

std::vector<std::string> run_experiment(const std::string& config_path, const RunOptions& opts) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  const std::string out_dir = opts.out_dir.empty() ? cfg.out_dir : opts.out_dir;
  const Experiment exp = load_experiment(cfg);
  ensure_dir(out_dir);

  const auto runs = run_attacks(exp, opts.workers);
  std::vector<std::string> written;
  write_transfer_reports(exp, runs, out_dir, &written);
  written.push_back(write_channel_stats(exp, runs, out_dir));
  written.push_back(write_zero_counts(exp, runs, out_dir));
  written.push_back(write_verdicts(exp, runs, cfg.detectors, (fs::path(out_dir) / "verdicts.jsonl").string()));
  written.push_back(write_sweep(saturation_sweep(exp, cfg.saturation_sweep, opts.workers), out_dir));
  return written;
}

}  // namespace pixlab
