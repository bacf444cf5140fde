// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "experiment_fixture.h"
#include "pixlab/attacks.h"
#include "pixlab/detectors.h"
#include "pixlab/experiment.h"
#include "pixlab/harness.h"
#include "pixlab/synthetic.h"
#include "support.h"

using namespace pixlab;
using namespace pixlab::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / "pixlab_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Corpus fixture_corpus(std::size_t images, std::uint64_t seed) {
  SyntheticCorpusOptions opts;
  opts.images = images;
  opts.seed = seed;
  return Corpus{synthetic_corpus(opts), ""};
}

const std::array<ClipPolicy, 4> kPolicies = {ClipPolicy{ClipKind::kNone}, ClipPolicy{ClipKind::kModelBox},
                                             ClipPolicy{ClipKind::kPixelBox}, ClipPolicy{ClipKind::kUnitBox}};

// 1 ------------------------------------------------------------------------
Outcome saturation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch("saturation");
  Rng rng(151);
  std::vector<CorpusEntry> entries;
  for (int i = 0; i < 20; ++i) {
    auto raw = random_raw(rng, 6, 6);
    if (i == 0) raw.pixels.at(2, 3, 2) = 255.0;  // blue
    entries.push_back({fmt("img_%02d.pxt", i), raw, 0});
  }
  write_corpus((dir / "corpus").string(), entries);
  save_model(monotone_model({6, 6, 3}, "caffe-bgr"), (dir / "monotone.pxm").string());
  OnDiskExperiment e{dir, {{"corpus", "corpus/manifest.csv"},
                           {"source_model", "monotone.pxm"},
                           {"clip_policy", "pixel-box"},
                           {"saturation_sweep", {150, 160}}}};
  const auto exp = load_experiment(load_experiment_config(e.write_config()));
  const auto rows = saturation_sweep(exp, exp.config.saturation_sweep, 1);
  const std::string csv = slurp(write_sweep(rows, (dir / "out").string()));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = rows.size() == 2 && std::abs(rows[0].max_linf - 150.0) <= 1e-6 &&
                  std::abs(rows[1].max_linf - 151.061) <= 1e-6 &&
                  csv == "fgsm_epsilon,max_linf\n150.000000,150.000000\n160.000000,151.061000\n" && secs < 5.0;
  return {ok, fmt("eps 150 -> %.6f, eps 160 -> %.6f, %.2f s", rows.at(0).max_linf, rows.at(1).max_linf, secs)};
}

// 2 ------------------------------------------------------------------------
Outcome limits() {
  const auto l = channel_limits(caffe_bgr_spec());
  const std::vector<ChannelRange> want = {{-103.939, 151.061}, {-116.779, 138.221}, {-123.680, 131.320}};
  return {l == want, fmt("(%.3f, %.3f) (%.3f, %.3f) (%.3f, %.3f)", l[0].lo, l[0].hi, l[1].lo, l[1].hi, l[2].lo, l[2].hi)};
}

// 3 ------------------------------------------------------------------------
Outcome pgd_shift() {
  const auto corpus = fixture_corpus(60, 3);
  const auto spec = inception_sym_spec();
  const Model m = train_fixture_model(corpus, spec.name, dense_architecture(3), 3, 3);
  const auto samples = to_samples(corpus, spec);
  PgdParams p;
  p.epsilon = 1.0;
  p.alpha = 0.25;
  p.steps = 7;
  const auto items = attack_batch(m, samples, AttackConfig{p, ClipPolicy{ClipKind::kUnitBox}, 3}, 4);
  std::vector<Image> clean, adv;
  for (const auto& s : samples) clean.push_back(s.image);
  for (const auto& it : items) {
    if (!it.record) return {false, "attack error: " + it.error};
    adv.push_back(it.record->adversarial);
  }
  const auto ct = corpus_channel_table(clean, spec);
  const auto at = corpus_channel_table(adv, spec);
  bool ok = true;
  std::string detail;
  for (std::size_t c = 0; c < 3; ++c) {
    const double amin = at.channels[c].of_minima.avg, amax = at.channels[c].of_maxima.avg;
    const double cmin = ct.channels[c].of_minima.avg;
    ok = ok && amin >= 0.0 && amax <= 1.0 && cmin < 0.0;
    detail += fmt("ch%zu clean min %.3f adv [%.3f, %.3f]; ", c, cmin, amin, amax);
  }
  return {ok, detail};
}

// 4 ------------------------------------------------------------------------
Outcome zero_explosion() {
  const auto corpus = fixture_corpus(100, 4);
  const auto spec = caffe_bgr_spec();
  const Model m = train_fixture_model(corpus, spec.name, conv_architecture(3), 3, 4);
  const auto samples = to_samples(corpus, spec);
  const auto items = attack_batch(m, samples, AttackConfig{CwLinfParams{}, ClipPolicy{ClipKind::kUnitBox}, 4}, 4);

  double clean_sum = 0.0, clean_max = 0.0;
  for (const auto& s : samples) {
    const double z = zero_detect(s.image).score;
    clean_sum += z;
    clean_max = std::max(clean_max, z);
  }
  std::vector<AdvRecord> records;
  for (const auto& it : items) {
    if (it.record) records.push_back(*it.record);
  }
  const auto eligible = select_eligible(records);
  double adv_sum = 0.0;
  for (const auto& r : eligible) adv_sum += zero_detect(r.adversarial).score;
  const double clean_mean = clean_sum / static_cast<double>(samples.size());
  const double adv_mean = eligible.empty() ? 0.0 : adv_sum / static_cast<double>(eligible.size());
  // A zero clean mean makes the ratio unbounded; demand a non-trivial adversarial count then.
  const bool ratio_ok = clean_mean > 0.0 ? adv_mean >= 1000.0 * clean_mean : adv_mean >= 1.0;
  const bool ok = !eligible.empty() && clean_max <= 5.0 && ratio_ok;
  return {ok, fmt("clean mean %.3f max %.0f, adversarial mean %.3f over %zu eligible of %zu", clean_mean, clean_max,
                  adv_mean, eligible.size(), samples.size())};
}

// 5 ------------------------------------------------------------------------
Outcome gradients() {
  double worst = 0.0;
  int checked = 0;
  for (auto f : {Family::kDense, Family::kConv, Family::kRelu, Family::kMaxPool}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Model m = family_model(f, 1000 + seed, {8, 8, 3});
      Rng rng(2000 + seed);
      const auto x = random_tensor(rng, {8, 8, 3}, -10, 10);
      const std::size_t label = rng.below(m.classes);
      const auto g = input_gradient(m, Image{x, "identity"}, label);
      const auto fd = fd_gradient([&](const Tensor& t) { return cross_entropy(forward_tensor(m, t), label); }, x, 1e-4);
      worst = std::max(worst, relative_error(g, fd));
      ++checked;
    }
  }
  return {worst <= 1e-4, fmt("%d model/input pairs, worst relative error %.3g", checked, worst)};
}

// 6 ------------------------------------------------------------------------
Outcome cw_kappa() {
  Rng rng(6);
  bool ok = true;
  double worst_ratio_err = 0.0;
  int planes = 0, margins = 0;
  for (double kappa : {0.0, 5.0}) {
    CwL2Params p;
    p.confidence = kappa;
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor x = random_tensor(rng, {3, 3, 3}, 50, 200);
      std::vector<double> w0(x.size()), w1(x.size(), 0.0);
      double dot = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        w0[i] = rng.uniform(-1.0, 1.0);
        dot += w0[i] * x[i];
        norm += w0[i] * w0[i];
      }
      const double margin = rng.uniform(5.0, 15.0);
      const Model lin = linear_model(x.shape(), "identity", w0, w1, margin - dot, 0.0);
      const double oracle = (margin + kappa) / std::sqrt(norm);
      for (const auto& clip : {kPolicies[0], kPolicies[1]}) {
        const auto r = cw_l2(lin, Image{x, "identity"}, 0, p, clip);
        ok = ok && r.succeeded && cw_margin(forward(lin, r.adversarial), 1) <= -kappa;
        worst_ratio_err = std::max(worst_ratio_err, std::abs(r.l2 - oracle) / oracle);
        ++planes;
      }
    }

    const auto corpus = fixture_corpus(12, 60);
    const Model m = train_fixture_model(corpus, "caffe-bgr", conv_architecture(3), 3, 6);
    CwL2Params q = p;
    q.iterations = 100;
    q.binary_steps = 5;
    q.learning_rate = 0.5;
    for (const auto& s : to_samples(corpus, caffe_bgr_spec())) {
      const auto r = cw_l2(m, s.image, s.label, q, kPolicies[1]);
      if (!r.succeeded) continue;
      ok = ok && r.target && cw_margin(forward(m, r.adversarial), *r.target) <= -kappa;
      ++margins;
    }
  }
  ok = ok && worst_ratio_err <= 0.1 && margins > 0;
  return {ok, fmt("%d plane oracles, worst |L2/oracle - 1| = %.4f; %d successful records checked", planes,
                  worst_ratio_err, margins)};
}

// 7 ------------------------------------------------------------------------
Outcome transfer_oracle() {
  Rng rng(7);
  int empties = 0;
  for (int table = 0; table < 100; ++table) {
    const std::size_t classes = 2 + rng.below(5);
    const std::size_t n = table % 10 == 0 ? rng.below(3) : rng.below(60);
    std::vector<AdvRecord> records(n);
    for (auto& r : records) {
      r.true_label = rng.below(classes);
      r.clean_pred = rng.below(2) ? r.true_label : rng.below(classes);
      r.adv_pred = rng.below(classes);
    }
    std::vector<std::size_t> brute;
    for (std::size_t i = 0; i < n; ++i) {
      if (records[i].clean_pred == records[i].true_label && records[i].adv_pred != records[i].true_label) {
        brute.push_back(i);
      }
    }
    const auto eligible = select_eligible(records);
    if (eligible.size() != brute.size()) return {false, fmt("table %d: eligible count differs", table)};
    std::vector<std::size_t> preds;
    std::size_t fooled = 0;
    for (std::size_t i : brute) {
      preds.push_back(rng.below(classes));
      fooled += preds.back() != records[i].true_label;
    }
    const auto res = transfer_rate(eligible, preds);
    if (brute.empty()) {
      ++empties;
      if (res.rate || format_metric(res.rate) != "-") return {false, fmt("table %d: empty set not '-'", table)};
    } else if (!res.rate || *res.rate != static_cast<double>(fooled) / static_cast<double>(brute.size())) {
      return {false, fmt("table %d: rate differs", table)};
    }
  }
  return {empties > 0, fmt("100 tables, %d with an empty eligible set", empties)};
}

// 8 ------------------------------------------------------------------------
Outcome eps_bound() {
  Rng rng(8);
  std::size_t records = 0, assertions = 0, violations = 0;
  const std::vector<LayerSpec> conv = {{LayerType::kConv2d, 3, 3}, {LayerType::kRelu, 0, 0},
                                       {LayerType::kFlatten, 0, 0}, {LayerType::kDense, 3, 0}};
  for (const char* pre : {"caffe-bgr", "inception-sym"}) {
    const auto spec = preprocess_spec(pre);
    const double scale = spec.name == "caffe-bgr" ? 255.0 : 2.0;
    for (int model_seed = 0; model_seed < 5; ++model_seed) {
      Model m = build_model({5, 5, 3}, pre, conv, model_seed);
      randomize_params(m, rng, spec.name == "caffe-bgr" ? 0.01 : 0.5);
      for (const auto& policy : kPolicies) {
        for (int i = 0; i < 250; ++i) {
          const auto x = apply(spec, random_raw(rng, 5, 5));
          const std::size_t label = rng.below(3);
          const double eps = scale * rng.uniform(0.0, 0.7);
          AttackParams params;
          if (i % 2 == 0) {
            const bool targeted = rng.below(2) == 1;
            std::optional<std::size_t> target;
            if (targeted) target = (label + 1 + rng.below(2)) % 3;
            params = FgsmParams{eps, targeted, target};
          } else {
            PgdParams p;
            p.epsilon = eps;
            p.alpha = eps / 4;
            p.steps = 5;
            p.random_starts = static_cast<int>(rng.below(2));
            p.targeted = rng.below(2) == 1;
            if (p.targeted) p.target = (label + 1 + rng.below(2)) % 3;
            params = p;
          }
          const auto r = run_attack(m, x, label, AttackConfig{params, policy, rng.below(1u << 30)});
          violations += linf_distance(x.pixels, r.adversarial.pixels) > eps;
          violations += r.linf > eps;
          assertions += 2;
          ++records;
        }
      }
    }
  }
  return {violations == 0 && records >= 10000,
          fmt("%zu records, %zu assertions, %zu violations", records, assertions, violations)};
}

// 9 ------------------------------------------------------------------------
Outcome detectors() {
  Rng rng(9);
  std::size_t checks = 0, bad = 0;
  auto expect = [&](bool cond) {
    ++checks;
    bad += !cond;
  };
  const auto caffe = caffe_bgr_spec();

  for (int trial = 0; trial < 300; ++trial) {
    const auto img = apply(caffe, random_raw(rng, 4, 4));
    double e1 = rng.uniform(0, 150), e2 = rng.uniform(0, 150);
    if (e1 > e2) std::swap(e1, e2);
    if (gap_detect(img, caffe, e2).flagged) expect(gap_detect(img, caffe, e1).flagged);
    const auto v = gap_detect(img, caffe, e1);
    expect(v.flagged == (v.score >= e1));
  }

  for (int trial = 0; trial < 300; ++trial) {
    auto t = random_tensor(rng, {4, 4, 3}, 0.0, 1.0);
    const std::size_t ch = rng.below(3);
    t.at(1 + rng.below(3), rng.below(4), ch) = 0.0;
    t.at(0, 0, ch) = 1.0;
    const double eps = trial == 0 ? 1.0 : 1.0 - rng.uniform();
    expect(shift_detect(Image{t, "inception-sym"}, ch, eps).flagged);
  }

  for (int trial = 0; trial < 300; ++trial) {
    const auto img = apply(caffe, random_raw(rng, 4, 4));
    const auto before = zero_detect(img).score;
    expect(zero_detect(clip(ClipPolicy{ClipKind::kUnitBox}, caffe, img)).score >= before);
    Image floored = img;
    for (std::size_t i = rng.below(3); i < floored.pixels.size(); i += 1 + rng.below(3)) {
      floored.pixels[i] = std::max(floored.pixels[i], 0.0);
    }
    expect(zero_detect(floored).score >= before);
  }

  const auto corpus = fixture_corpus(30, 90);
  const Model a = train_fixture_model(corpus, "caffe-bgr", dense_architecture(3), 3, 1);
  const Model b = train_fixture_model(corpus, "inception-sym", conv_architecture(3), 3, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = trial < 30 ? corpus.entries[trial].raw : random_raw(rng, 8, 8);
    expect(!disagreement_detect(a, a, raw).flagged);
    expect(!disagreement_detect(b, b, raw).flagged);
    const auto ab = disagreement_detect(a, b, raw), ba = disagreement_detect(b, a, raw);
    expect(ab.flagged == ba.flagged && ab.score == ba.score);
  }
  return {bad == 0, fmt("%zu property checks, %zu failures", checks, bad)};
}

// 10 -----------------------------------------------------------------------
Outcome determinism() {
  const auto dir = scratch("determinism");
  auto e = make_experiment(dir, 40, 10);
  const std::string cfg = e.write_config();
  const std::vector<std::pair<std::string, int>> runs = {{"a", 1}, {"b", 1}, {"c", 8}};
  for (const auto& [name, workers] : runs) {
    const std::string cmd = std::string(PIXLAB_BIN) + " run --config " + cfg + " --out " + (dir / name).string() +
                            " --workers " + std::to_string(workers) + " >/dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "pixlab run failed: " + cmd};
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto f = entry.path().filename();
    const auto ref = slurp(dir / "a" / f);
    if (ref.empty()) return {false, f.string() + " is empty"};
    if (ref != slurp(dir / "b" / f)) return {false, f.string() + " differs between reruns"};
    if (ref != slurp(dir / "c" / f)) return {false, f.string() + " differs between 1 and 8 workers"};
    ++files;
  }
  return {files == 6, fmt("%zu report files identical across two runs and workers 1 vs 8", files)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"saturation constant", saturation},
      {"channel limits", limits},
      {"pgd shift under unit-box", pgd_shift},
      {"zero-pixel explosion", zero_explosion},
      {"gradient correctness", gradients},
      {"cw-l2 kappa guarantee", cw_kappa},
      {"transfer-rate oracle", transfer_oracle},
      {"attack epsilon bound", eps_bound},
      {"detector properties", detectors},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
