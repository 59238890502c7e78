// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "oracles.hpp"
#include "tmrec/als.hpp"
#include "tmrec/artifacts.hpp"
#include "tmrec/baselines.hpp"
#include "tmrec/bench.hpp"
#include "tmrec/explain.hpp"
#include "tmrec/metrics.hpp"
#include "tmrec/pipeline.hpp"
#include "tmrec/synthetic.hpp"
#include "tmrec/tm.hpp"

namespace fs = std::filesystem;
using namespace tmrec;

namespace {

constexpr double kPlantedAccuracy = 0.95;
constexpr std::size_t kPlantedMaxEpochs = 30;
constexpr double kPlantedSeconds = 60.0;
constexpr double kXorTm = 0.99;
constexpr double kXorLr = 0.60;
constexpr std::size_t kXorTmEpochs = 50;
constexpr double kMapTolerance = 1e-12;
constexpr double kAlsSlack = 1e-12;  // relative, absorbs summation rounding only
constexpr double kAlsRmse = 0.05;
constexpr double kGradientRelError = 1e-4;
constexpr std::size_t kGradientProbes = 50;
constexpr double kEfficiency = 1e-9;
constexpr double kSampledVsExact = 0.05;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::cout << (o.pass ? "PASS " : "FAIL ") << id << ": " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

std::string num(double v, int precision = 4) { return detail::format_fixed(v, precision); }

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---- full-scale pipeline -----------------------------------------------

Outcome full_scale_pipeline() {
  // Real tables when provided, otherwise synthetic tables in the same layout,
  // written to CSV and read back through the loader.
  const char* env = std::getenv("TMREC_HM_DIR");
  const auto tmp = fs::temp_directory_path() / ("tmrec_acceptance_tables_" + std::to_string(::getpid()));
  TablePaths paths;
  if (env) {
    const fs::path d(env);
    paths = {(d / "transactions_train.csv").string(), (d / "customers.csv").string(), (d / "articles.csv").string()};
  } else {
    SyntheticSpec spec;
    spec.num_customers = 2000;
    spec.num_items = 1024;
    spec.noise_rate = 1.0;
    spec.popularity_skew = 0.8;
    write_tables(generate_synthetic(spec).log, tmp);
    paths = {(tmp / "transactions.csv").string(), (tmp / "customers.csv").string(), (tmp / "articles.csv").string()};
  }
  const auto log = load_tables(paths);
  fs::remove_all(tmp);
  PipelineConfig pc;  // 400 classes, history 7, rank 16
  const auto data = prepare_data(log, pc);
  ModelOptions mo;  // 200 clauses per class
  mo.kind = ModelKind::tm;
  mo.epochs = 1;
  mo.evaluate_each_epoch = false;
  const auto model = train_model(data, mo);
  const auto row = evaluate_model(model, data, {1, 12, 100});
  bool ok = data.universe.size() == 400 && model.tm->config().clauses_per_class == 200 && row.maps.size() == 3;
  std::string d = std::string(env ? "supplied tables" : "synthetic tables") +
                  ", classes=" + std::to_string(data.universe.size()) + ", clauses=200";
  for (const auto& m : row.maps) {
    ok = ok && m.value >= 0.0 && m.value <= 1.0;
    d += ", MAP@" + std::to_string(m.k) + "=" + num(m.value);
  }
  return {ok, d};
}

// ---- planted rules ------------------------------------------------------

Outcome planted_rules() {
  PlantedClassificationSpec spec;  // 16 classes, 40 features, 2-3 literals
  spec.seed = 1;
  const auto rules = random_class_rules(spec);
  const auto train = sample_planted(rules, spec.num_features, 5000, 0.0, 2);
  const auto test = sample_planted(rules, spec.num_features, 1000, 0.0, 3);
  TMConfig cfg;
  cfg.num_classes = 16;
  cfg.num_features = 40;
  cfg.clauses_per_class = 20;
  cfg.threshold = 15;
  cfg.specificity = 3.9;
  cfg.seed = 4;
  TMModel model(cfg);
  TMTrainer trainer(cfg, 1);
  const auto start = std::chrono::steady_clock::now();
  double acc = 0.0;
  std::size_t epoch = 0;
  while (epoch < kPlantedMaxEpochs && acc < kPlantedAccuracy) {
    trainer.train_epoch(model, train);
    ++epoch;
    acc = accuracy(model, test);
  }
  const double secs = seconds_since(start);
  return {acc >= kPlantedAccuracy && secs < kPlantedSeconds,
          "test accuracy " + num(acc) + " after " + std::to_string(epoch) + " epochs in " + num(secs, 2) +
              " s (need >= " + num(kPlantedAccuracy, 2) + " within " + std::to_string(kPlantedMaxEpochs) +
              " epochs, < " + num(kPlantedSeconds, 0) + " s)"};
}

// ---- XOR separation -----------------------------------------------------

RealDataset signed_reals(const std::vector<LabeledVector>& data) {
  RealDataset d;
  d.x.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data[0].x.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data[i].x.size(); ++j) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i].x.test(j) ? 1.0 : -1.0;
    }
    d.labels.push_back(data[i].label);
  }
  return d;
}

Outcome xor_separation() {
  const auto train = generate_xor(2000, 4, 1);
  const auto test = generate_xor(1000, 4, 2);
  // Worst case over several seeds, so a single lucky seed cannot carry the check.
  double tm_acc = 1.0;
  for (std::uint64_t seed : {5U, 6U, 7U}) {
    TMConfig cfg;
    cfg.num_classes = 2;
    cfg.num_features = train[0].x.size();
    cfg.clauses_per_class = 20;
    cfg.threshold = 10;
    cfg.specificity = 3.9;
    cfg.seed = seed;
    TMModel tm(cfg);
    TMTrainer trainer(cfg);
    for (std::size_t e = 0; e < kXorTmEpochs; ++e) trainer.train_epoch(tm, train);
    tm_acc = std::min(tm_acc, accuracy(tm, test));
  }

  auto lr = make_lr(train[0].x.size(), 2, 0);
  SGDConfig sgd;
  sgd.epochs = 30;
  train_sgd(lr, signed_reals(train), sgd);
  const double lr_acc = accuracy(lr, signed_reals(test));
  return {tm_acc >= kXorTm && lr_acc <= kXorLr,
          "TM worst of 3 seeds " + num(tm_acc) + " (need >= " + num(kXorTm, 2) + "), LR " + num(lr_acc) + " (need <= " +
              num(kXorLr, 2) + ")"};
}

// ---- MAP@k --------------------------------------------------------------

Outcome map_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int universe = 5 + static_cast<int>(rng() % 60);
    std::vector<int> items(static_cast<std::size_t>(universe));
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);
    const auto len = static_cast<std::size_t>(rng() % static_cast<unsigned>(universe + 1));
    std::vector<int> ranked(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(len));
    std::set<int> rel;
    const int nrel = 1 + static_cast<int>(rng() % 10);
    for (int r = 0; r < nrel; ++r) rel.insert(static_cast<int>(rng() % static_cast<unsigned>(universe)));
    const int k = 1 + static_cast<int>(rng() % 100);
    const std::unordered_set<int> rel_u(rel.begin(), rel.end());
    worst = std::max(worst, std::abs(ap_at_k(ranked, rel_u, static_cast<std::size_t>(k)) - oracle::naive_ap(ranked, rel, k)));
  }
  const double third = ap_at_k(std::vector<int>{7, 8, 9, 10}, std::unordered_set<int>{9}, 12);
  return {worst <= kMapTolerance && third == 1.0 / 3.0,
          "max |AP - naive AP| over 1000 cases = " + detail::format_double(worst) + ", AP(rank 3, k=12) = " +
              detail::format_double(third)};
}

// ---- ALS ----------------------------------------------------------------

Outcome als_checks() {
  std::mt19937_64 rng(3);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int u = 0; u < 200; ++u) {
    for (int i = 0; i < 100; ++i) {
      if (rng() % 10 == 0) pairs.emplace_back("u" + std::to_string(u), "i" + std::to_string(i));
    }
  }
  // Keep every user and item present.
  for (int u = 0; u < 200; ++u) pairs.emplace_back("u" + std::to_string(u), "i" + std::to_string(u % 100));
  const auto fb = ImplicitFeedback::from_pairs(pairs);
  ALSConfig cfg;
  cfg.rank = 8;
  cfg.sweeps = 10;
  std::vector<double> trace;
  fit_als(fb, cfg, &trace);
  bool monotone = trace.size() == 11;
  std::size_t violations = 0;
  for (std::size_t s = 1; s < trace.size(); ++s) {
    if (trace[s] > trace[s - 1] * (1.0 + kAlsSlack)) ++violations;
  }
  monotone = monotone && violations == 0;

  std::vector<std::pair<std::string, std::string>> block;
  for (int u = 0; u < 20; ++u) {
    for (int i = 0; i < 15; ++i) {
      if ((u < 10) == (i < 7)) block.emplace_back("u" + std::to_string(u), "i" + std::to_string(i));
    }
  }
  ALSConfig c2;
  c2.rank = 2;
  c2.sweeps = 30;
  const auto f = fit_als(ImplicitFeedback::from_pairs(block), c2);
  double se = 0.0;
  for (const auto& [u, i] : block) {
    const double s = f.user_or_zero(u).dot(f.item_or_zero(i));
    se += (1.0 - s) * (1.0 - s);
  }
  const double rmse = std::sqrt(se / static_cast<double>(block.size()));
  return {monotone && rmse < kAlsRmse,
          "200x100 rank 8: " + std::to_string(trace.size() - 1) + " sweeps, " + std::to_string(violations) +
              " increases (objective " + num(trace.front(), 2) + " -> " + num(trace.back(), 2) +
              "); rank-2 block RMSE " + detail::format_double(rmse) + " (need < " + num(kAlsRmse, 2) + ")"};
}

// ---- gradient checks ----------------------------------------------------

struct GradResult {
  std::size_t probes = 0;
  double worst = 0.0;
};

GradResult gradient_check(FeedForwardModel model, const RealDataset& data) {
  FeedForwardModel::Gradients grad;
  model.loss_and_gradient(data.x, data.labels, &grad);
  GradResult r;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    const double numeric = oracle::central_difference(
        [&](double v) {
          param = v;
          return model.loss_and_gradient(data.x, data.labels, nullptr);
        },
        saved, 1e-5);
    param = saved;
    const double rel = std::abs(analytic - numeric) / std::max(1e-7, std::abs(analytic) + std::abs(numeric));
    r.worst = std::max(r.worst, rel);
    ++r.probes;
  };
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < model.weights[l].size(); ++i) probe(model.weights[l].data()[i], grad.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) probe(model.biases[l](i), grad.biases[l](i));
  }
  return r;
}

Outcome gradient_checks() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  RealDataset data;
  data.x.resize(12, 10);
  for (Eigen::Index i = 0; i < data.x.size(); ++i) data.x.data()[i] = g(rng);
  for (int i = 0; i < 12; ++i) data.labels.push_back(static_cast<std::size_t>(i % 5));
  const auto lr = gradient_check(make_lr(10, 5, 1), data);
  const auto mlp = gradient_check(make_mlp(10, 5, 2, {6, 4}), data);
  const bool ok = lr.probes >= kGradientProbes && mlp.probes >= kGradientProbes && lr.worst < kGradientRelError &&
                  mlp.worst < kGradientRelError;
  return {ok, "LR " + std::to_string(lr.probes) + " probes, max rel error " + detail::format_double(lr.worst) +
                  "; MLP " + std::to_string(mlp.probes) + " probes, max rel error " +
                  detail::format_double(mlp.worst)};
}

// ---- Shapley ------------------------------------------------------------

TMModel random_tm(std::size_t features, std::mt19937_64& rng) {
  TMConfig cfg;
  cfg.num_classes = 2;
  cfg.clauses_per_class = 10;
  cfg.num_features = features;
  cfg.threshold = 5;
  TMModel m(cfg);
  const int n = cfg.states_per_action;
  std::uniform_int_distribution<int> below(1, n), above(n + 1, 2 * n);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < 10; ++j) {
      for (std::size_t l = 0; l < 2 * features; ++l) m.bank(c).set_state(j, l, rng() % 8 == 0 ? above(rng) : below(rng));
    }
  }
  return m;
}

std::vector<double> random_binary(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng() & 1U);
  return v;
}

Outcome shapley_checks() {
  std::mt19937_64 rng(21);
  double worst_exact_eff = 0.0, worst_sampled_eff = 0.0, worst_gap = 0.0, worst_additive = 0.0;
  for (int t = 0; t < 5; ++t) {
    const auto model = random_tm(8, rng);
    std::vector<std::vector<double>> background;
    for (int b = 0; b < 20; ++b) background.push_back(random_binary(8, rng));
    const auto x = random_binary(8, rng);
    const auto scorer = tm_scorer(model, 0);
    const auto f = [&](const std::vector<double>& z) { return scorer(z); };
    const auto exact = oracle::exact_shapley(f, background, x);
    double base = 0.0;
    for (const auto& b : background) base += f(b);
    base /= static_cast<double>(background.size());
    const double total = std::accumulate(exact.begin(), exact.end(), 0.0);
    worst_exact_eff = std::max(worst_exact_eff, std::abs(total - (f(x) - base)));

    ShapleyOptions opt;
    opt.permutations = 2000;
    opt.seed = static_cast<std::uint64_t>(t);
    const auto sampled = shapley_attribute(scorer, background, x, 0, opt);
    const double stotal = std::accumulate(sampled.values.begin(), sampled.values.end(), 0.0);
    worst_sampled_eff = std::max(worst_sampled_eff, std::abs(stotal - (sampled.prediction - sampled.baseline)));
    for (std::size_t j = 0; j < 8; ++j) worst_gap = std::max(worst_gap, std::abs(sampled.values[j] - exact[j]));
  }
  // Additive scorer: phi_j = w_j (x_j - mean_b b_j).
  {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> w(6);
    for (auto& v : w) v = g(rng);
    std::vector<std::vector<double>> background(10, std::vector<double>(6));
    for (auto& b : background) {
      for (auto& v : b) v = g(rng);
    }
    std::vector<double> x(6);
    for (auto& v : x) v = g(rng);
    const Scorer additive = [&](std::span<const double> z) {
      double s = 0.5;
      for (std::size_t j = 0; j < z.size(); ++j) s += w[j] * z[j];
      return s;
    };
    ShapleyOptions opt;
    opt.permutations = 2000;
    const auto r = shapley_attribute(additive, background, x, 0, opt);
    for (std::size_t j = 0; j < 6; ++j) {
      double mean = 0.0;
      for (const auto& b : background) mean += b[j];
      mean /= static_cast<double>(background.size());
      const double closed = w[j] * (x[j] - mean);
      worst_additive = std::max(worst_additive, std::abs(r.values[j] - closed) - 3.0 * r.standard_error[j]);
    }
  }
  const bool ok = worst_exact_eff <= kEfficiency && worst_sampled_eff <= kEfficiency && worst_gap <= kSampledVsExact &&
                  worst_additive <= 1e-9;
  return {ok, "exact efficiency error " + detail::format_double(worst_exact_eff) + ", sampled efficiency error " +
                  detail::format_double(worst_sampled_eff) + ", max |sampled - exact| at 2000 samples " +
                  num(worst_gap) + " (need <= " + num(kSampledVsExact, 2) +
                  "), additive closed form excess over 3 SE " + detail::format_double(std::max(0.0, worst_additive))};
}

// ---- explanation bookkeeping --------------------------------------------

Outcome explanation_bookkeeping() {
  std::mt19937_64 rng(8);
  std::size_t mismatches = 0, checked = 0;
  for (int t = 0; t < 100; ++t) {
    TMConfig cfg;
    cfg.num_classes = 3;
    cfg.clauses_per_class = 12;
    cfg.num_features = 6 + rng() % 20;
    cfg.threshold = 6;
    TMModel m(cfg);
    const int n = cfg.states_per_action;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      for (std::size_t j = 0; j < cfg.clauses_per_class; ++j) {
        for (std::size_t l = 0; l < 2 * cfg.num_features; ++l) {
          m.bank(c).set_state(j, l, rng() % 10 == 0 ? n + 1 + static_cast<int>(rng() % static_cast<unsigned>(n))
                                                   : 1 + static_cast<int>(rng() % static_cast<unsigned>(n)));
        }
      }
    }
    BinaryFeatureVector x(cfg.num_features);
    for (std::size_t i = 0; i < cfg.num_features; ++i) x.set(i, (rng() & 1U) != 0);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      const auto e = explain_class(m, c, x);
      int sum = 0;
      for (const auto& k : e.contributions) sum += k.vote;
      ++checked;
      if (sum != e.score || e.score != class_score(m, c, x)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(checked) + " class explanations over 100 (model, input) pairs, " +
                               std::to_string(mismatches) + " where clause votes do not sum to the class score"};
}

// ---- scaling ------------------------------------------------------------

Outcome scaling() {
  const auto log = generate_synthetic(scaling_synthetic_spec(0)).log;
  ModelOptions mo;
  mo.kind = ModelKind::tm;
  mo.clauses = 20;
  mo.epochs = 10;
  const auto r = run_scaling_suite(mo, log, {8, 64, 512});
  bool ok = r.rows.size() == 3;
  std::string d;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    if (row.skipped) {
      ok = false;
      d += "items " + std::to_string(row.item_count) + " skipped: " + *row.skipped + "; ";
      continue;
    }
    if (i > 0) {
      ok = ok && row.dataset_rows >= r.rows[i - 1].dataset_rows &&
           row.absolute.train_epochs > r.rows[i - 1].absolute.train_epochs;
    }
    d += std::to_string(row.item_count) + " items: " + std::to_string(row.dataset_rows) + " rows, train x" +
         num(row.relative->train_epochs, 3) + "; ";
  }
  ok = ok && !r.rows.empty() && r.rows[0].relative && r.rows[0].relative->train_epochs == 1.0 &&
       r.rows[0].relative->train_1_epoch == 1.0 && r.rows[0].relative->test_1_epoch == 1.0;
  return {ok, d + "smallest relative = 1.0, TM train time strictly increasing"};
}

// ---- CLI reproducibility ------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TMREC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome reproducibility() {
  const auto dir = fs::temp_directory_path() / ("tmrec_acceptance_cli_" + std::to_string(::getpid()));
  const std::string o = " --out " + dir.string() + " --seed 3 --threads 1";
  const std::vector<std::string> commands{
      "prepare --synthetic --syn-customers 600 --syn-items 32 --syn-noise 0.2 --cutoff-days 20 --classes 24 --rank 4 "
      "--als-sweeps 4 --history 3",
      "train --model tm --clauses 20 --epochs 3",
      "train --model mlp --epochs 3 --hidden 16,8",
      "train --model lr --epochs 3",
      "train --model popularity",
      "evaluate --model tm",
      "evaluate --model mlp",
      "evaluate --model lr",
      "evaluate --model popularity",
      "explain --model tm --samples 3 --permutations 100",
      "explain --model mlp --samples 3 --permutations 100",
  };
  std::vector<std::map<std::string, std::string>> snaps;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(dir);
    for (const auto& c : commands) {
      if (const int code = run_cli(c + o); code != 0) {
        fs::remove_all(dir);
        return {false, "'" + c + "' exited with " + std::to_string(code)};
      }
    }
    snaps.push_back(snapshot(dir));
  }
  fs::remove_all(dir);
  std::size_t differing = 0, models = 0, metrics = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : snaps[0]) {
    auto it = snaps[1].find(name);
    if (it == snaps[1].end() || it->second != bytes) {
      if (first_diff.empty()) first_diff = name;
      ++differing;
    }
    models += name.rfind("model_", 0) == 0;
    metrics += name.rfind("metrics_", 0) == 0;
  }
  const bool ok = differing == 0 && snaps[0].size() == snaps[1].size() && models == 4 && metrics == 4;
  return {ok, std::to_string(commands.size()) + " commands run twice, " + std::to_string(snaps[0].size()) +
                  " files compared (" + std::to_string(models) + " models, " + std::to_string(metrics) +
                  " metric reports), " + std::to_string(differing) + " differ" +
                  (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main() {
  report("full-scale-pipeline", full_scale_pipeline);
  report("planted-rules", planted_rules);
  report("xor-separation", xor_separation);
  report("map-oracle", map_oracle);
  report("als", als_checks);
  report("gradient-checks", gradient_checks);
  report("shapley", shapley_checks);
  report("explanation-bookkeeping", explanation_bookkeeping);
  report("scaling", scaling);
  report("cli-reproducibility", reproducibility);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
