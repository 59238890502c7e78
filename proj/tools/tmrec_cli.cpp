// tmrec: prepare -> train -> evaluate -> explain -> bench, plus synth.
// Stages communicate only through files in --out.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tmrec/artifacts.hpp"
#include "tmrec/bench.hpp"
#include "tmrec/explain.hpp"
#include "tmrec/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitArtifact = 3;

struct RunConfig {
  std::string out = "tmrec_out";
  std::uint64_t seed = 0;
  unsigned threads = 1;

  // input data
  std::string data_dir;
  std::string transactions;
  std::string customers;
  std::string articles;
  bool synthetic = false;
  std::size_t syn_customers = 2000;
  std::size_t syn_items = 64;
  std::size_t syn_features = 12;
  std::size_t syn_rule_bits = 3;
  double syn_noise = 0.0;
  std::size_t syn_min_purchases = 3;
  std::size_t syn_max_purchases = 8;
  int syn_days = 90;
  double syn_skew = 1.0;

  // prepare
  int cutoff_days = 30;
  std::size_t classes = 400;
  std::size_t history = 7;
  std::size_t bins = 8;
  std::size_t latent_bins = 8;
  std::size_t max_vocabulary = 64;
  bool no_latents = false;
  bool strict = false;
  std::size_t rank = 16;
  double regularization = 0.01;
  double alpha = 40.0;
  std::size_t als_sweeps = 15;

  // model
  std::string model = "tm";
  std::size_t clauses = 200;
  int threshold = 0;
  double specificity = 3.9;
  int states = 100;
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch = 64;
  std::vector<std::size_t> hidden = tmrec::kDefaultHiddenWidths;

  // evaluate
  std::vector<std::size_t> map_k{1, 12, 100};

  // explain
  std::size_t samples = 20;
  std::size_t background = 100;
  std::size_t permutations = 500;
  std::size_t top_m = 3;
  std::size_t flip_budget = 16;
  std::size_t beeswarm_top = 20;

  // bench
  std::vector<std::size_t> item_counts{8, 64, 512, 2048};
};

/// Error tagged with the module that raised it and the exit code to use.
struct Failure {
  std::string module;
  std::string message;
  int code;
};

template <typename F>
auto in_module(const char* module, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const tmrec::ArtifactError& e) {
    throw Failure{module, e.what(), kExitArtifact};
  } catch (const tmrec::FormatError& e) {
    // Unreadable on-disk artifacts are incompatibilities, not bad input.
    throw Failure{module, e.what(), std::string(module) == "artifacts" ? kExitArtifact : kExitData};
  } catch (const tmrec::Error& e) {
    throw Failure{module, e.what(), kExitData};
  }
}

fs::path prepared_dir(const RunConfig& c) { return fs::path(c.out) / "prepared"; }

tmrec::SyntheticSpec synthetic_spec(const RunConfig& c) {
  tmrec::SyntheticSpec s;
  s.num_customers = c.syn_customers;
  s.num_items = c.syn_items;
  s.num_features = c.syn_features;
  s.rule_bits = c.syn_rule_bits;
  s.noise_rate = c.syn_noise;
  s.min_purchases = c.syn_min_purchases;
  s.max_purchases = c.syn_max_purchases;
  s.days = c.syn_days;
  s.popularity_skew = c.syn_skew;
  s.seed = c.seed;
  return s;
}

tmrec::InteractionLog load_input(const RunConfig& c) {
  if (c.synthetic) {
    return in_module("synthetic", [&] { return tmrec::generate_synthetic(synthetic_spec(c)).log; });
  }
  tmrec::TablePaths paths{c.transactions, c.customers, c.articles};
  if (!c.data_dir.empty()) {
    const fs::path d(c.data_dir);
    if (paths.transactions.empty()) {
      paths.transactions = (fs::exists(d / "transactions_train.csv") ? d / "transactions_train.csv"
                                                                     : d / "transactions.csv").string();
    }
    if (paths.customers.empty()) paths.customers = (d / "customers.csv").string();
    if (paths.articles.empty()) paths.articles = (d / "articles.csv").string();
  }
  if (paths.transactions.empty() || paths.customers.empty() || paths.articles.empty()) {
    throw Failure{"dataset", "no input: pass --data DIR, the three table paths, or --synthetic", kExitData};
  }
  return in_module("dataset", [&] { return tmrec::load_tables(paths); });
}

tmrec::PipelineConfig pipeline_config(const RunConfig& c) {
  tmrec::PipelineConfig p;
  p.cutoff_days = c.cutoff_days;
  p.classes = c.classes;
  p.strict = c.strict;
  p.threads = c.threads;
  p.schema.history_length = c.history;
  p.schema.bins = c.bins;
  p.schema.latent_bins = c.latent_bins;
  p.schema.max_vocabulary = c.max_vocabulary;
  p.schema.use_latents = !c.no_latents;
  p.als.rank = c.rank;
  p.als.regularization = c.regularization;
  p.als.confidence_alpha = c.alpha;
  p.als.sweeps = c.als_sweeps;
  p.als.seed = c.seed;
  return p;
}

tmrec::ModelOptions model_options(const RunConfig& c) {
  tmrec::ModelOptions m;
  m.kind = in_module("cli", [&] { return tmrec::parse_model_kind(c.model); });
  m.clauses = c.clauses;
  m.threshold = c.threshold;
  m.specificity = c.specificity;
  m.states_per_action = c.states;
  m.epochs = c.epochs;
  m.sgd.learning_rate = c.learning_rate;
  m.sgd.batch_size = c.batch;
  m.hidden = c.hidden;
  m.seed = c.seed;
  m.threads = c.threads;
  return m;
}

void write_text(const fs::path& p, const std::string& text) {
  in_module("artifacts", [&] { tmrec::detail::write_text(p, text); });
}

tmrec::PreparedData load_prepared(const RunConfig& c) {
  return in_module("artifacts", [&] { return tmrec::load_prepared(prepared_dir(c)); });
}

fs::path model_path(const RunConfig& c) { return fs::path(c.out) / ("model_" + c.model + ".bin"); }

tmrec::RecommenderModel load_model(const RunConfig& c, const tmrec::PreparedData& data) {
  return in_module("artifacts", [&] { return tmrec::load_model(model_path(c), data); });
}

// ---- commands -----------------------------------------------------------

void cmd_synth(const RunConfig& c) {
  const auto log = load_input([&] {
    auto copy = c;
    copy.synthetic = true;
    return copy;
  }());
  in_module("dataset", [&] { tmrec::write_tables(log, c.out); });
  std::cout << "wrote " << log.transactions.size() << " transactions, " << log.customers->size()
            << " customers, " << log.items->size() << " articles to " << c.out << "\n";
}

void cmd_prepare(const RunConfig& c) {
  const auto log = load_input(c);
  const auto cfg = pipeline_config(c);
  const auto data = in_module("pipeline", [&] { return tmrec::prepare_data(log, cfg); });
  const auto manifest = in_module("artifacts", [&] { return tmrec::save_prepared(data, prepared_dir(c)); });
  std::cout << "prepared " << data.train.size() << " train / " << data.test.size() << " test examples, "
            << data.eval.size() << " evaluation customers, " << data.universe.size() << " classes, "
            << data.schema.bit_width() << " bits, " << data.schema.real_width() << " reals\n"
            << "excluded rows: train " << data.stats.train_excluded << ", test " << data.stats.test_excluded
            << "\nschema " << manifest["schema_hash"].get<std::string>() << ", universe "
            << manifest["universe_hash"].get<std::string>() << "\n";
}

void cmd_train(const RunConfig& c) {
  const auto data = load_prepared(c);
  const auto options = model_options(c);
  const auto log_path = fs::path(c.out) / ("train_log_" + c.model + ".jsonl");
  std::string log_text;
  const auto model = in_module(tmrec::to_string(options.kind) == "tm" ? "tm-core" : "baselines", [&] {
    return tmrec::train_model(data, options, [&](const tmrec::EpochLog& e) {
      const auto j = tmrec::epoch_to_json(e);
      log_text += j.dump() + "\n";
      std::cout << j.dump() << "\n";
    });
  });
  write_text(log_path, log_text);
  const auto bytes = tmrec::serialize(model, tmrec::model_metadata(model, data, options));
  in_module("artifacts", [&] { tmrec::detail::write_bytes(model_path(c), bytes); });
  std::cout << "wrote " << model_path(c).string() << "\n";
}

void cmd_evaluate(const RunConfig& c) {
  const auto data = load_prepared(c);
  const auto model = load_model(c, data);
  const auto row = in_module("metrics", [&] { return tmrec::evaluate_model(model, data, c.map_k); });
  write_text(fs::path(c.out) / ("metrics_" + c.model + ".json"), tmrec::detail::dump_json(tmrec::to_json(row)));

  // Combined table over every evaluated kind, in a fixed order.
  std::vector<tmrec::MetricRow> rows;
  for (const char* kind : {"tm", "mlp", "lr", "popularity"}) {
    const auto p = fs::path(c.out) / (std::string("metrics_") + kind + ".json");
    if (!fs::exists(p)) continue;
    rows.push_back(in_module("artifacts", [&] { return tmrec::metric_row_from_json(tmrec::detail::read_json(p)); }));
  }
  const auto table = tmrec::render_metric_table(rows);
  write_text(fs::path(c.out) / "metrics.txt", table);
  std::cout << table;
}

std::vector<std::vector<double>> as_rows(const tmrec::RecommenderModel& model,
                                         std::span<const tmrec::EncodedExample> examples) {
  std::vector<std::vector<double>> out;
  for (const auto& e : examples) {
    if (model.kind == tmrec::ModelKind::tm) {
      std::vector<double> z(e.bits.size());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = e.bits.test(i) ? 1.0 : 0.0;
      out.push_back(std::move(z));
    } else {
      out.push_back(e.reals);
    }
  }
  return out;
}

void cmd_explain(const RunConfig& c) {
  const auto data = load_prepared(c);
  const auto model = load_model(c, data);
  if (model.kind == tmrec::ModelKind::popularity) {
    throw Failure{"explain", "the popularity baseline has nothing to explain", kExitData};
  }
  const fs::path dir = fs::path(c.out) / ("explain_" + c.model);
  fs::create_directories(dir);
  const auto bit_names = data.schema.bit_names();
  const auto class_names = data.universe.items();
  const std::size_t n = std::min(c.samples, data.test.size());
  const std::span<const tmrec::EncodedExample> chosen(data.test.data(), n);

  in_module("explain", [&] {
    if (model.kind == tmrec::ModelKind::tm) {
      std::ostringstream clauses;
      for (std::size_t k = 0; k < model.num_classes; ++k) {
        const auto m = tmrec::clause_inclusion_matrix(*model.tm, k);
        std::ostringstream part;
        tmrec::write_inclusion_csv(m, bit_names, part);
        auto text = part.str();
        if (k > 0) text.erase(0, text.find('\n') + 1);  // one header
        clauses << text;
      }
      write_text(dir / "clauses.csv", clauses.str());

      const auto counts = tmrec::prediction_counts(model, data);
      const auto stats = tmrec::inclusion_stats(*model.tm, counts);
      std::ostringstream table;
      table << tmrec::render_inclusion_table(stats, class_names, 20) << "mean positive inclusions per feature: "
            << tmrec::detail::format_fixed(stats.mean_rate, 4) << "\n";
      write_text(dir / "inclusion_stats.txt", table.str());
      json sj;
      sj["total_positive_clauses"] = stats.total_positive_clauses;
      sj["mean_rate"] = stats.mean_rate;
      sj["classes"] = json::array();
      for (const auto& r : stats.classes) {
        sj["classes"].push_back({{"class", class_names[r.class_id]}, {"count", r.prediction_count},
                                 {"pos", r.pos}, {"not_pos", r.not_pos}, {"neg", r.neg}, {"not_neg", r.not_neg}});
      }
      write_text(dir / "inclusion_stats.json", tmrec::detail::dump_json(sj));

      std::string lines;
      for (const auto& e : chosen) {
        const auto ex = tmrec::explain_prediction(*model.tm, e.bits, c.top_m, c.flip_budget);
        auto j = tmrec::to_json(ex, bit_names, class_names);
        j["customer_id"] = e.customer_id;
        j["purchased"] = e.item_id;
        lines += j.dump() + "\n";
      }
      write_text(dir / "explanations.jsonl", lines);
    } else {
      const auto sums = tmrec::input_weight_sums(*model.net);
      std::vector<std::string> group_of(sums.size());
      for (const auto& g : tmrec::attribute_groups(data.schema, false)) {
        for (auto col : g.columns) group_of[col] = g.name;
      }
      const auto grouped = tmrec::grouped_weight_sums(sums, group_of);
      write_text(dir / "weights.txt", tmrec::render_weight_table(grouped));
      std::ostringstream csv;
      tmrec::detail::write_csv_row(csv, {"attribute", "mean_weight_sum"});
      for (const auto& w : grouped) tmrec::detail::write_csv_row(csv, {w.name, tmrec::detail::format_double(w.value)});
      write_text(dir / "weights.csv", csv.str());
    }

    // Model-agnostic attribution over whole attributes.
    const auto groups = tmrec::attribute_groups(data.schema, model.kind == tmrec::ModelKind::tm);
    std::vector<std::vector<std::size_t>> players;
    std::vector<std::string> player_names;
    for (const auto& g : groups) {
      players.push_back(g.columns);
      player_names.push_back(g.name);
    }
    const auto background = as_rows(model, std::span(data.train.data(), std::min(c.background, data.train.size())));
    const auto inputs = as_rows(model, chosen);
    std::vector<tmrec::ShapleyReport> reports;
    std::string lines;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto cls = model.predict(chosen[i].bits, chosen[i].reals);
      const auto scorer = model.kind == tmrec::ModelKind::tm ? tmrec::tm_scorer(*model.tm, cls)
                                                             : tmrec::network_scorer(*model.net, cls);
      tmrec::ShapleyOptions opt;
      opt.permutations = c.permutations;
      opt.seed = c.seed + i;
      opt.threads = c.threads;
      reports.push_back(tmrec::shapley_attribute(scorer, background, inputs[i], cls, opt, &players));
      auto j = tmrec::to_json(reports.back(), player_names);
      j["customer_id"] = chosen[i].customer_id;
      j["class"] = class_names[cls];
      lines += j.dump() + "\n";
    }
    write_text(dir / "shapley.jsonl", lines);
    if (!reports.empty()) {
      const auto swarm = tmrec::beeswarm_export(reports, c.beeswarm_top);
      std::ostringstream csv;
      tmrec::write_beeswarm_csv(swarm, player_names, csv);
      write_text(dir / "beeswarm.csv", csv.str());
    }
  });
  std::cout << "wrote explanations for " << n << " test examples to " << dir.string() << "\n";
}

void cmd_bench(const RunConfig& c, bool sized_by_user) {
  tmrec::InteractionLog log;
  if (c.synthetic && !sized_by_user) {
    log = in_module("synthetic", [&] { return tmrec::generate_synthetic(tmrec::scaling_synthetic_spec(c.seed)).log; });
  } else {
    log = load_input(c);
  }
  const auto options = model_options(c);
  const auto report = in_module("bench", [&] {
    return tmrec::run_scaling_suite(options, log, c.item_counts, pipeline_config(c), [](const tmrec::ScalingRow& r) {
      std::cout << "items " << r.item_count << ": " << r.dataset_rows << " rows"
                << (r.skipped ? " (skipped: " + *r.skipped + ")" : "") << "\n";
    });
  });
  const fs::path dir = fs::path(c.out) / ("bench_" + c.model);
  write_text(dir / "report.json", tmrec::detail::dump_json(tmrec::to_json(report)));
  write_text(dir / "report.csv", tmrec::scaling_csv(report));
  const auto table = tmrec::render_scaling_table(report);
  write_text(dir / "report.txt", table);
  std::cout << table;
}

// ---- argument wiring ----------------------------------------------------

void add_input_options(CLI::App* cmd, RunConfig& c) {
  auto* g = cmd->add_option_group("input");
  g->add_option("--data", c.data_dir, "directory with transactions(_train).csv, customers.csv, articles.csv");
  g->add_option("--transactions", c.transactions, "transactions CSV");
  g->add_option("--customers", c.customers, "customers CSV");
  g->add_option("--articles", c.articles, "articles CSV");
  g->add_flag("--synthetic", c.synthetic, "generate a planted-rule synthetic dataset instead of reading files");
  g->add_option("--syn-customers", c.syn_customers)->check(CLI::PositiveNumber);
  g->add_option("--syn-items", c.syn_items)->check(CLI::PositiveNumber);
  g->add_option("--syn-features", c.syn_features)->check(CLI::PositiveNumber);
  g->add_option("--syn-rule-bits", c.syn_rule_bits);
  g->add_option("--syn-noise", c.syn_noise)->check(CLI::Range(0.0, 1.0));
  g->add_option("--syn-min-purchases", c.syn_min_purchases);
  g->add_option("--syn-max-purchases", c.syn_max_purchases);
  g->add_option("--syn-days", c.syn_days);
  g->add_option("--syn-skew", c.syn_skew);
}

void add_prepare_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--cutoff-days", c.cutoff_days, "days at the end of the log held out for testing");
  cmd->add_option("--classes", c.classes, "class universe size (most purchased training items)");
  cmd->add_option("--history", c.history, "previous purchases per input");
  cmd->add_option("--bins", c.bins, "thermometer bins for continuous attributes");
  cmd->add_option("--latent-bins", c.latent_bins, "thermometer bins per latent dimension");
  cmd->add_option("--max-vocabulary", c.max_vocabulary, "largest vocabulary for auto-selected customer columns");
  cmd->add_flag("--no-latents", c.no_latents, "skip ALS latent features");
  cmd->add_flag("--strict", c.strict, "fail on unseen categories or missing values");
  cmd->add_option("--rank", c.rank, "ALS rank");
  cmd->add_option("--regularization", c.regularization, "ALS L2 weight");
  cmd->add_option("--alpha", c.alpha, "ALS confidence scale");
  cmd->add_option("--als-sweeps", c.als_sweeps, "ALS sweeps");
}

void add_model_options(CLI::App* cmd, RunConfig& c, bool training) {
  cmd->add_option("--model", c.model, "model kind")->check(CLI::IsMember({"tm", "mlp", "lr", "popularity"}));
  if (!training) return;
  cmd->add_option("--epochs", c.epochs, "training epochs");
  cmd->add_option("--clauses", c.clauses, "TM clauses per class");
  cmd->add_option("--threshold", c.threshold, "TM vote threshold (0 = default for the clause count)");
  cmd->add_option("--specificity", c.specificity, "TM specificity");
  cmd->add_option("--states", c.states, "TM states per action");
  cmd->add_option("--learning-rate", c.learning_rate, "SGD learning rate");
  cmd->add_option("--batch", c.batch, "SGD batch size");
  cmd->add_option("--hidden", c.hidden, "MLP hidden layer widths")->delimiter(',');
}

/// Global options, then the active subcommand's section; readable by --config.
std::string resolved_config(const RunConfig& c, const CLI::App& cmd) {
  std::ostringstream out;
  out << "out=\"" << c.out << "\"\nseed=" << c.seed << "\nthreads=" << c.threads << "\n";
  out << "\n[" << cmd.get_name() << "]\n" << cmd.config_to_str(true, false);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig c;
  CLI::App app{"Tsetlin machine recommender toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI/TOML file with option values; flags override it");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset as CSV tables");
  add_input_options(synth, c);

  auto* prepare = app.add_subcommand("prepare", "split, factorize and encode the data");
  add_input_options(prepare, c);
  add_prepare_options(prepare, c);

  auto* train = app.add_subcommand("train", "train a model on prepared data");
  add_model_options(train, c, true);

  auto* evaluate = app.add_subcommand("evaluate", "MAP@k and accuracy of a trained model");
  add_model_options(evaluate, c, false);
  evaluate->add_option("--map-k", c.map_k, "cutoffs for MAP@k")->delimiter(',');

  auto* explain = app.add_subcommand("explain", "clause, weight and Shapley explanations");
  add_model_options(explain, c, false);
  explain->add_option("--samples", c.samples, "test examples to explain");
  explain->add_option("--background", c.background, "training rows used as Shapley background");
  explain->add_option("--permutations", c.permutations, "Shapley permutations per example");
  explain->add_option("--top-m", c.top_m, "classes shown per explanation");
  explain->add_option("--flip-budget", c.flip_budget, "single-bit counterfactual flips tried");
  explain->add_option("--beeswarm-top", c.beeswarm_top, "attributes kept in the beeswarm export");

  auto* bench = app.add_subcommand("bench", "relative training/test time across top-k item subsets");
  add_input_options(bench, c);
  add_prepare_options(bench, c);
  add_model_options(bench, c, true);
  bench->add_option("--item-counts", c.item_counts, "ascending item counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / (name + ".config.ini"), resolved_config(c, *cmd));
    if (name == "synth") cmd_synth(c);
    if (name == "prepare") cmd_prepare(c);
    if (name == "train") cmd_train(c);
    if (name == "evaluate") cmd_evaluate(c);
    if (name == "explain") cmd_explain(c);
    if (name == "bench") {
      const bool sized = bench->count("--syn-customers") || bench->count("--syn-items");
      cmd_bench(c, sized);
    }
  } catch (const Failure& f) {
    std::cerr << "tmrec " << name << ": " << f.module << ": " << f.message << "\n";
    return f.code;
  } catch (const tmrec::Error& e) {
    std::cerr << "tmrec " << name << ": " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "tmrec " << name << ": filesystem: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
