#pragma once

// Relative-timing scalability harness: for each top-k item subset, prepare
// the data (untimed), train a fixed number of epochs and run one test pass,
// then normalize every timing column by the smallest configuration.

#include <chrono>
#include <fstream>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tmrec/detail/csv.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/pipeline.hpp"
#include "tmrec/synthetic.hpp"

namespace tmrec {

struct EnvironmentInfo {
  std::string cpu;
  std::string compiler;
  unsigned threads = 1;
  unsigned hardware_threads = 0;
  std::uint64_t seed = 0;

  bool operator==(const EnvironmentInfo&) const = default;
};

inline std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto s = line.substr(colon + 1);
        s.erase(0, s.find_first_not_of(' '));
        return s;
      }
    }
  }
  return "unknown";
}

inline EnvironmentInfo environment_fingerprint(unsigned threads, std::uint64_t seed) {
  EnvironmentInfo e;
  e.cpu = cpu_model();
#if defined(__VERSION__)
  e.compiler = __VERSION__;
#endif
  e.threads = threads;
  e.hardware_threads = std::thread::hardware_concurrency();
  e.seed = seed;
  return e;
}

struct TimingSet {
  double train_epochs = 0.0;  // all configured epochs
  double train_1_epoch = 0.0; // second epoch (first is warm-up); first when only one
  double test_1_epoch = 0.0;  // one inference pass over the test examples

  bool operator==(const TimingSet&) const = default;
};

struct ScalingRow {
  std::size_t item_count = 0;     // requested k
  std::size_t items_present = 0;  // distinct items left in the subset
  std::size_t dataset_rows = 0;
  double dataset_fraction = 0.0;  // dataset_rows / full log rows
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::optional<double> test_accuracy;
  TimingSet absolute;                 // seconds
  std::optional<TimingSet> relative;  // divided by the first measured row
  std::optional<std::string> skipped;

  bool operator==(const ScalingRow&) const = default;
};

struct ScalingReport {
  std::string model;
  std::size_t epochs = 0;
  std::size_t total_rows = 0;
  EnvironmentInfo environment;
  std::vector<ScalingRow> rows;

  bool operator==(const ScalingReport&) const = default;
};

/// Divides each timing column by the first non-skipped row. Zero
/// denominators leave the column relative to 1 second (never NaN).
inline void normalize_timings(ScalingReport& report) {
  const ScalingRow* base = nullptr;
  for (const auto& r : report.rows) {
    if (!r.skipped) {
      base = &r;
      break;
    }
  }
  if (!base) return;
  const auto b = base->absolute;
  auto ratio = [](double v, double d) { return d > 0.0 ? v / d : v; };
  for (auto& r : report.rows) {
    if (r.skipped) {
      r.relative.reset();
      continue;
    }
    if (&r == base) {
      r.relative = TimingSet{1.0, 1.0, 1.0};
      continue;
    }
    r.relative = TimingSet{ratio(r.absolute.train_epochs, b.train_epochs),
                           ratio(r.absolute.train_1_epoch, b.train_1_epoch),
                           ratio(r.absolute.test_1_epoch, b.test_1_epoch)};
  }
}

/// Default synthetic workload: enough Zipf-distributed background items for
/// subsets up to 512 items, half of all purchases driven by planted rules.
inline SyntheticSpec scaling_synthetic_spec(std::uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.num_customers = 3000;
  spec.num_items = 1024;
  spec.num_features = 12;
  spec.rule_bits = 3;
  spec.noise_rate = 0.5;
  spec.min_purchases = 3;
  spec.max_purchases = 8;
  spec.days = 90;
  spec.popularity_skew = 0.8;
  spec.seed = seed;
  return spec;
}

using BenchProgress = std::function<void(const ScalingRow&)>;

inline ScalingReport run_scaling_suite(const ModelOptions& model, const InteractionLog& log,
                                       const std::vector<std::size_t>& item_counts, PipelineConfig pipeline = {},
                                       const BenchProgress& progress = {}) {
  if (item_counts.empty()) throw ConfigError("bench needs at least one item count");
  for (std::size_t i = 0; i < item_counts.size(); ++i) {
    if (item_counts[i] < 2) throw ConfigError("bench item counts must be >= 2");
    if (i > 0 && item_counts[i] <= item_counts[i - 1]) throw ConfigError("bench item counts must be ascending");
  }
  if (log.transactions.empty()) throw DataError("bench needs a non-empty interaction log");
  if (model.epochs < 1) throw ConfigError("bench needs at least one epoch");

  ScalingReport report;
  report.model = to_string(model.kind);
  report.epochs = model.epochs;
  report.total_rows = log.transactions.size();
  report.environment = environment_fingerprint(model.threads, model.seed);

  auto options = model;
  options.evaluate_each_epoch = false;
  pipeline.threads = model.threads;
  for (const auto k : item_counts) {
    ScalingRow row;
    row.item_count = k;
    try {
      const auto subset = topk_subset(log, k);
      row.items_present = subset.items->size();
      row.dataset_rows = subset.transactions.size();
      row.dataset_fraction = static_cast<double>(row.dataset_rows) / static_cast<double>(report.total_rows);
      auto cfg = pipeline;
      cfg.classes = k;
      const auto data = prepare_data(subset, cfg);
      row.train_examples = data.train.size();
      row.test_examples = data.test.size();
      std::vector<double> epoch_seconds;
      const auto trained = train_model(data, options, [&](const EpochLog& e) { epoch_seconds.push_back(e.seconds); });
      for (double s : epoch_seconds) row.absolute.train_epochs += s;
      row.absolute.train_1_epoch = epoch_seconds.size() > 1 ? epoch_seconds[1] : epoch_seconds.front();
      if (data.test.empty()) {
        row.skipped = "no test examples in the class universe";
      } else {
        const auto start = std::chrono::steady_clock::now();
        row.test_accuracy = model_accuracy(trained, data.test);
        row.absolute.test_1_epoch = detail::seconds_since(start);
      }
    } catch (const DataError& e) {
      row.skipped = e.what();
    } catch (const std::bad_alloc&) {
      row.skipped = "out of memory";
    }
    report.rows.push_back(row);
    if (progress) progress(row);
  }
  normalize_timings(report);
  return report;
}

// ---- rendering ----------------------------------------------------------

inline std::string format_percent(double fraction) { return detail::format_fixed(100.0 * fraction, 3) + "%"; }

/// Aligned text table: item count, rows, dataset percentage, then absolute
/// and relative timings.
inline std::string render_scaling_table(const ScalingReport& report) {
  const std::string n = std::to_string(report.epochs);
  const std::vector<std::string> header{"Num items",          "Item entries",          "Dataset percentage",
                                        "Train " + n + " epochs (s)", "Train 1 epoch (s)", "Test 1 epoch (s)",
                                        "Rel train " + n,   "Rel train 1",           "Rel test 1"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : report.rows) {
    std::vector<std::string> row{std::to_string(r.item_count), std::to_string(r.dataset_rows),
                                 format_percent(r.dataset_fraction)};
    if (r.skipped) {
      row.push_back("skipped: " + *r.skipped);
    } else {
      for (double v : {r.absolute.train_epochs, r.absolute.train_1_epoch, r.absolute.test_1_epoch}) {
        row.push_back(detail::format_fixed(v, 4));
      }
      for (double v : {r.relative->train_epochs, r.relative->train_1_epoch, r.relative->test_1_epoch}) {
        row.push_back(detail::format_fixed(v, 3));
      }
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& row = cells[i];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << " | ";
      out << row[c];
      if (c + 1 < row.size()) out << std::string(width[c] - row[c].size(), ' ');
    }
    out << '\n';
    if (i == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) out << (c ? "-|-" : "") << std::string(width[c], '-');
      out << '\n';
    }
  }
  return out.str();
}

inline std::string scaling_csv(const ScalingReport& report) {
  std::ostringstream out;
  detail::write_csv_row(out, {"item_count", "items_present", "dataset_rows", "dataset_fraction", "train_examples",
                              "test_examples", "train_epochs_s", "train_1_epoch_s", "test_1_epoch_s",
                              "rel_train_epochs", "rel_train_1_epoch", "rel_test_1_epoch", "skipped"});
  for (const auto& r : report.rows) {
    auto num = [](double v) { return detail::format_double(v); };
    std::vector<std::string> row{std::to_string(r.item_count),     std::to_string(r.items_present),
                                 std::to_string(r.dataset_rows),   num(r.dataset_fraction),
                                 std::to_string(r.train_examples), std::to_string(r.test_examples),
                                 num(r.absolute.train_epochs),     num(r.absolute.train_1_epoch),
                                 num(r.absolute.test_1_epoch)};
    if (r.relative) {
      row.push_back(num(r.relative->train_epochs));
      row.push_back(num(r.relative->train_1_epoch));
      row.push_back(num(r.relative->test_1_epoch));
    } else {
      row.insert(row.end(), 3, "");
    }
    row.push_back(r.skipped.value_or(""));
    detail::write_csv_row(out, row);
  }
  return out.str();
}

inline nlohmann::ordered_json to_json(const TimingSet& t) {
  return {{"train_epochs", t.train_epochs}, {"train_1_epoch", t.train_1_epoch}, {"test_1_epoch", t.test_1_epoch}};
}

inline TimingSet timing_from_json(const nlohmann::ordered_json& j) {
  return {j.at("train_epochs").get<double>(), j.at("train_1_epoch").get<double>(),
          j.at("test_1_epoch").get<double>()};
}

inline nlohmann::ordered_json to_json(const ScalingReport& r) {
  nlohmann::ordered_json j;
  j["format"] = "tmrec.bench";
  j["version"] = 1;
  j["model"] = r.model;
  j["epochs"] = r.epochs;
  j["total_rows"] = r.total_rows;
  j["environment"] = {{"cpu", r.environment.cpu},
                      {"compiler", r.environment.compiler},
                      {"threads", r.environment.threads},
                      {"hardware_threads", r.environment.hardware_threads},
                      {"seed", r.environment.seed}};
  auto& rows = j["rows"];
  rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    o["item_count"] = row.item_count;
    o["items_present"] = row.items_present;
    o["dataset_rows"] = row.dataset_rows;
    o["dataset_fraction"] = row.dataset_fraction;
    o["train_examples"] = row.train_examples;
    o["test_examples"] = row.test_examples;
    o["test_accuracy"] = row.test_accuracy ? nlohmann::ordered_json(*row.test_accuracy) : nullptr;
    o["absolute_seconds"] = to_json(row.absolute);
    o["relative"] = row.relative ? to_json(*row.relative) : nlohmann::ordered_json(nullptr);
    o["skipped"] = row.skipped ? nlohmann::ordered_json(*row.skipped) : nullptr;
    rows.push_back(std::move(o));
  }
  return j;
}

inline ScalingReport scaling_report_from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "tmrec.bench" || j.value("version", 0) != 1) {
    throw FormatError("not a version-1 bench report");
  }
  try {
    ScalingReport r;
    r.model = j.at("model").get<std::string>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.total_rows = j.at("total_rows").get<std::size_t>();
    const auto& e = j.at("environment");
    r.environment = {e.at("cpu").get<std::string>(), e.at("compiler").get<std::string>(),
                     e.at("threads").get<unsigned>(), e.at("hardware_threads").get<unsigned>(),
                     e.at("seed").get<std::uint64_t>()};
    for (const auto& o : j.at("rows")) {
      ScalingRow row;
      row.item_count = o.at("item_count").get<std::size_t>();
      row.items_present = o.at("items_present").get<std::size_t>();
      row.dataset_rows = o.at("dataset_rows").get<std::size_t>();
      row.dataset_fraction = o.at("dataset_fraction").get<double>();
      row.train_examples = o.at("train_examples").get<std::size_t>();
      row.test_examples = o.at("test_examples").get<std::size_t>();
      if (!o.at("test_accuracy").is_null()) row.test_accuracy = o.at("test_accuracy").get<double>();
      row.absolute = timing_from_json(o.at("absolute_seconds"));
      if (!o.at("relative").is_null()) row.relative = timing_from_json(o.at("relative"));
      if (!o.at("skipped").is_null()) row.skipped = o.at("skipped").get<std::string>();
      r.rows.push_back(std::move(row));
    }
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("bench report: ") + ex.what());
  }
}

}  // namespace tmrec
