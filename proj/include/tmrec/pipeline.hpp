#pragma once

// End-to-end recommendation pipeline: temporal split, ALS on the training
// split, schema fit, class universe, encoded examples, model training and
// MAP@k evaluation. Shared by the CLI and the scaling harness.

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tmrec/als.hpp"
#include "tmrec/baselines.hpp"
#include "tmrec/container.hpp"
#include "tmrec/dataset.hpp"
#include "tmrec/detail/hash.hpp"
#include "tmrec/encoding.hpp"
#include "tmrec/metrics.hpp"
#include "tmrec/tm.hpp"

namespace tmrec {

/// Output classes: the most purchased training items, most popular first.
class ClassUniverse {
 public:
  ClassUniverse() = default;
  ClassUniverse(std::vector<std::string> items, std::vector<std::size_t> counts)
      : items_(std::move(items)), counts_(std::move(counts)) {
    if (counts_.size() != items_.size()) throw DimensionError("one count per universe item required");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!index_.emplace(items_[i], i).second) throw ValidationError("duplicate universe item '" + items_[i] + "'");
    }
  }

  static ClassUniverse from_train(const InteractionLog& train, std::size_t classes) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : train.transactions) ++counts[t.item_id];
    auto ranked = items_by_popularity(train);
    if (ranked.size() > classes) ranked.resize(classes);
    std::vector<std::size_t> c;
    for (const auto& id : ranked) c.push_back(counts[id]);
    return ClassUniverse(std::move(ranked), std::move(c));
  }

  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& items() const { return items_; }
  const std::vector<std::size_t>& train_counts() const { return counts_; }
  const std::string& item(std::size_t label) const { return items_.at(label); }
  std::optional<std::size_t> label_of(const std::string& item) const {
    auto it = index_.find(item);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::uint64_t hash() const {
    std::uint64_t h = detail::kFnvOffset;
    for (const auto& id : items_) {
      h = detail::fnv1a(std::string_view(id), h);
      h = detail::fnv1a(std::string_view("\n"), h);
    }
    return h;
  }

 private:
  std::vector<std::string> items_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline nlohmann::ordered_json to_json(const ClassUniverse& u) {
  nlohmann::ordered_json j;
  j["format"] = "tmrec.universe";
  j["version"] = 1;
  j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    j["classes"].push_back({{"class", i}, {"item_id", u.item(i)}, {"train_count", u.train_counts()[i]}});
  }
  return j;
}

inline ClassUniverse universe_from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "tmrec.universe" || j.value("version", 0) != 1) {
    throw FormatError("not a version-1 universe document");
  }
  std::vector<std::string> items;
  std::vector<std::size_t> counts;
  for (const auto& c : j.at("classes")) {
    if (c.at("class").get<std::size_t>() != items.size()) throw FormatError("universe classes out of order");
    items.push_back(c.at("item_id").get<std::string>());
    counts.push_back(c.at("train_count").get<std::size_t>());
  }
  return ClassUniverse(std::move(items), std::move(counts));
}

/// One purchase to predict from the customer and the purchases before it.
struct EncodedExample {
  std::string customer_id;
  Day day = 0;
  std::string item_id;
  std::size_t label = 0;
  BinaryFeatureVector bits;
  std::vector<double> reals;
};

/// A test-period customer: input from the training history, relevant =
/// every item bought during the test period.
struct EvalCustomer {
  std::string customer_id;
  BinaryFeatureVector bits;
  std::vector<double> reals;
  std::vector<std::string> relevant;  // sorted, unique
};

struct PipelineConfig {
  int cutoff_days = 30;
  std::size_t classes = 400;
  SchemaOptions schema;
  ALSConfig als;
  bool strict = false;
  unsigned threads = 1;
};

struct PrepareStats {
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t train_excluded = 0;  // rows whose item is outside the universe
  std::size_t test_excluded = 0;
  std::size_t unknown_values = 0;
  std::size_t latent_missing = 0;
  Day cutoff_day = 0;
};

struct PreparedData {
  FeatureSchema schema;
  std::shared_ptr<const LatentFactors> factors;  // null when latents are disabled
  ClassUniverse universe;
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> test;
  std::vector<EvalCustomer> eval;
  PrepareStats stats;
};

inline PreparedData prepare_data(const InteractionLog& log, const PipelineConfig& config) {
  if (config.classes < 2) throw ConfigError("class universe needs at least 2 classes");
  auto split = temporal_split(log, config.cutoff_days);
  if (split.all_test) throw DataError("cutoff leaves no training rows");
  if (split.test.transactions.empty()) throw DataError("cutoff leaves no test rows");

  PreparedData out;
  out.stats.cutoff_day = split.cutoff_day;
  out.stats.train_rows = split.train.transactions.size();
  out.stats.test_rows = split.test.transactions.size();
  if (config.schema.use_latents) {
    out.factors = std::make_shared<LatentFactors>(fit_als(split.train, config.als, nullptr, config.threads));
  }
  out.schema = fit_schema(*log.customers, *log.items, out.factors.get(), config.schema);
  out.universe = ClassUniverse::from_train(split.train, config.classes);
  if (out.universe.size() < 2) throw DataError("training split has fewer than 2 distinct items");

  Encoder encoder(std::make_shared<FeatureSchema>(out.schema), log.customers, log.items, out.factors,
                  config.strict);
  std::vector<const Transaction*> ordered;
  ordered.reserve(log.transactions.size());
  for (const auto& t : log.transactions) ordered.push_back(&t);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->day < b->day; });

  const auto n = out.schema.history_length;
  std::unordered_map<std::string, std::vector<std::string>> history;  // chronological
  auto recent = [&](const std::string& customer) {
    std::vector<std::string> h;
    auto it = history.find(customer);
    if (it == history.end()) return h;
    for (auto r = it->second.rbegin(); r != it->second.rend() && h.size() < n; ++r) h.push_back(*r);
    return h;
  };
  auto note = [&](const AssembledInput& in) {
    for (const auto& p : in.provenance) {
      out.stats.unknown_values += p.unknown_values;
      out.stats.latent_missing += p.latent_missing;
    }
  };

  std::map<std::string, std::vector<std::string>> train_history_at_cutoff;
  std::map<std::string, std::set<std::string>> relevant;
  bool captured = false;
  for (const auto* t : ordered) {
    const bool is_test = t->day > split.cutoff_day;
    if (is_test && !captured) {
      captured = true;
      for (const auto& [c, h] : history) train_history_at_cutoff[c] = recent(c);
    }
    const auto label = out.universe.label_of(t->item_id);
    if (is_test) relevant[t->customer_id].insert(t->item_id);
    if (!label) {
      ++(is_test ? out.stats.test_excluded : out.stats.train_excluded);
    } else {
      const auto h = recent(t->customer_id);
      auto in = encoder.assemble(t->customer_id, h, false);
      note(in);
      (is_test ? out.test : out.train)
          .push_back({t->customer_id, t->day, t->item_id, *label, std::move(in.bits), std::move(in.reals)});
    }
    history[t->customer_id].push_back(t->item_id);
  }
  if (out.train.empty()) throw DataError("no training rows fall inside the class universe");

  for (const auto& [customer, items] : relevant) {
    auto it = train_history_at_cutoff.find(customer);
    const std::vector<std::string> h = it == train_history_at_cutoff.end() ? std::vector<std::string>{} : it->second;
    auto in = encoder.assemble(customer, h, false);
    note(in);
    out.eval.push_back({customer, std::move(in.bits), std::move(in.reals), {items.begin(), items.end()}});
  }

  std::vector<std::vector<double>> raw;
  raw.reserve(out.train.size());
  for (const auto& e : out.train) raw.push_back(e.reals);
  fit_normalization(out.schema, raw);
  for (auto& e : out.train) normalize_reals(out.schema, e.reals);
  for (auto& e : out.test) normalize_reals(out.schema, e.reals);
  for (auto& e : out.eval) normalize_reals(out.schema, e.reals);
  return out;
}

// ---- models -------------------------------------------------------------

struct ModelOptions {
  ModelKind kind = ModelKind::tm;
  std::size_t clauses = 200;
  int threshold = 0;  // 0 selects the clause-scaled default
  double specificity = 3.9;
  int states_per_action = 100;
  std::size_t epochs = 10;
  SGDConfig sgd;
  std::vector<std::size_t> hidden = kDefaultHiddenWidths;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool evaluate_each_epoch = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::optional<double> loss;
  std::optional<EpochStats> feedback;
  std::optional<double> test_accuracy;
  double seconds = 0.0;  // training only
};

class RecommenderModel {
 public:
  ModelKind kind = ModelKind::popularity;
  std::size_t num_classes = 0;
  std::optional<TMModel> tm;
  std::optional<FeedForwardModel> net;

  /// Top-k class labels, best first.
  std::vector<std::size_t> rank(const BinaryFeatureVector& bits, std::span<const double> reals, std::size_t k) const {
    k = std::min(k, num_classes);
    switch (kind) {
      case ModelKind::tm:
        return rank_classes(*tm, bits, k);
      case ModelKind::mlp:
      case ModelKind::lr:
        return rank_classes(*net, reals, k);
      case ModelKind::popularity: {
        std::vector<std::size_t> out(k);
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
      }
    }
    throw ConfigError("unknown model kind");
  }

  std::size_t predict(const BinaryFeatureVector& bits, std::span<const double> reals) const {
    return rank(bits, reals, 1).front();
  }
};

namespace detail {

inline RealDataset real_dataset(std::span<const EncodedExample> examples, std::size_t width) {
  RealDataset d;
  d.x.resize(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].reals.size() != width) throw DimensionError("example real width does not match the schema");
    for (std::size_t c = 0; c < width; ++c) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = examples[i].reals[c];
    }
    d.labels.push_back(examples[i].label);
  }
  return d;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

inline double model_accuracy(const RecommenderModel& model, std::span<const EncodedExample> examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : examples) hits += model.predict(e.bits, e.reals) == e.label;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

using EpochObserver = std::function<void(const EpochLog&)>;

/// Trains `options.kind` on the encoded training examples. The test
/// examples are only used for the per-epoch accuracy log.
inline RecommenderModel train_model(const PreparedData& data, const ModelOptions& options,
                                    const EpochObserver& observe = {}) {
  RecommenderModel model;
  model.kind = options.kind;
  model.num_classes = data.universe.size();
  auto finish_epoch = [&](EpochLog& log) {
    if (options.evaluate_each_epoch) log.test_accuracy = model_accuracy(model, data.test);
    if (observe) observe(log);
  };
  switch (options.kind) {
    case ModelKind::popularity: {
      EpochLog log;
      finish_epoch(log);
      break;
    }
    case ModelKind::tm: {
      TMConfig cfg;
      cfg.num_classes = data.universe.size();
      cfg.clauses_per_class = options.clauses;
      cfg.num_features = data.schema.bit_width();
      cfg.threshold = options.threshold > 0 ? options.threshold : TMConfig::default_threshold(options.clauses);
      cfg.specificity = options.specificity;
      cfg.states_per_action = options.states_per_action;
      cfg.seed = options.seed;
      model.tm.emplace(cfg);
      std::vector<LabeledVector> train;
      train.reserve(data.train.size());
      for (const auto& e : data.train) train.push_back({e.bits, e.label});
      TMTrainer trainer(cfg, options.threads);
      for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        const auto start = std::chrono::steady_clock::now();
        log.feedback = trainer.train_epoch(*model.tm, train);
        log.seconds = detail::seconds_since(start);
        finish_epoch(log);
      }
      break;
    }
    case ModelKind::mlp:
    case ModelKind::lr: {
      const auto width = data.schema.real_width();
      model.net = options.kind == ModelKind::mlp
                      ? make_mlp(width, data.universe.size(), options.seed, options.hidden)
                      : make_lr(width, data.universe.size(), options.seed);
      const auto train = detail::real_dataset(data.train, width);
      auto sgd = options.sgd;
      sgd.seed = options.seed;
      sgd.validate();
      auto rng = detail::derive_rng(sgd.seed, 0x736764);
      for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        const auto start = std::chrono::steady_clock::now();
        log.loss = train_sgd_epoch(*model.net, train, sgd, rng, epoch);
        log.seconds = detail::seconds_since(start);
        finish_epoch(log);
      }
      break;
    }
  }
  return model;
}

/// MAP@k for every k plus top-1 accuracy on the test examples.
inline MetricRow evaluate_model(const RecommenderModel& model, const PreparedData& data,
                                const std::vector<std::size_t>& ks, const std::string& label = "") {
  if (ks.empty()) throw ConfigError("at least one k is required");
  const auto kmax = *std::max_element(ks.begin(), ks.end());
  std::vector<RankedPrediction<std::string>> predictions;
  predictions.reserve(data.eval.size());
  for (const auto& c : data.eval) {
    RankedPrediction<std::string> p;
    p.customer_id = c.customer_id;
    for (auto cls : model.rank(c.bits, c.reals, kmax)) p.ranked.push_back(data.universe.item(cls));
    p.relevant.insert(c.relevant.begin(), c.relevant.end());
    predictions.push_back(std::move(p));
  }
  MetricRow row;
  row.model = label.empty() ? to_string(model.kind) : label;
  for (auto k : ks) row.maps.push_back(map_at_k(predictions, k));
  if (!data.test.empty()) row.accuracy = model_accuracy(model, data.test);
  row.excluded = data.stats.test_excluded;
  return row;
}

/// Per-class prediction counts over the test examples (for inclusion stats).
inline std::vector<std::size_t> prediction_counts(const RecommenderModel& model, const PreparedData& data) {
  std::vector<std::size_t> counts(model.num_classes, 0);
  for (const auto& e : data.test) ++counts[model.predict(e.bits, e.reals)];
  return counts;
}

}  // namespace tmrec
