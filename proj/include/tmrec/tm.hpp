#pragma once

// Multi-class Tsetlin machine: clause banks of two-action automata, vote
// summation, argmax prediction and Type I / Type II feedback training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmrec/bitvector.hpp"
#include "tmrec/container.hpp"
#include "tmrec/detail/binio.hpp"
#include "tmrec/detail/parallel.hpp"
#include "tmrec/detail/random.hpp"
#include "tmrec/detail/ranking.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

struct TMConfig {
  std::size_t num_classes = 400;
  std::size_t clauses_per_class = 200;  // half positive, half negative
  std::size_t num_features = 0;         // literal count is twice this
  int threshold = 15;
  double specificity = 3.9;
  int states_per_action = 100;
  std::uint64_t seed = 0;

  /// 15 at 200 clauses per class, scaled linearly, never below 1.
  static int default_threshold(std::size_t clauses_per_class) {
    return std::max(1, static_cast<int>(std::lround(15.0 * static_cast<double>(clauses_per_class) / 200.0)));
  }

  void validate() const {
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (clauses_per_class < 2 || clauses_per_class % 2 != 0) {
      throw ConfigError("clauses_per_class must be a positive even number, got " +
                        std::to_string(clauses_per_class));
    }
    if (num_features < 1) throw ConfigError("num_features must be positive");
    if (threshold < 1) throw ConfigError("threshold must be >= 1");
    if (!(specificity > 1.0)) throw ConfigError("specificity must be > 1");
    if (states_per_action < 1 || states_per_action > 32767) {
      throw ConfigError("states_per_action must be in [1, 32767]");
    }
  }

  friend bool operator==(const TMConfig&, const TMConfig&) = default;
};

enum class Polarity : std::uint8_t { positive, negative };

/// Empty clauses output 1 while training so they can receive feedback, and
/// 0 at inference so they never vote.
enum class ClauseMode : std::uint8_t { training, inference };

class ClauseBank;

/// Read-only handle to one clause of a bank.
class ClauseView {
 public:
  ClauseView(const ClauseBank& bank, std::size_t index) : bank_(&bank), index_(index) {}
  const ClauseBank& bank() const { return *bank_; }
  std::size_t index() const { return index_; }
  inline Polarity polarity() const;
  inline bool included(std::size_t literal) const;
  inline std::size_t included_count() const;

 private:
  const ClauseBank* bank_;
  std::size_t index_;
};

/// One class's clauses. Literal l < F is feature l; literal F + l is its
/// negation. Automaton states live in [1, 2N]; a state above N includes the
/// literal. Even-indexed clauses are positive, odd-indexed negative.
class ClauseBank {
 public:
  using State = std::uint16_t;
  using Word = BinaryFeatureVector::Word;

  ClauseBank(std::size_t num_clauses, std::size_t num_features, int states_per_action)
      : num_clauses_(num_clauses),
        num_features_(num_features),
        words_(BinaryFeatureVector::word_count(num_features)),
        states_per_action_(states_per_action),
        states_(num_clauses * 2 * num_features, static_cast<State>(states_per_action)),
        include_mask_(num_clauses * words_, 0),
        include_negated_mask_(num_clauses * words_, 0),
        included_count_(num_clauses, 0) {}

  std::size_t num_clauses() const { return num_clauses_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t num_literals() const { return 2 * num_features_; }
  int states_per_action() const { return states_per_action_; }
  int max_state() const { return 2 * states_per_action_; }

  static Polarity polarity(std::size_t clause) {
    return clause % 2 == 0 ? Polarity::positive : Polarity::negative;
  }

  int state(std::size_t clause, std::size_t literal) const {
    return states_[clause * num_literals() + literal];
  }

  void set_state(std::size_t clause, std::size_t literal, int value) {
    if (clause >= num_clauses_ || literal >= num_literals()) {
      throw RangeError("clause/literal index out of range");
    }
    if (value < 1 || value > max_state()) {
      throw RangeError("automaton state " + std::to_string(value) + " outside [1, " +
                       std::to_string(max_state()) + "]");
    }
    const bool was = included(clause, literal);
    states_[clause * num_literals() + literal] = static_cast<State>(value);
    if (was != included(clause, literal)) toggle_mask(clause, literal);
  }

  /// Sets the literal to the innermost include (N + 1) or exclude (N) state.
  void set_included(std::size_t clause, std::size_t literal, bool include) {
    set_state(clause, literal, include ? states_per_action_ + 1 : states_per_action_);
  }

  bool included(std::size_t clause, std::size_t literal) const {
    return state(clause, literal) > states_per_action_;
  }

  std::size_t included_count(std::size_t clause) const { return included_count_[clause]; }

  /// Step toward inclusion, saturating at 2N.
  void step_include(std::size_t clause, std::size_t literal) {
    auto& s = states_[clause * num_literals() + literal];
    if (s >= max_state()) return;
    ++s;
    if (s == states_per_action_ + 1) toggle_mask(clause, literal);
  }

  /// Step toward exclusion, saturating at 1.
  void step_exclude(std::size_t clause, std::size_t literal) {
    auto& s = states_[clause * num_literals() + literal];
    if (s <= 1) return;
    --s;
    if (s == states_per_action_) toggle_mask(clause, literal);
  }

  /// Conjunction of included literals. Width is the caller's responsibility.
  bool output(std::size_t clause, const BinaryFeatureVector& x, ClauseMode mode) const {
    if (included_count_[clause] == 0) return mode == ClauseMode::training;
    const auto xw = x.words();
    const Word* pos = &include_mask_[clause * words_];
    const Word* neg = &include_negated_mask_[clause * words_];
    for (std::size_t w = 0; w < words_; ++w) {
      if ((pos[w] & ~xw[w]) | (neg[w] & xw[w])) return false;
    }
    return true;
  }

  ClauseView clause(std::size_t index) const { return ClauseView(*this, index); }

  std::span<const State> raw_states() const { return states_; }

  friend bool operator==(const ClauseBank& a, const ClauseBank& b) {
    return a.num_clauses_ == b.num_clauses_ && a.num_features_ == b.num_features_ &&
           a.states_per_action_ == b.states_per_action_ && a.states_ == b.states_;
  }

 private:
  void toggle_mask(std::size_t clause, std::size_t literal) {
    const bool negated = literal >= num_features_;
    const std::size_t feature = negated ? literal - num_features_ : literal;
    auto& mask = negated ? include_negated_mask_ : include_mask_;
    const Word bit = Word{1} << (feature % BinaryFeatureVector::kWordBits);
    Word& word = mask[clause * words_ + feature / BinaryFeatureVector::kWordBits];
    word ^= bit;
    if (word & bit) {
      ++included_count_[clause];
    } else {
      --included_count_[clause];
    }
  }

  std::size_t num_clauses_;
  std::size_t num_features_;
  std::size_t words_;
  int states_per_action_;
  std::vector<State> states_;  // clause-major, 2F per clause
  std::vector<Word> include_mask_;
  std::vector<Word> include_negated_mask_;
  std::vector<std::uint32_t> included_count_;
};

inline Polarity ClauseView::polarity() const { return ClauseBank::polarity(index_); }
inline bool ClauseView::included(std::size_t literal) const {
  return bank_->included(index_, literal);
}
inline std::size_t ClauseView::included_count() const { return bank_->included_count(index_); }

class TMModel {
 public:
  /// Fresh model: every literal excluded at the boundary state N.
  explicit TMModel(const TMConfig& config) : config_(config) {
    config_.validate();
    banks_.reserve(config_.num_classes);
    for (std::size_t c = 0; c < config_.num_classes; ++c) {
      banks_.emplace_back(config_.clauses_per_class, config_.num_features,
                          config_.states_per_action);
    }
  }

  const TMConfig& config() const { return config_; }
  std::size_t num_classes() const { return banks_.size(); }
  std::size_t num_features() const { return config_.num_features; }

  const ClauseBank& bank(std::size_t class_id) const {
    check_class(class_id);
    return banks_[class_id];
  }
  ClauseBank& bank(std::size_t class_id) {
    check_class(class_id);
    return banks_[class_id];
  }

  void check_class(std::size_t class_id) const {
    if (class_id >= banks_.size()) {
      throw RangeError("class " + std::to_string(class_id) + " out of range (" +
                       std::to_string(banks_.size()) + " classes)");
    }
  }

  void check_width(const BinaryFeatureVector& x) const {
    if (x.size() != config_.num_features) {
      throw DimensionError("input has " + std::to_string(x.size()) + " bits, model expects " +
                           std::to_string(config_.num_features));
    }
  }

  friend bool operator==(const TMModel&, const TMModel&) = default;

 private:
  TMConfig config_;
  std::vector<ClauseBank> banks_;
};

inline bool clause_output(ClauseView clause, const BinaryFeatureVector& x, ClauseMode mode) {
  if (x.size() != clause.bank().num_features()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " bits, clause expects " +
                         std::to_string(clause.bank().num_features()));
  }
  return clause.bank().output(clause.index(), x, mode);
}

namespace detail {

inline int bank_score(const ClauseBank& bank, const BinaryFeatureVector& x, ClauseMode mode) {
  int score = 0;
  for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
    if (bank.output(j, x, mode)) score += ClauseBank::polarity(j) == Polarity::positive ? 1 : -1;
  }
  return score;
}

}  // namespace detail

/// Positive votes minus negative votes, inference mode.
inline int class_score(const TMModel& model, std::size_t class_id, const BinaryFeatureVector& x) {
  model.check_width(x);
  return detail::bank_score(model.bank(class_id), x, ClauseMode::inference);
}

inline std::vector<int> class_scores(const TMModel& model, const BinaryFeatureVector& x) {
  model.check_width(x);
  std::vector<int> scores(model.num_classes());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    scores[c] = detail::bank_score(model.bank(c), x, ClauseMode::inference);
  }
  return scores;
}

/// Argmax of class_score; the lowest class id wins ties.
inline std::size_t predict(const TMModel& model, const BinaryFeatureVector& x) {
  const auto scores = class_scores(model, x);
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

inline std::vector<std::size_t> rank_classes(const TMModel& model, const BinaryFeatureVector& x,
                                             std::size_t k) {
  if (k < 1 || k > model.num_classes()) {
    throw RangeError("k = " + std::to_string(k) + " outside [1, " +
                     std::to_string(model.num_classes()) + "]");
  }
  const auto scores = class_scores(model, x);
  return detail::top_k_indices(std::span<const int>(scores), k);
}

struct LabeledVector {
  BinaryFeatureVector x;
  std::size_t label = 0;
};

struct EpochStats {
  std::size_t examples = 0;
  std::size_t type_i = 0;   // clause-level Type I feedback events
  std::size_t type_ii = 0;  // clause-level Type II feedback events

  std::size_t feedback_events() const { return type_i + type_ii; }
  EpochStats& operator+=(const EpochStats& o) {
    examples += o.examples;
    type_i += o.type_i;
    type_ii += o.type_ii;
    return *this;
  }
};

/// Owns the random streams for training: one master stream (example order,
/// negative-class sampling) plus one stream per class for its feedback, so
/// results do not depend on how classes are spread over threads.
class TMTrainer {
 public:
  explicit TMTrainer(const TMConfig& config, unsigned threads = 1)
      : master_(detail::derive_rng(config.seed, 0)), threads_(std::max(1u, threads)) {
    class_rngs_.reserve(config.num_classes);
    for (std::size_t c = 0; c < config.num_classes; ++c) {
      class_rngs_.push_back(detail::derive_rng(config.seed, c + 1));
    }
  }

  unsigned threads() const { return threads_; }

  EpochStats train_epoch(TMModel& model, std::span<const LabeledVector> data) {
    if (model.num_classes() != class_rngs_.size()) {
      throw DimensionError("trainer was built for a different class count");
    }
    for (const auto& ex : data) {
      model.check_width(ex.x);
      if (ex.label >= model.num_classes()) {
        throw RangeError("label " + std::to_string(ex.label) + " out of range (" +
                         std::to_string(model.num_classes()) + " classes)");
      }
    }
    if (data.empty()) return {};

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::shuffle(order, master_);

    // Per-class job queues in example order: (example index, is_target).
    struct Job {
      std::size_t example;
      bool target;
    };
    const std::size_t num_classes = model.num_classes();
    std::vector<std::vector<Job>> jobs(num_classes);
    for (auto i : order) {
      const auto y = data[i].label;
      jobs[y].push_back({i, true});
      if (num_classes > 1) {
        auto other = static_cast<std::size_t>(detail::uniform_index(master_, num_classes - 1));
        if (other >= y) ++other;
        jobs[other].push_back({i, false});
      }
    }

    const auto& cfg = model.config();
    std::vector<EpochStats> per_class(num_classes);
    detail::parallel_for(num_classes, threads_, [&](std::size_t c) {
      auto& bank = model.bank(c);
      auto& rng = class_rngs_[c];
      std::vector<std::uint8_t> outputs(bank.num_clauses());
      for (const auto& job : jobs[c]) {
        feedback(bank, data[job.example].x, job.target, cfg.threshold, cfg.specificity, rng,
                 outputs, per_class[c]);
      }
    });

    EpochStats total;
    total.examples = data.size();
    for (const auto& s : per_class) {
      total.type_i += s.type_i;
      total.type_ii += s.type_ii;
    }
    return total;
  }

 private:
  static bool literal_value(const BinaryFeatureVector& x, std::size_t literal,
                            std::size_t features) {
    return literal < features ? x.test(literal) : !x.test(literal - features);
  }

  static void feedback(ClauseBank& bank, const BinaryFeatureVector& x, bool target, int threshold,
                       double s, detail::Rng& rng, std::vector<std::uint8_t>& outputs,
                       EpochStats& stats) {
    int votes = 0;
    for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
      outputs[j] = bank.output(j, x, ClauseMode::training) ? 1 : 0;
      if (outputs[j]) votes += ClauseBank::polarity(j) == Polarity::positive ? 1 : -1;
    }
    const int clamped = std::clamp(votes, -threshold, threshold);
    const double t = threshold;
    const double p = target ? (t - clamped) / (2.0 * t) : (t + clamped) / (2.0 * t);
    if (p <= 0.0) return;

    for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
      if (detail::uniform01(rng) >= p) continue;
      const bool positive = ClauseBank::polarity(j) == Polarity::positive;
      if (positive == target) {
        ++stats.type_i;
        type_i(bank, j, x, outputs[j] != 0, s, rng);
      } else {
        ++stats.type_ii;
        type_ii(bank, j, x, outputs[j] != 0);
      }
    }
  }

  // Combats false negatives: grows patterns that match, forgets the rest.
  static void type_i(ClauseBank& bank, std::size_t j, const BinaryFeatureVector& x, bool output,
                     double s, detail::Rng& rng) {
    const std::size_t features = bank.num_features();
    const double p_forget = 1.0 / s;
    const double p_memorize = (s - 1.0) / s;
    if (output) {
      for (std::size_t l = 0; l < bank.num_literals(); ++l) {
        if (literal_value(x, l, features)) {
          if (detail::uniform01(rng) < p_memorize) bank.step_include(j, l);
        } else if (detail::uniform01(rng) < p_forget) {
          bank.step_exclude(j, l);
        }
      }
    } else {
      for (std::size_t l = 0; l < bank.num_literals(); ++l) {
        if (detail::uniform01(rng) < p_forget) bank.step_exclude(j, l);
      }
    }
  }

  // Combats false positives: adds excluded zero-valued literals so the
  // clause stops firing on this input.
  static void type_ii(ClauseBank& bank, std::size_t j, const BinaryFeatureVector& x, bool output) {
    if (!output) return;
    const std::size_t features = bank.num_features();
    for (std::size_t l = 0; l < bank.num_literals(); ++l) {
      if (!literal_value(x, l, features) && !bank.included(j, l)) bank.step_include(j, l);
    }
  }

  detail::Rng master_;
  std::vector<detail::Rng> class_rngs_;
  unsigned threads_;
};

inline EpochStats train_epoch(TMModel& model, std::span<const LabeledVector> data,
                              TMTrainer& trainer) {
  return trainer.train_epoch(model, data);
}

inline double accuracy(const TMModel& model, std::span<const LabeledVector> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : data) hits += predict(model, ex.x) == ex.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Payload: config fields, then every bank's states as u16 in clause-major
/// order. Wrapped in the shared container with kind tag `tm`.
inline std::vector<std::byte> serialize(const TMModel& model, std::string_view metadata = {}) {
  detail::ByteWriter w;
  const auto& c = model.config();
  w.u64(c.num_classes);
  w.u64(c.clauses_per_class);
  w.u64(c.num_features);
  w.i32(c.threshold);
  w.f64(c.specificity);
  w.i32(c.states_per_action);
  w.u64(c.seed);
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    for (auto s : model.bank(k).raw_states()) w.u16(s);
  }
  return seal(ModelKind::tm, metadata, w.bytes());
}

inline TMModel deserialize_tm(std::span<const std::byte> bytes, std::string* metadata = nullptr) {
  auto sealed = unseal_expect(bytes, ModelKind::tm);
  detail::ByteReader r(sealed.payload);
  TMConfig c;
  c.num_classes = r.u64();
  c.clauses_per_class = r.u64();
  c.num_features = r.u64();
  c.threshold = r.i32();
  c.specificity = r.f64();
  c.states_per_action = r.i32();
  c.seed = r.u64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }
  const auto expected = static_cast<double>(c.num_classes) * static_cast<double>(c.clauses_per_class) *
                        2.0 * static_cast<double>(c.num_features) * 2.0;
  if (expected != static_cast<double>(r.remaining())) {
    throw FormatError("state block size does not match model config");
  }
  TMModel model(c);
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    auto& bank = model.bank(k);
    for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
      for (std::size_t l = 0; l < bank.num_literals(); ++l) {
        const int s = r.u16();
        if (s < 1 || s > bank.max_state()) throw FormatError("automaton state out of range");
        bank.set_state(j, l, s);
      }
    }
  }
  if (metadata) *metadata = std::move(sealed.metadata);
  return model;
}

}  // namespace tmrec
