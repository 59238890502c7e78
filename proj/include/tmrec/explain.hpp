#pragma once

// Clause introspection, inclusion statistics, per-prediction vote
// breakdowns and a model-agnostic permutation-sampling Shapley attributor.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmrec/baselines.hpp"
#include "tmrec/detail/csv.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/detail/parallel.hpp"
#include "tmrec/detail/random.hpp"
#include "tmrec/error.hpp"
#include "tmrec/tm.hpp"

namespace tmrec {

/// "name" for a feature literal, "NOT name" for its negation.
inline std::string literal_name(std::size_t literal, std::span<const std::string> feature_names) {
  const auto f = feature_names.size();
  if (literal < f) return feature_names[literal];
  if (literal < 2 * f) return "NOT " + feature_names[literal - f];
  return "literal_" + std::to_string(literal);
}

// ---- inclusion matrix ---------------------------------------------------

struct ClauseInclusionMatrix {
  std::size_t class_id = 0;
  std::size_t num_features = 0;
  std::vector<BinaryFeatureVector> rows;  // one per clause, 2F literals wide

  std::size_t num_clauses() const { return rows.size(); }
  std::size_t num_literals() const { return 2 * num_features; }
  bool included(std::size_t clause, std::size_t literal) const { return rows.at(clause).test(literal); }
  Polarity polarity(std::size_t clause) const { return ClauseBank::polarity(clause); }

  friend bool operator==(const ClauseInclusionMatrix&, const ClauseInclusionMatrix&) = default;
};

inline ClauseInclusionMatrix clause_inclusion_matrix(const TMModel& model, std::size_t class_id) {
  model.check_class(class_id);
  const auto& bank = model.bank(class_id);
  ClauseInclusionMatrix m{class_id, model.num_features(), {}};
  m.rows.reserve(bank.num_clauses());
  for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
    BinaryFeatureVector row(bank.num_literals());
    for (std::size_t l = 0; l < bank.num_literals(); ++l) {
      if (bank.included(j, l)) row.set(l);
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

/// Sparse (clause, literal) list: class,clause,polarity,literal,name.
inline void write_inclusion_csv(const ClauseInclusionMatrix& m, std::span<const std::string> feature_names,
                                std::ostream& out) {
  detail::write_csv_row(out, {"class", "clause", "polarity", "literal", "name"});
  for (std::size_t j = 0; j < m.num_clauses(); ++j) {
    for (std::size_t l = 0; l < m.num_literals(); ++l) {
      if (!m.included(j, l)) continue;
      detail::write_csv_row(out, {std::to_string(m.class_id), std::to_string(j),
                                  m.polarity(j) == Polarity::positive ? "+" : "-", std::to_string(l),
                                  literal_name(l, feature_names)});
    }
  }
}

// ---- inclusion statistics -----------------------------------------------

struct ClassInclusion {
  std::size_t class_id = 0;
  std::size_t prediction_count = 0;
  std::size_t pos = 0;      // feature literals in positive clauses
  std::size_t not_pos = 0;  // negated literals in positive clauses
  std::size_t neg = 0;
  std::size_t not_neg = 0;
};

struct InclusionStats {
  std::vector<ClassInclusion> classes;              // by prediction count, descending
  std::vector<std::size_t> feature_positive_counts;  // positive clauses including each feature literal
  std::size_t total_positive_clauses = 0;
  double mean_rate = 0.0;                            // mean of feature_positive_counts

  /// Mean positive-clause inclusion count over a subset of features.
  double mean_rate_over(std::span<const std::size_t> features) const {
    if (features.empty()) return 0.0;
    double sum = 0.0;
    for (auto f : features) sum += static_cast<double>(feature_positive_counts.at(f));
    return sum / static_cast<double>(features.size());
  }
};

inline InclusionStats inclusion_stats(const TMModel& model, std::span<const std::size_t> prediction_counts) {
  if (prediction_counts.size() != model.num_classes()) {
    throw DimensionError("one prediction count per class required");
  }
  const auto f = model.num_features();
  InclusionStats stats;
  stats.feature_positive_counts.assign(f, 0);
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    const auto& bank = model.bank(c);
    ClassInclusion row{c, prediction_counts[c]};
    for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
      const bool positive = ClauseBank::polarity(j) == Polarity::positive;
      stats.total_positive_clauses += positive;
      for (std::size_t l = 0; l < 2 * f; ++l) {
        if (!bank.included(j, l)) continue;
        const bool negated = l >= f;
        if (positive) {
          (negated ? row.not_pos : row.pos) += 1;
          if (!negated) ++stats.feature_positive_counts[l];
        } else {
          (negated ? row.not_neg : row.neg) += 1;
        }
      }
    }
    stats.classes.push_back(row);
  }
  std::stable_sort(stats.classes.begin(), stats.classes.end(), [](const auto& a, const auto& b) {
    return a.prediction_count > b.prediction_count;
  });
  if (f) {
    const double total = std::accumulate(stats.feature_positive_counts.begin(),
                                         stats.feature_positive_counts.end(), 0.0);
    stats.mean_rate = total / static_cast<double>(f);
  }
  return stats;
}

/// Aligned text: class | count | pos | NOT pos | neg | NOT neg.
inline std::string render_inclusion_table(const InclusionStats& stats,
                                          std::span<const std::string> class_names = {},
                                          std::size_t max_rows = SIZE_MAX) {
  std::vector<std::vector<std::string>> cells{{"class", "count", "pos", "NOT pos", "neg", "NOT neg"}};
  for (std::size_t i = 0; i < std::min(max_rows, stats.classes.size()); ++i) {
    const auto& r = stats.classes[i];
    cells.push_back({r.class_id < class_names.size() ? class_names[r.class_id] : std::to_string(r.class_id),
                     std::to_string(r.prediction_count), std::to_string(r.pos), std::to_string(r.not_pos),
                     std::to_string(r.neg), std::to_string(r.not_neg)});
  }
  std::vector<std::size_t> widths(6, 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << " | ";
      const auto pad = std::string(widths[c] - row[c].size(), ' ');
      out << (c == 0 ? row[c] + pad : pad + row[c]);
    }
    out << '\n';
  }
  return out.str();
}

// ---- prediction explanation ---------------------------------------------

struct ClauseContribution {
  std::size_t clause = 0;
  Polarity polarity = Polarity::positive;
  int vote = 0;  // +1 or -1
  std::vector<std::size_t> satisfied_literals;
};

struct ClassExplanation {
  std::size_t class_id = 0;
  int score = 0;
  std::vector<ClauseContribution> contributions;
};

struct Counterfactual {
  std::size_t feature = 0;
  bool new_value = false;
  std::size_t new_class = 0;
  int new_score = 0;
};

struct PredictionExplanation {
  std::size_t predicted = 0;
  std::vector<std::size_t> tied_with;  // other classes sharing the top score
  std::vector<ClassExplanation> top;   // predicted class first
  std::vector<Counterfactual> counterfactuals;
  std::size_t flips_tried = 0;
};

inline ClassExplanation explain_class(const TMModel& model, std::size_t class_id, const BinaryFeatureVector& x) {
  model.check_class(class_id);
  model.check_width(x);
  const auto& bank = model.bank(class_id);
  ClassExplanation out{class_id, 0, {}};
  for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
    if (!bank.output(j, x, ClauseMode::inference)) continue;
    ClauseContribution c{j, ClauseBank::polarity(j), ClauseBank::polarity(j) == Polarity::positive ? 1 : -1, {}};
    for (std::size_t l = 0; l < bank.num_literals(); ++l) {
      if (bank.included(j, l)) c.satisfied_literals.push_back(l);
    }
    out.score += c.vote;
    out.contributions.push_back(std::move(c));
  }
  return out;
}

/// Top-m classes with their firing clauses. With flip_budget > 0, tries
/// single-bit flips (features used by the shown classes first) and records
/// every flip that changes the predicted class.
inline PredictionExplanation explain_prediction(const TMModel& model, const BinaryFeatureVector& x,
                                                std::size_t top_m = 3, std::size_t flip_budget = 0) {
  model.check_width(x);
  top_m = std::clamp<std::size_t>(top_m, 1, model.num_classes());
  const auto scores = class_scores(model, x);
  const auto ranked = detail::top_k_indices(std::span<const int>(scores), top_m);
  PredictionExplanation out;
  out.predicted = ranked.front();
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c != out.predicted && scores[c] == scores[out.predicted]) out.tied_with.push_back(c);
  }
  for (auto c : ranked) out.top.push_back(explain_class(model, c, x));

  if (flip_budget) {
    const auto f = model.num_features();
    std::set<std::size_t> used;
    for (const auto& ce : out.top) {
      for (const auto& contrib : ce.contributions) {
        for (auto l : contrib.satisfied_literals) used.insert(l % f);
      }
      const auto& bank = model.bank(ce.class_id);
      for (std::size_t j = 0; j < bank.num_clauses(); ++j) {
        for (std::size_t l = 0; l < bank.num_literals(); ++l) {
          if (bank.included(j, l)) used.insert(l % f);
        }
      }
    }
    std::vector<std::size_t> order(used.begin(), used.end());
    for (std::size_t i = 0; i < f; ++i) {
      if (!used.count(i)) order.push_back(i);
    }
    for (std::size_t i = 0; i < std::min(flip_budget, order.size()); ++i) {
      auto flipped = x;
      flipped.flip(order[i]);
      const auto s = class_scores(model, flipped);
      const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
      ++out.flips_tried;
      if (best != out.predicted) out.counterfactuals.push_back({order[i], flipped.test(order[i]), best, s[best]});
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const PredictionExplanation& e, std::span<const std::string> feature_names = {},
                                      std::span<const std::string> class_names = {}) {
  auto cname = [&](std::size_t c) {
    return c < class_names.size() ? class_names[c] : std::to_string(c);
  };
  auto lname = [&](std::size_t l) {
    return feature_names.empty() ? "literal_" + std::to_string(l) : literal_name(l, feature_names);
  };
  nlohmann::ordered_json j;
  j["predicted"] = cname(e.predicted);
  j["tied_with"] = nlohmann::ordered_json::array();
  for (auto c : e.tied_with) j["tied_with"].push_back(cname(c));
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& ce : e.top) {
    nlohmann::ordered_json cj{{"class", cname(ce.class_id)}, {"score", ce.score}};
    cj["clauses"] = nlohmann::ordered_json::array();
    for (const auto& c : ce.contributions) {
      std::vector<std::string> lits;
      for (auto l : c.satisfied_literals) lits.push_back(lname(l));
      cj["clauses"].push_back({{"clause", c.clause}, {"vote", c.vote}, {"literals", lits}});
    }
    j["classes"].push_back(cj);
  }
  j["flips_tried"] = e.flips_tried;
  j["counterfactuals"] = nlohmann::ordered_json::array();
  for (const auto& cf : e.counterfactuals) {
    j["counterfactuals"].push_back({{"feature", feature_names.empty() ? std::to_string(cf.feature)
                                                                      : feature_names[cf.feature]},
                                    {"new_value", cf.new_value},
                                    {"new_class", cname(cf.new_class)},
                                    {"new_score", cf.new_score}});
  }
  return j;
}

// ---- Shapley attribution ------------------------------------------------

using Scorer = std::function<double(std::span<const double>)>;

struct ShapleyOptions {
  std::size_t permutations = 2000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ShapleyReport {
  std::size_t class_id = 0;
  std::vector<double> values;          // one per player (feature or group)
  std::vector<double> standard_error;
  std::vector<double> feature_values;  // x at each player's first feature
  double baseline = 0.0;               // mean scorer value over the background
  double prediction = 0.0;             // scorer value at x
  std::size_t samples = 0;
};

/// Permutation-sampling Shapley values of the interventional game
///   v(S) = E_b f(x_S, b_rest).
/// Sample i draws a random player order and uses background row i mod |B|
/// as the reference; players switch from reference to x in order and each
/// receives its marginal change. `groups` optionally makes several input
/// columns one player.
inline ShapleyReport shapley_attribute(const Scorer& scorer, const std::vector<std::vector<double>>& background,
                                       std::span<const double> x, std::size_t class_id,
                                       const ShapleyOptions& options,
                                       const std::vector<std::vector<std::size_t>>* groups = nullptr) {
  if (options.permutations < 1) throw ConfigError("at least one permutation is required");
  if (background.empty()) throw ConfigError("background set is empty");
  const auto width = x.size();
  for (const auto& b : background) {
    if (b.size() != width) throw DimensionError("background row width does not match the input");
  }
  std::vector<std::vector<std::size_t>> players;
  if (groups) {
    players = *groups;
    std::vector<int> seen(width, 0);
    for (const auto& g : players) {
      if (g.empty()) throw ConfigError("empty feature group");
      for (auto i : g) {
        if (i >= width || seen[i]++) throw ConfigError("feature groups must be disjoint and in range");
      }
    }
  } else {
    for (std::size_t i = 0; i < width; ++i) players.push_back({i});
  }
  const auto p = players.size();

  auto call = [&](std::span<const double> z, std::size_t sample) {
    try {
      return scorer(z);
    } catch (const std::exception& e) {
      throw ScorerError("scorer failed in permutation " + std::to_string(sample) + ": " + e.what(), sample);
    }
  };

  ShapleyReport report;
  report.class_id = class_id;
  report.samples = options.permutations;
  report.prediction = call(x, 0);
  {
    std::vector<double> fb(background.size());
    for (std::size_t b = 0; b < background.size(); ++b) fb[b] = call(background[b], 0);
    report.baseline = std::accumulate(fb.begin(), fb.end(), 0.0) / static_cast<double>(fb.size());
  }

  // Fixed-size blocks merged in block order keep results independent of the
  // thread count.
  constexpr std::size_t kBlock = 64;
  const auto blocks = (options.permutations + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> block_sum(blocks, std::vector<double>(p, 0.0));
  std::vector<std::vector<double>> block_sq(blocks, std::vector<double>(p, 0.0));
  detail::parallel_for(blocks, options.threads, [&](std::size_t blk) {
    std::vector<std::size_t> order(p);
    std::vector<double> z(width);
    for (std::size_t i = blk * kBlock; i < std::min(options.permutations, (blk + 1) * kBlock); ++i) {
      auto rng = detail::derive_rng(options.seed, i);
      std::iota(order.begin(), order.end(), std::size_t{0});
      detail::shuffle(order, rng);
      const auto& ref = background[i % background.size()];
      std::copy(ref.begin(), ref.end(), z.begin());
      double prev = call(z, i);
      for (auto player : order) {
        for (auto col : players[player]) z[col] = x[col];
        const double next = call(z, i);
        const double delta = next - prev;
        block_sum[blk][player] += delta;
        block_sq[blk][player] += delta * delta;
        prev = next;
      }
    }
  });
  const auto n = static_cast<double>(options.permutations);
  report.values.assign(p, 0.0);
  report.standard_error.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
      sum += block_sum[b][j];
      sq += block_sq[b][j];
    }
    const double mean = sum / n;
    report.values[j] = mean;
    if (options.permutations > 1) {
      const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
      report.standard_error[j] = std::sqrt(var / n);
    }
    report.feature_values.push_back(x[players[j].front()]);
  }
  return report;
}

/// Raw class score of a TM over a 0/1 real vector (entries >= 0.5 are set).
inline Scorer tm_scorer(const TMModel& model, std::size_t class_id) {
  model.check_class(class_id);
  return [&model, class_id](std::span<const double> z) {
    BinaryFeatureVector bits(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] >= 0.5) bits.set(i);
    }
    return static_cast<double>(class_score(model, class_id, bits));
  };
}

/// Softmax probability of one class.
inline Scorer network_scorer(const FeedForwardModel& model, std::size_t class_id) {
  if (class_id >= model.num_classes()) throw RangeError("class id out of range");
  return [&model, class_id](std::span<const double> z) {
    return model.forward(z)(static_cast<Eigen::Index>(class_id));
  };
}

// ---- beeswarm export ----------------------------------------------------

struct BeeswarmPoint {
  std::size_t feature = 0;
  std::size_t report = 0;
  double attribution = 0.0;
  double value = 0.0;
};

struct BeeswarmTable {
  std::vector<std::size_t> features;     // top players by mean |attribution|
  std::vector<double> mean_abs;          // aligned with features
  std::vector<BeeswarmPoint> points;
};

inline BeeswarmTable beeswarm_export(std::span<const ShapleyReport> reports, std::size_t top_m) {
  if (reports.empty()) throw ConfigError("beeswarm export needs at least one report");
  const auto p = reports.front().values.size();
  for (const auto& r : reports) {
    if (r.values.size() != p) throw DimensionError("reports disagree on feature count");
  }
  std::vector<double> mean_abs(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> mags;
    for (const auto& r : reports) mags.push_back(std::abs(r.values[j]));
    std::sort(mags.begin(), mags.end());
    mean_abs[j] = std::accumulate(mags.begin(), mags.end(), 0.0) / static_cast<double>(reports.size());
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mean_abs[a] > mean_abs[b]; });
  order.resize(std::min(top_m, p));
  BeeswarmTable t;
  t.features = order;
  for (auto j : order) {
    t.mean_abs.push_back(mean_abs[j]);
    for (std::size_t r = 0; r < reports.size(); ++r) {
      t.points.push_back({j, r, reports[r].values[j], reports[r].feature_values[j]});
    }
  }
  return t;
}

inline void write_beeswarm_csv(const BeeswarmTable& t, std::span<const std::string> names, std::ostream& out) {
  detail::write_csv_row(out, {"feature", "rank", "report", "attribution", "value"});
  for (const auto& pt : t.points) {
    const auto rank = static_cast<std::size_t>(std::find(t.features.begin(), t.features.end(), pt.feature) -
                                               t.features.begin());
    detail::write_csv_row(out, {pt.feature < names.size() ? names[pt.feature] : std::to_string(pt.feature),
                                std::to_string(rank), std::to_string(pt.report),
                                detail::format_double(pt.attribution), detail::format_double(pt.value)});
  }
}

inline nlohmann::ordered_json to_json(const ShapleyReport& r, std::span<const std::string> names = {}) {
  nlohmann::ordered_json j;
  j["class"] = r.class_id;
  j["samples"] = r.samples;
  j["baseline"] = r.baseline;
  j["prediction"] = r.prediction;
  j["features"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    j["features"].push_back({{"name", i < names.size() ? names[i] : std::to_string(i)},
                             {"value", r.feature_values[i]},
                             {"attribution", r.values[i]},
                             {"standard_error", r.standard_error[i]}});
  }
  return j;
}

}  // namespace tmrec
