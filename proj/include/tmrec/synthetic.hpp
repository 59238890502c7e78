#pragma once

// Synthetic data with planted conjunctive rules: a full interaction log in
// the H&M table layout for end-to-end runs, and bare labelled bit vectors
// for learner-level checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "tmrec/bitvector.hpp"
#include "tmrec/dataset.hpp"
#include "tmrec/detail/random.hpp"
#include "tmrec/error.hpp"
#include "tmrec/tm.hpp"

namespace tmrec {

struct Literal {
  std::size_t feature = 0;
  bool negated = false;

  friend bool operator==(const Literal&, const Literal&) = default;
};

/// Conjunction of literals implying `target` (an item or class index).
struct PlantedRule {
  std::vector<Literal> literals;
  std::size_t target = 0;

  bool matches(const BinaryFeatureVector& x) const {
    for (const auto& l : literals) {
      if (x.test(l.feature) == l.negated) return false;
    }
    return true;
  }
};

/// 2^bits rules over features [0, bits) that partition the input space;
/// rule m fires when those features spell m in binary (feature 0 = LSB).
inline std::vector<PlantedRule> partition_rules(std::size_t bits) {
  std::vector<PlantedRule> rules;
  for (std::size_t m = 0; m < (std::size_t{1} << bits); ++m) {
    PlantedRule r;
    r.target = m;
    for (std::size_t b = 0; b < bits; ++b) r.literals.push_back({b, ((m >> b) & 1U) == 0});
    rules.push_back(std::move(r));
  }
  return rules;
}

struct SyntheticSpec {
  std::size_t num_customers = 2000;
  std::size_t num_items = 64;
  std::size_t num_features = 12;    // binary customer attributes f0..f{n-1}
  std::vector<PlantedRule> rules;   // empty: partition_rules(rule_bits)
  std::size_t rule_bits = 3;
  double noise_rate = 0.0;          // chance a purchase goes to a background item
  std::size_t min_purchases = 3;
  std::size_t max_purchases = 8;
  int days = 90;
  double popularity_skew = 1.0;     // Zipf exponent of the background item draw
  std::uint64_t seed = 0;

  std::vector<PlantedRule> resolved_rules() const {
    return rules.empty() ? partition_rules(rule_bits) : rules;
  }
};

struct SyntheticTruth {
  std::vector<PlantedRule> rules;
  std::vector<int> customer_rule;          // per customer row; -1 when no rule fires
  std::vector<std::string> planted_item;   // per transaction; empty when no rule fires
  std::vector<bool> noised;                // per transaction
};

struct SyntheticDataset {
  InteractionLog log;
  SyntheticTruth truth;
};

inline std::string synthetic_item_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%010zu", std::size_t{100000000} + i);
  return buf;
}

inline std::string synthetic_customer_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%06zu", i);
  return buf;
}

/// Customers get uniform random attribute bits. A customer whose bits match
/// a rule (first match wins) buys the rule's item; with probability
/// noise_rate, or when no rule matches, a purchase is drawn from the
/// background popularity distribution instead.
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_customers < 1 || spec.num_items < 1 || spec.num_features < 1) {
    throw ConfigError("synthetic spec needs at least one customer, item and feature");
  }
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0)) {
    throw ConfigError("noise_rate must be in [0, 1]");
  }
  if (spec.min_purchases < 1 || spec.max_purchases < spec.min_purchases) {
    throw ConfigError("purchase counts must satisfy 1 <= min <= max");
  }
  if (spec.days < 1) throw ConfigError("days must be >= 1");
  if (spec.rules.empty() && spec.rule_bits > spec.num_features) {
    throw ConfigError("rule_bits exceeds num_features");
  }
  const auto rules = spec.resolved_rules();
  for (const auto& r : rules) {
    if (r.literals.empty()) throw ConfigError("planted rule without literals");
    if (r.target >= spec.num_items) throw ConfigError("planted rule targets a missing item");
    for (const auto& l : r.literals) {
      if (l.feature >= spec.num_features) {
        throw ConfigError("planted rule references feature " + std::to_string(l.feature) +
                          " of " + std::to_string(spec.num_features));
      }
    }
  }

  auto rng = detail::derive_rng(spec.seed, 0x5f5f);
  static const char* kSections[] = {"Womens Everyday Collection", "Divided Collection",
                                    "Baby Essentials & Complements", "Mens Underwear",
                                    "Collaborations", "Ladies Denim", "Kids Girl", "Womens Lingerie"};
  static const char* kAppearance[] = {"Solid", "Stripe", "Spots", "All over pattern",
                                      "Melange", "Denim"};
  static const char* kGroups[] = {"Garment Upper body", "Garment Lower body", "Underwear",
                                  "Accessories", "Shoes"};
  static const char* kColours[] = {"Black", "White", "Dark Blue", "Light Pink", "Grey", "Beige"};
  static const char* kStatus[] = {"ACTIVE", "PRE-CREATE", "LEFT CLUB"};
  static const char* kNews[] = {"NONE", "Regularly", "Monthly"};

  auto items = std::make_shared<AttributeTable>(
      "article_id", std::vector<std::string>{"product_group_name", "graphical_appearance_name",
                                             "colour_group_name", "section_name"});
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    items->add(synthetic_item_id(i), {kGroups[detail::uniform_index(rng, 5)],
                                      kAppearance[detail::uniform_index(rng, 6)],
                                      kColours[detail::uniform_index(rng, 6)],
                                      kSections[detail::uniform_index(rng, 8)]});
  }

  std::vector<std::string> customer_columns{"club_member_status", "fashion_news_frequency", "age"};
  for (std::size_t f = 0; f < spec.num_features; ++f) customer_columns.push_back("f" + std::to_string(f));
  auto customers = std::make_shared<AttributeTable>("customer_id", customer_columns);

  // Background popularity: Zipf over item index.
  std::vector<double> cdf(spec.num_items);
  double total = 0.0;
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    total += 1.0 / std::pow(static_cast<double>(i + 1), spec.popularity_skew);
    cdf[i] = total;
  }
  auto background_item = [&] {
    const double u = detail::uniform01(rng) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(spec.num_items - 1)));
  };

  const Day start = parse_date("2020-06-01");
  struct Row {
    Transaction t;
    std::string planted;
    bool noised;
    std::size_t customer;
    std::size_t seq;
  };
  std::vector<Row> rows;
  SyntheticDataset out;
  out.truth.rules = rules;
  for (std::size_t c = 0; c < spec.num_customers; ++c) {
    BinaryFeatureVector bits(spec.num_features);
    for (std::size_t f = 0; f < spec.num_features; ++f) bits.set(f, (rng() & 1U) != 0);
    int rule = -1;
    for (std::size_t r = 0; r < rules.size(); ++r) {
      if (rules[r].matches(bits)) {
        rule = static_cast<int>(r);
        break;
      }
    }
    out.truth.customer_rule.push_back(rule);

    std::vector<std::string> values{kStatus[detail::uniform_index(rng, 3)],
                                    kNews[detail::uniform_index(rng, 3)],
                                    std::to_string(18 + detail::uniform_index(rng, 60))};
    for (std::size_t f = 0; f < spec.num_features; ++f) values.push_back(bits.test(f) ? "1" : "0");
    const auto cid = synthetic_customer_id(c);
    customers->add(cid, std::move(values));

    const auto n = spec.min_purchases +
                   detail::uniform_index(rng, spec.max_purchases - spec.min_purchases + 1);
    std::vector<Day> days(n);
    for (auto& d : days) d = start + static_cast<Day>(detail::uniform_index(rng, static_cast<std::uint64_t>(spec.days)));
    std::sort(days.begin(), days.end());
    for (std::size_t p = 0; p < n; ++p) {
      const bool noised = detail::uniform01(rng) < spec.noise_rate;
      std::string planted = rule >= 0 ? synthetic_item_id(rules[static_cast<std::size_t>(rule)].target) : "";
      const std::size_t item = (rule >= 0 && !noised) ? rules[static_cast<std::size_t>(rule)].target
                                                      : background_item();
      const double price = 0.01 + 0.001 * static_cast<double>(detail::uniform_index(rng, 90));
      const std::string channel = (rng() & 1U) ? "2" : "1";
      rows.push_back({{days[p], cid, synthetic_item_id(item), price, channel}, planted,
                      noised || rule < 0, c, p});
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.t.day < b.t.day; });
  for (auto& r : rows) {
    out.log.transactions.push_back(std::move(r.t));
    out.truth.planted_item.push_back(std::move(r.planted));
    out.truth.noised.push_back(r.noised);
  }
  out.log.customers = std::move(customers);
  out.log.items = std::move(items);
  return out;
}

struct PlantedClassificationSpec {
  std::size_t num_classes = 16;
  std::size_t num_features = 40;
  std::size_t min_literals = 2;
  std::size_t max_literals = 3;
  double noise_rate = 0.0;  // chance a label is replaced by a uniform class
  std::uint64_t seed = 0;
};

/// One random rule per class over distinct features. No rule's literal set
/// is contained in another's, so every class can be sampled exclusively.
inline std::vector<PlantedRule> random_class_rules(const PlantedClassificationSpec& spec) {
  if (spec.num_classes < 1 || spec.min_literals < 1 || spec.max_literals < spec.min_literals ||
      spec.max_literals > spec.num_features) {
    throw ConfigError("inconsistent planted classification spec");
  }
  auto rng = detail::derive_rng(spec.seed, 0x7275);
  auto subsumes = [](const PlantedRule& a, const PlantedRule& b) {
    return std::all_of(a.literals.begin(), a.literals.end(), [&](const Literal& l) {
      return std::find(b.literals.begin(), b.literals.end(), l) != b.literals.end();
    });
  };
  std::vector<PlantedRule> rules;
  std::size_t attempts = 0;
  while (rules.size() < spec.num_classes) {
    if (++attempts > 100000) throw ConfigError("cannot draw non-overlapping planted rules");
    PlantedRule r;
    r.target = rules.size();
    const auto n = spec.min_literals + detail::uniform_index(rng, spec.max_literals - spec.min_literals + 1);
    std::vector<std::size_t> features(spec.num_features);
    for (std::size_t i = 0; i < features.size(); ++i) features[i] = i;
    detail::shuffle(features, rng);
    for (std::size_t i = 0; i < n; ++i) r.literals.push_back({features[i], (rng() & 1U) != 0});
    std::sort(r.literals.begin(), r.literals.end(),
              [](const Literal& a, const Literal& b) { return a.feature < b.feature; });
    const bool clash = std::any_of(rules.begin(), rules.end(), [&](const PlantedRule& o) {
      return subsumes(o, r) || subsumes(r, o);
    });
    if (!clash) rules.push_back(std::move(r));
  }
  return rules;
}

/// Uniform class, then uniform bits with the class rule forced, rejecting
/// draws where any other rule also fires.
inline std::vector<LabeledVector> sample_planted(const std::vector<PlantedRule>& rules,
                                                 std::size_t num_features, std::size_t n,
                                                 double noise_rate, std::uint64_t seed) {
  auto rng = detail::derive_rng(seed, 0x7361);
  std::vector<LabeledVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::size_t>(detail::uniform_index(rng, rules.size()));
    BinaryFeatureVector x(num_features);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > 100000) throw ConfigError("planted rules cannot be sampled exclusively");
      for (std::size_t f = 0; f < num_features; ++f) x.set(f, (rng() & 1U) != 0);
      for (const auto& l : rules[cls].literals) x.set(l.feature, !l.negated);
      bool exclusive = true;
      for (std::size_t r = 0; r < rules.size() && exclusive; ++r) {
        if (r != cls && rules[r].matches(x)) exclusive = false;
      }
      if (exclusive) break;
    }
    std::size_t label = rules[cls].target;
    if (noise_rate > 0.0 && detail::uniform01(rng) < noise_rate) {
      label = static_cast<std::size_t>(detail::uniform_index(rng, rules.size()));
    }
    out.push_back({std::move(x), label});
  }
  return out;
}

/// Label = x0 XOR x1; the remaining `distractors` bits are uniform noise.
inline std::vector<LabeledVector> generate_xor(std::size_t n, std::size_t distractors,
                                               std::uint64_t seed) {
  auto rng = detail::derive_rng(seed, 0x786f);
  std::vector<LabeledVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    BinaryFeatureVector x(2 + distractors);
    for (std::size_t f = 0; f < x.size(); ++f) x.set(f, (rng() & 1U) != 0);
    out.push_back({x, static_cast<std::size_t>(x.test(0) != x.test(1))});
  }
  return out;
}

}  // namespace tmrec
