#pragma once

// Feature schema and input assembly: customer attributes, customer latents,
// then N history slots of item attributes plus item latents. Categoricals are
// one-hot with a trailing PAD bit, continuous values use a thermometer code.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tmrec/als.hpp"
#include "tmrec/bitvector.hpp"
#include "tmrec/dataset.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/detail/hash.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

inline constexpr const char* kPadToken = "<PAD>";

struct CategoricalSpec {
  std::string name;
  std::vector<std::string> vocabulary;

  std::size_t width() const { return vocabulary.size() + 1; }
  friend bool operator==(const CategoricalSpec&, const CategoricalSpec&) = default;
};

struct ContinuousSpec {
  std::string name;
  double min = 0.0;
  double max = 1.0;
  std::size_t bins = 8;

  std::size_t width() const { return bins; }
  friend bool operator==(const ContinuousSpec&, const ContinuousSpec&) = default;
};

using FeatureSpec = std::variant<CategoricalSpec, ContinuousSpec>;

inline const std::string& spec_name(const FeatureSpec& spec) {
  return std::visit([](const auto& s) -> const std::string& { return s.name; }, spec);
}
inline std::size_t spec_width(const FeatureSpec& spec) {
  return std::visit([](const auto& s) { return s.width(); }, spec);
}
inline std::size_t spec_real_width(const FeatureSpec& spec) {
  return std::holds_alternative<CategoricalSpec>(spec) ? spec_width(spec) : 1;
}

inline void validate_spec(const FeatureSpec& spec) {
  if (const auto* c = std::get_if<CategoricalSpec>(&spec)) {
    if (c->vocabulary.empty()) throw ConfigError("categorical '" + c->name + "' has an empty vocabulary");
    std::set<std::string> seen(c->vocabulary.begin(), c->vocabulary.end());
    if (seen.size() != c->vocabulary.size()) throw ConfigError("categorical '" + c->name + "' repeats a value");
    if (seen.count(kPadToken)) throw ConfigError("categorical '" + c->name + "' uses the reserved PAD token");
  } else {
    const auto& k = std::get<ContinuousSpec>(spec);
    if (!(k.min < k.max)) throw ConfigError("continuous '" + k.name + "' needs min < max");
    if (k.bins < 1) throw ConfigError("continuous '" + k.name + "' needs bins >= 1");
  }
}

/// One-hot block of |vocabulary|+1 bits; the last bit is PAD. Unknown
/// values throw in strict mode and encode as PAD otherwise (`unknown` is
/// set so callers can count them).
inline BinaryFeatureVector encode_categorical(const CategoricalSpec& spec, std::string_view value,
                                              bool strict = true, bool* unknown = nullptr) {
  BinaryFeatureVector out(spec.width());
  if (unknown) *unknown = false;
  if (value == kPadToken) {
    out.set(spec.vocabulary.size());
    return out;
  }
  auto it = std::find(spec.vocabulary.begin(), spec.vocabulary.end(), value);
  if (it == spec.vocabulary.end()) {
    if (strict) {
      throw EncodingError("value '" + std::string(value) + "' not in vocabulary of '" + spec.name + "'");
    }
    if (unknown) *unknown = true;
    out.set(spec.vocabulary.size());
    return out;
  }
  out.set(static_cast<std::size_t>(it - spec.vocabulary.begin()));
  return out;
}

/// t_i = min + i (max - min) / (bins + 1), i = 1..bins.
inline std::vector<double> thermometer_thresholds(const ContinuousSpec& spec) {
  std::vector<double> t(spec.bins);
  const double step = (spec.max - spec.min) / static_cast<double>(spec.bins + 1);
  for (std::size_t i = 0; i < spec.bins; ++i) t[i] = spec.min + static_cast<double>(i + 1) * step;
  return t;
}

/// bit_i = 1 iff clamp(value) >= t_i.
inline BinaryFeatureVector encode_continuous(const ContinuousSpec& spec, double value) {
  if (std::isnan(value)) throw EncodingError("NaN value for '" + spec.name + "'");
  const double v = std::clamp(value, spec.min, spec.max);
  BinaryFeatureVector out(spec.bins);
  const auto t = thermometer_thresholds(spec);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (v >= t[i]) out.set(i);
  }
  return out;
}

/// Bit and real offsets of one named block.
struct BlockLayout {
  std::string label;
  std::size_t bit_offset = 0;
  std::size_t bit_width = 0;
  std::size_t real_offset = 0;
  std::size_t real_width = 0;
};

class FeatureSchema {
 public:
  std::vector<FeatureSpec> customer_attributes;
  std::vector<ContinuousSpec> customer_latent;
  std::vector<FeatureSpec> item_attributes;
  std::vector<ContinuousSpec> item_latent;
  std::size_t history_length = 7;
  // z-normalization of the real-valued twin; empty until fitted
  std::vector<double> real_mean;
  std::vector<double> real_std;

  void validate() const {
    if (history_length < 1) throw ConfigError("history length must be >= 1");
    std::set<std::string> names;
    auto check = [&](const FeatureSpec& s) {
      validate_spec(s);
      if (!names.insert(spec_name(s)).second) throw ConfigError("duplicate feature '" + spec_name(s) + "'");
    };
    for (const auto& s : customer_attributes) check(s);
    for (const auto& s : customer_latent) check(s);
    for (const auto& s : item_attributes) check(s);
    for (const auto& s : item_latent) check(s);
    if (!real_mean.empty() && (real_mean.size() != real_width() || real_std.size() != real_width())) {
      throw ConfigError("normalization statistics do not match the real width");
    }
  }

  std::size_t customer_bit_width() const { return width_of(customer_attributes) + width_of(customer_latent); }
  std::size_t slot_bit_width() const { return width_of(item_attributes) + width_of(item_latent); }
  std::size_t bit_width() const { return customer_bit_width() + history_length * slot_bit_width(); }

  std::size_t customer_real_width() const { return real_width_of(customer_attributes) + customer_latent.size(); }
  std::size_t slot_real_width() const { return real_width_of(item_attributes) + item_latent.size(); }
  std::size_t real_width() const { return customer_real_width() + history_length * slot_real_width(); }

  /// "customer", then "history_0" .. "history_{N-1}".
  std::vector<BlockLayout> blocks() const {
    std::vector<BlockLayout> out;
    out.push_back({"customer", 0, customer_bit_width(), 0, customer_real_width()});
    for (std::size_t i = 0; i < history_length; ++i) {
      out.push_back({"history_" + std::to_string(i),
                     customer_bit_width() + i * slot_bit_width(), slot_bit_width(),
                     customer_real_width() + i * slot_real_width(), slot_real_width()});
    }
    return out;
  }

  /// Human-readable name of every bit, e.g. "a0_section_name_Denim".
  std::vector<std::string> bit_names() const {
    std::vector<std::string> names;
    names.reserve(bit_width());
    auto add = [&](const std::string& prefix, const FeatureSpec& spec) {
      if (const auto* c = std::get_if<CategoricalSpec>(&spec)) {
        for (const auto& v : c->vocabulary) names.push_back(prefix + c->name + "_" + v);
        names.push_back(prefix + c->name + "_" + kPadToken);
      } else {
        const auto& k = std::get<ContinuousSpec>(spec);
        for (double t : thermometer_thresholds(k)) {
          names.push_back(prefix + k.name + ">=" + detail::format_fixed(t, 4));
        }
      }
    };
    for (const auto& s : customer_attributes) add("", s);
    for (const auto& s : customer_latent) add("", s);
    for (std::size_t i = 0; i < history_length; ++i) {
      const auto prefix = "a" + std::to_string(i) + "_";
      for (const auto& s : item_attributes) add(prefix, s);
      for (const auto& s : item_latent) add(prefix, s);
    }
    return names;
  }

  std::vector<std::string> real_names() const {
    std::vector<std::string> names;
    names.reserve(real_width());
    auto add = [&](const std::string& prefix, const FeatureSpec& spec) {
      if (const auto* c = std::get_if<CategoricalSpec>(&spec)) {
        for (const auto& v : c->vocabulary) names.push_back(prefix + c->name + "_" + v);
        names.push_back(prefix + c->name + "_" + kPadToken);
      } else {
        names.push_back(prefix + spec_name(spec));
      }
    };
    for (const auto& s : customer_attributes) add("", s);
    for (const auto& s : customer_latent) add("", s);
    for (std::size_t i = 0; i < history_length; ++i) {
      const auto prefix = "a" + std::to_string(i) + "_";
      for (const auto& s : item_attributes) add(prefix, s);
      for (const auto& s : item_latent) add(prefix, s);
    }
    return names;
  }

  bool normalized() const { return !real_mean.empty(); }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  template <typename Spec>
  static std::size_t width_of(const std::vector<Spec>& specs) {
    std::size_t w = 0;
    for (const auto& s : specs) w += spec_width(FeatureSpec(s));
    return w;
  }
  static std::size_t real_width_of(const std::vector<FeatureSpec>& specs) {
    std::size_t w = 0;
    for (const auto& s : specs) w += spec_real_width(s);
    return w;
  }
};

// ---- schema persistence -------------------------------------------------

inline nlohmann::ordered_json spec_to_json(const FeatureSpec& spec) {
  if (const auto* c = std::get_if<CategoricalSpec>(&spec)) {
    return {{"name", c->name}, {"type", "categorical"}, {"vocabulary", c->vocabulary}};
  }
  const auto& k = std::get<ContinuousSpec>(spec);
  return {{"name", k.name}, {"type", "continuous"}, {"min", k.min}, {"max", k.max}, {"bins", k.bins}};
}

inline FeatureSpec spec_from_json(const nlohmann::ordered_json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "categorical") {
    return CategoricalSpec{j.at("name").get<std::string>(), j.at("vocabulary").get<std::vector<std::string>>()};
  }
  if (type == "continuous") {
    return ContinuousSpec{j.at("name").get<std::string>(), j.at("min").get<double>(), j.at("max").get<double>(),
                          j.at("bins").get<std::size_t>()};
  }
  throw FormatError("unknown feature type '" + type + "'");
}

inline nlohmann::ordered_json to_json(const FeatureSchema& schema) {
  nlohmann::ordered_json j;
  j["format"] = "tmrec.schema";
  j["version"] = 1;
  j["history_length"] = schema.history_length;
  j["bit_width"] = schema.bit_width();
  j["real_width"] = schema.real_width();
  auto list = [](const auto& specs) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : specs) arr.push_back(spec_to_json(FeatureSpec(s)));
    return arr;
  };
  j["customer_attributes"] = list(schema.customer_attributes);
  j["customer_latent"] = list(schema.customer_latent);
  j["item_attributes"] = list(schema.item_attributes);
  j["item_latent"] = list(schema.item_latent);
  j["normalization"] = {{"mean", schema.real_mean}, {"std", schema.real_std}};
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "tmrec.schema" || j.value("version", 0) != 1) {
    throw FormatError("not a version-1 schema document");
  }
  FeatureSchema s;
  s.history_length = j.at("history_length").get<std::size_t>();
  for (const auto& x : j.at("customer_attributes")) s.customer_attributes.push_back(spec_from_json(x));
  for (const auto& x : j.at("item_attributes")) s.item_attributes.push_back(spec_from_json(x));
  auto latent = [](const nlohmann::ordered_json& arr) {
    std::vector<ContinuousSpec> out;
    for (const auto& x : arr) {
      auto spec = spec_from_json(x);
      if (!std::holds_alternative<ContinuousSpec>(spec)) throw FormatError("latent features must be continuous");
      out.push_back(std::get<ContinuousSpec>(spec));
    }
    return out;
  };
  s.customer_latent = latent(j.at("customer_latent"));
  s.item_latent = latent(j.at("item_latent"));
  s.real_mean = j.at("normalization").at("mean").get<std::vector<double>>();
  s.real_std = j.at("normalization").at("std").get<std::vector<double>>();
  s.validate();
  if (j.contains("bit_width") && j.at("bit_width").get<std::size_t>() != s.bit_width()) {
    throw FormatError("schema bit_width does not match its feature list");
  }
  return s;
}

/// FNV-1a of the canonical JSON dump.
inline std::uint64_t schema_hash(const FeatureSchema& schema) {
  return detail::fnv1a(std::string_view(to_json(schema).dump()));
}

// ---- schema fitting -----------------------------------------------------

/// Columns of one attribute in one block (e.g. every one-hot column of
/// "a0_section_name"), for attributions over whole attributes.
struct AttributeGroup {
  std::string name;
  std::vector<std::size_t> columns;
};

/// Groups over the bit layout (`bit_columns`) or the real-valued twin.
inline std::vector<AttributeGroup> attribute_groups(const FeatureSchema& schema, bool bit_columns) {
  std::vector<AttributeGroup> out;
  std::size_t next = 0;
  auto add = [&](const std::string& prefix, const FeatureSpec& spec) {
    const auto width = bit_columns ? spec_width(spec) : spec_real_width(spec);
    AttributeGroup g{prefix + spec_name(spec), {}};
    for (std::size_t i = 0; i < width; ++i) g.columns.push_back(next++);
    out.push_back(std::move(g));
  };
  for (const auto& s : schema.customer_attributes) add("", s);
  for (const auto& s : schema.customer_latent) add("", s);
  for (std::size_t i = 0; i < schema.history_length; ++i) {
    const auto prefix = "a" + std::to_string(i) + "_";
    for (const auto& s : schema.item_attributes) add(prefix, s);
    for (const auto& s : schema.item_latent) add(prefix, s);
  }
  return out;
}

struct SchemaOptions {
  // nullopt selects every non-continuous column with at most max_vocabulary values
  std::optional<std::vector<std::string>> customer_categorical;
  std::vector<std::string> customer_continuous{"age"};
  std::vector<std::string> item_categorical{"product_group_name", "graphical_appearance_name",
                                            "colour_group_name", "section_name"};
  std::vector<std::string> item_continuous;
  std::size_t history_length = 7;
  std::size_t bins = 8;
  std::size_t latent_bins = 8;
  std::size_t max_vocabulary = 64;
  bool use_latents = true;
};

namespace detail {

inline std::optional<double> parse_optional_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline CategoricalSpec fit_categorical(const AttributeTable& table, const std::string& column) {
  const auto col = table.column_index(column);
  std::set<std::string> values;
  for (const auto& id : table.ids()) values.insert(table.value(id, col));
  values.erase(kPadToken);
  if (values.empty()) throw SchemaError("column '" + column + "' has no values");
  return {column, std::vector<std::string>(values.begin(), values.end())};
}

inline ContinuousSpec fit_continuous(const AttributeTable& table, const std::string& column, std::size_t bins) {
  const auto col = table.column_index(column);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& id : table.ids()) {
    if (auto v = parse_optional_double(table.value(id, col))) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  }
  if (!std::isfinite(lo)) throw SchemaError("column '" + column + "' has no numeric values");
  if (!(lo < hi)) hi = lo + 1.0;
  return {column, lo, hi, bins};
}

inline std::vector<ContinuousSpec> fit_latent(const Eigen::MatrixXd& m, const std::string& prefix,
                                              std::size_t bins) {
  std::vector<ContinuousSpec> out;
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    double lo = m.rows() ? m.col(k).minCoeff() : 0.0;
    double hi = m.rows() ? m.col(k).maxCoeff() : 1.0;
    if (!(lo < hi)) hi = lo + 1.0;
    out.push_back({prefix + std::to_string(k), lo, hi, bins});
  }
  return out;
}

}  // namespace detail

/// Vocabularies and ranges come from the attribute tables; latent ranges
/// from the (training-split) factor matrices.
inline FeatureSchema fit_schema(const AttributeTable& customers, const AttributeTable& items,
                                const LatentFactors* latents, const SchemaOptions& options) {
  FeatureSchema schema;
  schema.history_length = options.history_length;
  std::vector<std::string> cust_cat;
  if (options.customer_categorical) {
    cust_cat = *options.customer_categorical;
  } else {
    for (const auto& column : customers.columns()) {
      if (std::find(options.customer_continuous.begin(), options.customer_continuous.end(), column) !=
          options.customer_continuous.end()) {
        continue;
      }
      std::set<std::string> values;
      const auto col = customers.column_index(column);
      for (const auto& id : customers.ids()) {
        values.insert(customers.value(id, col));
        if (values.size() > options.max_vocabulary) break;
      }
      if (values.size() <= options.max_vocabulary) cust_cat.push_back(column);
    }
  }
  for (const auto& c : cust_cat) schema.customer_attributes.push_back(detail::fit_categorical(customers, c));
  for (const auto& c : options.customer_continuous) {
    schema.customer_attributes.push_back(detail::fit_continuous(customers, c, options.bins));
  }
  for (const auto& c : options.item_categorical) schema.item_attributes.push_back(detail::fit_categorical(items, c));
  for (const auto& c : options.item_continuous) {
    schema.item_attributes.push_back(detail::fit_continuous(items, c, options.bins));
  }
  if (options.use_latents && latents) {
    schema.customer_latent = detail::fit_latent(latents->user_factors, "user_factor_", options.latent_bins);
    schema.item_latent = detail::fit_latent(latents->item_factors, "item_factor_", options.latent_bins);
  }
  schema.validate();
  return schema;
}

// ---- assembly -----------------------------------------------------------

/// Attribute values aligned with the schema's attribute list.
struct EntityRecord {
  std::string id;
  std::vector<std::string> values;
};

struct SegmentProvenance {
  std::string label;       // "customer" or "history_i"
  std::string entity_id;   // empty for a padded slot
  bool padded = false;
  bool latent_missing = false;
  std::size_t unknown_values = 0;  // lenient-mode PAD substitutions
};

struct AssembledInput {
  BinaryFeatureVector bits;
  std::vector<double> reals;
  std::vector<SegmentProvenance> provenance;
};

namespace detail {

constexpr double kMissingReal = std::numeric_limits<double>::quiet_NaN();

inline void encode_attributes(const std::vector<FeatureSpec>& specs, const EntityRecord* record, bool strict,
                              BinaryFeatureVector& bits, std::vector<double>& reals,
                              SegmentProvenance& prov) {
  if (record && record->values.size() != specs.size()) {
    throw DimensionError("record '" + record->id + "' has " + std::to_string(record->values.size()) +
                         " values for " + std::to_string(specs.size()) + " features");
  }
  for (std::size_t f = 0; f < specs.size(); ++f) {
    if (const auto* c = std::get_if<CategoricalSpec>(&specs[f])) {
      bool unknown = false;
      const auto block = encode_categorical(*c, record ? std::string_view(record->values[f]) : kPadToken,
                                            strict, &unknown);
      prov.unknown_values += unknown;
      bits.append(block);
      for (std::size_t i = 0; i < block.size(); ++i) reals.push_back(block.test(i) ? 1.0 : 0.0);
    } else {
      const auto& k = std::get<ContinuousSpec>(specs[f]);
      std::optional<double> v;
      if (record) {
        v = parse_optional_double(record->values[f]);
        if (!v) {
          if (strict) throw EncodingError("non-numeric value '" + record->values[f] + "' for '" + k.name + "'");
          ++prov.unknown_values;
        }
      }
      bits.append(v ? encode_continuous(k, *v) : BinaryFeatureVector(k.bins));
      reals.push_back(v ? *v : kMissingReal);
    }
  }
}

inline void encode_latent(const std::vector<ContinuousSpec>& specs, const Eigen::VectorXd* latent,
                          BinaryFeatureVector& bits, std::vector<double>& reals) {
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (latent) {
      const double v = (*latent)(static_cast<Eigen::Index>(k));
      bits.append(encode_continuous(specs[k], v));
      reals.push_back(v);
    } else {
      bits.append(BinaryFeatureVector(specs[k].bins));
      reals.push_back(kMissingReal);
    }
  }
}

}  // namespace detail

/// Raw real vector: padded continuous entries are NaN.
inline AssembledInput assemble_raw(const EntityRecord& customer, std::span<const EntityRecord> history,
                                   const LatentFactors* latents, const FeatureSchema& schema,
                                   bool strict = true) {
  AssembledInput out;
  out.bits = BinaryFeatureVector(0);
  out.reals.reserve(schema.real_width());
  auto latent_of = [&](const std::string& id, bool user, bool& missing) -> std::optional<Eigen::VectorXd> {
    if (user ? schema.customer_latent.empty() : schema.item_latent.empty()) return std::nullopt;
    const auto expected = user ? schema.customer_latent.size() : schema.item_latent.size();
    if (!latents || latents->rank() != expected) {
      missing = true;
      return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(expected));
    }
    bool found = false;
    auto v = user ? latents->user_or_zero(id, &found) : latents->item_or_zero(id, &found);
    missing = !found;
    return v;
  };

  SegmentProvenance cust;
  cust.label = "customer";
  cust.entity_id = customer.id;
  detail::encode_attributes(schema.customer_attributes, &customer, strict, out.bits, out.reals, cust);
  {
    auto v = latent_of(customer.id, true, cust.latent_missing);
    detail::encode_latent(schema.customer_latent, v ? &*v : nullptr, out.bits, out.reals);
  }
  out.provenance.push_back(cust);

  for (std::size_t slot = 0; slot < schema.history_length; ++slot) {
    SegmentProvenance prov;
    prov.label = "history_" + std::to_string(slot);
    const EntityRecord* item = slot < history.size() ? &history[slot] : nullptr;
    if (item) {
      prov.entity_id = item->id;
      detail::encode_attributes(schema.item_attributes, item, strict, out.bits, out.reals, prov);
      auto v = latent_of(item->id, false, prov.latent_missing);
      detail::encode_latent(schema.item_latent, v ? &*v : nullptr, out.bits, out.reals);
    } else {
      prov.padded = true;
      detail::encode_attributes(schema.item_attributes, nullptr, strict, out.bits, out.reals, prov);
      detail::encode_latent(schema.item_latent, nullptr, out.bits, out.reals);
    }
    out.provenance.push_back(prov);
  }
  return out;
}

/// Fits per-column mean and standard deviation over raw real rows,
/// ignoring missing entries. Constant columns get a unit deviation.
inline void fit_normalization(FeatureSchema& schema, const std::vector<std::vector<double>>& raw_rows) {
  const auto width = schema.real_width();
  std::vector<double> sum(width, 0.0), sq(width, 0.0);
  std::vector<std::size_t> n(width, 0);
  for (const auto& row : raw_rows) {
    if (row.size() != width) throw DimensionError("raw row width does not match the schema");
    for (std::size_t c = 0; c < width; ++c) {
      if (std::isnan(row[c])) continue;
      sum[c] += row[c];
      ++n[c];
    }
  }
  schema.real_mean.assign(width, 0.0);
  schema.real_std.assign(width, 1.0);
  for (std::size_t c = 0; c < width; ++c) {
    if (n[c]) schema.real_mean[c] = sum[c] / static_cast<double>(n[c]);
  }
  for (const auto& row : raw_rows) {
    for (std::size_t c = 0; c < width; ++c) {
      if (!std::isnan(row[c])) sq[c] += (row[c] - schema.real_mean[c]) * (row[c] - schema.real_mean[c]);
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    const double sd = n[c] ? std::sqrt(sq[c] / static_cast<double>(n[c])) : 0.0;
    schema.real_std[c] = sd > 1e-12 ? sd : 1.0;
  }
}

/// Missing entries map to 0 (the training mean).
inline void normalize_reals(const FeatureSchema& schema, std::vector<double>& reals) {
  if (reals.size() != schema.real_width()) throw DimensionError("real vector width does not match the schema");
  for (std::size_t c = 0; c < reals.size(); ++c) {
    if (std::isnan(reals[c])) {
      reals[c] = 0.0;
    } else if (schema.normalized()) {
      reals[c] = (reals[c] - schema.real_mean[c]) / schema.real_std[c];
    }
  }
}

/// History is most-recent-first; entries beyond the schema's N are ignored.
inline AssembledInput assemble(const EntityRecord& customer, std::span<const EntityRecord> history,
                               const LatentFactors* latents, const FeatureSchema& schema,
                               bool strict = true) {
  auto out = assemble_raw(customer, history, latents, schema, strict);
  normalize_reals(schema, out.reals);
  return out;
}

/// Builds records from attribute tables and assembles inputs by id.
class Encoder {
 public:
  Encoder(std::shared_ptr<const FeatureSchema> schema, std::shared_ptr<const AttributeTable> customers,
          std::shared_ptr<const AttributeTable> items, std::shared_ptr<const LatentFactors> latents,
          bool strict = false)
      : schema_(std::move(schema)),
        customers_(std::move(customers)),
        items_(std::move(items)),
        latents_(std::move(latents)),
        strict_(strict) {
    for (const auto& s : schema_->customer_attributes) customer_cols_.push_back(customers_->column_index(spec_name(s)));
    for (const auto& s : schema_->item_attributes) item_cols_.push_back(items_->column_index(spec_name(s)));
  }

  const FeatureSchema& schema() const { return *schema_; }

  EntityRecord customer_record(const std::string& id) const { return record(*customers_, customer_cols_, id); }
  EntityRecord item_record(const std::string& id) const { return record(*items_, item_cols_, id); }

  AssembledInput assemble(const std::string& customer_id, std::span<const std::string> history,
                          bool normalize = true) const {
    std::vector<EntityRecord> items;
    const auto n = std::min(history.size(), schema_->history_length);
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) items.push_back(item_record(history[i]));
    auto out = assemble_raw(customer_record(customer_id), items, latents_.get(), *schema_, strict_);
    if (normalize) normalize_reals(*schema_, out.reals);
    return out;
  }

 private:
  static EntityRecord record(const AttributeTable& table, const std::vector<std::size_t>& cols,
                             const std::string& id) {
    const auto& row = table.row(id);
    EntityRecord r{id, {}};
    r.values.reserve(cols.size());
    for (auto c : cols) r.values.push_back(row[c]);
    return r;
  }

  std::shared_ptr<const FeatureSchema> schema_;
  std::shared_ptr<const AttributeTable> customers_;
  std::shared_ptr<const AttributeTable> items_;
  std::shared_ptr<const LatentFactors> latents_;
  bool strict_;
  std::vector<std::size_t> customer_cols_;
  std::vector<std::size_t> item_cols_;
};

}  // namespace tmrec
