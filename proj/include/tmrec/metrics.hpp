#pragma once

// Ranking metrics with the Kaggle MAP@k definition: the AP normalizer is
// min(|relevant|, k).

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

template <typename Id>
struct RankedPrediction {
  std::string customer_id;
  std::vector<Id> ranked;  // best first, duplicate-free
  std::unordered_set<Id> relevant;
};

/// Average precision of the first k ranked items. An empty relevant set
/// scores 0; map_at_k skips such users instead.
template <typename Id>
double ap_at_k(const std::vector<Id>& ranked, const std::unordered_set<Id>& relevant,
               std::size_t k) {
  if (k < 1) throw RangeError("k must be >= 1");
  {
    std::unordered_set<Id> seen;
    seen.reserve(ranked.size());
    for (const auto& item : ranked) {
      if (!seen.insert(item).second) throw ValidationError("duplicate item in ranked list");
    }
  }
  if (relevant.empty()) return 0.0;
  const std::size_t depth = std::min(k, ranked.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (relevant.count(ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

struct MapReport {
  std::size_t k = 0;
  double value = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // users with no relevant items
};

/// Mean of AP@k over users with a non-empty relevant set. APs are summed in
/// sorted order so the result does not depend on user order.
template <typename Id>
MapReport map_at_k(const std::vector<RankedPrediction<Id>>& predictions, std::size_t k) {
  MapReport report;
  report.k = k;
  std::vector<double> aps;
  aps.reserve(predictions.size());
  for (const auto& p : predictions) {
    if (p.relevant.empty()) {
      ++report.skipped;
      continue;
    }
    aps.push_back(ap_at_k(p.ranked, p.relevant, k));
  }
  if (aps.empty()) throw MetricError("no users with relevant items to score");
  std::sort(aps.begin(), aps.end());
  double sum = 0.0;
  for (double ap : aps) sum += ap;
  report.scored = aps.size();
  report.value = sum / static_cast<double>(aps.size());
  return report;
}

/// The k most purchased items (ties by ascending id), recommended to everyone.
template <typename Id>
std::vector<Id> popularity_baseline(const std::vector<Id>& purchases, std::size_t k) {
  if (purchases.empty()) throw DataError("popularity baseline needs a non-empty training log");
  std::map<Id, std::size_t> counts;
  for (const auto& item : purchases) ++counts[item];
  std::vector<std::pair<Id, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<Id> out;
  for (std::size_t i = 0; i < std::min(k, ordered.size()); ++i) out.push_back(ordered[i].first);
  return out;
}

/// One row of a model-comparison table.
struct MetricRow {
  std::string model;
  std::vector<MapReport> maps;
  std::optional<double> accuracy;
  std::size_t excluded = 0;  // test rows outside the class universe
};

inline nlohmann::ordered_json to_json(const MetricRow& row) {
  nlohmann::ordered_json j;
  j["model"] = row.model;
  auto& maps = j["map"];
  maps = nlohmann::ordered_json::array();
  for (const auto& m : row.maps) {
    maps.push_back({{"k", m.k}, {"value", m.value}, {"scored", m.scored}, {"skipped", m.skipped}});
  }
  if (row.accuracy) j["accuracy"] = *row.accuracy;
  j["excluded_outside_universe"] = row.excluded;
  return j;
}

inline MetricRow metric_row_from_json(const nlohmann::ordered_json& j) {
  MetricRow row;
  row.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("map")) {
    row.maps.push_back({m.at("k").get<std::size_t>(), m.at("value").get<double>(),
                        m.at("scored").get<std::size_t>(), m.at("skipped").get<std::size_t>()});
  }
  if (j.contains("accuracy")) row.accuracy = j.at("accuracy").get<double>();
  row.excluded = j.value("excluded_outside_universe", std::size_t{0});
  return row;
}

/// Aligned text table: Model | MAP@k... | Accuracy.
inline std::string render_metric_table(const std::vector<MetricRow>& rows) {
  std::vector<std::size_t> ks;
  for (const auto& r : rows) {
    for (const auto& m : r.maps) {
      if (std::find(ks.begin(), ks.end(), m.k) == ks.end()) ks.push_back(m.k);
    }
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Model"};
  for (auto k : ks) header.push_back("MAP@" + std::to_string(k));
  header.push_back("Accuracy");
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.model};
    for (auto k : ks) {
      auto it = std::find_if(r.maps.begin(), r.maps.end(), [&](const auto& m) { return m.k == k; });
      line.push_back(it == r.maps.end() ? "-" : detail::format_fixed(it->value, 4));
    }
    line.push_back(r.accuracy ? detail::format_fixed(*r.accuracy, 4) : "-");
    cells.push_back(line);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out << " | ";
      const auto& s = cells[r][c];
      if (c == 0) {
        out << s << std::string(widths[c] - s.size(), ' ');
      } else {
        out << std::string(widths[c] - s.size(), ' ') << s;
      }
    }
    out << '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c) {
        if (c) out << "-+-";
        out << std::string(widths[c], '-');
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace tmrec
