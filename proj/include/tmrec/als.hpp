#pragma once

// Implicit-feedback alternating least squares (confidence-weighted):
//   minimize  sum_ui c_ui (p_ui - x_u . y_i)^2 + lambda (|X|^2 + |Y|^2)
// with p_ui = 1 for observed pairs, c_ui = 1 + alpha * count(u, i).

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tmrec/dataset.hpp"
#include "tmrec/detail/parallel.hpp"
#include "tmrec/detail/random.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

struct ALSConfig {
  std::size_t rank = 16;
  double regularization = 0.01;
  double confidence_alpha = 40.0;
  std::size_t sweeps = 15;
  std::uint64_t seed = 0;

  void validate() const {
    if (rank < 1) throw ConfigError("ALS rank must be >= 1");
    if (!(regularization > 0.0)) throw ConfigError("ALS regularization must be > 0");
    if (!(confidence_alpha >= 0.0)) throw ConfigError("ALS confidence_alpha must be >= 0");
    if (sweeps < 1) throw ConfigError("ALS sweeps must be >= 1");
  }
};

/// Purchase counts indexed both by user and by item. Ids are sorted so the
/// row order is a function of the id set alone.
class ImplicitFeedback {
 public:
  struct Entry {
    std::size_t index;  // item index in by_user(), user index in by_item()
    double count;
  };

  static ImplicitFeedback from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
    if (pairs.empty()) throw DataError("ALS needs at least one interaction");
    std::map<std::pair<std::string, std::string>, double> counts;
    std::map<std::string, std::size_t> users, items;
    for (const auto& [u, i] : pairs) {
      counts[{u, i}] += 1.0;
      users.emplace(u, 0);
      items.emplace(i, 0);
    }
    ImplicitFeedback fb;
    for (auto& [id, idx] : users) {
      idx = fb.user_ids_.size();
      fb.user_ids_.push_back(id);
    }
    for (auto& [id, idx] : items) {
      idx = fb.item_ids_.size();
      fb.item_ids_.push_back(id);
    }
    fb.by_user_.resize(users.size());
    fb.by_item_.resize(items.size());
    for (const auto& [key, n] : counts) {
      const auto u = users[key.first];
      const auto i = items[key.second];
      fb.by_user_[u].push_back({i, n});
      fb.by_item_[i].push_back({u, n});
    }
    return fb;
  }

  static ImplicitFeedback from_log(const InteractionLog& log) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(log.transactions.size());
    for (const auto& t : log.transactions) pairs.emplace_back(t.customer_id, t.item_id);
    return from_pairs(pairs);
  }

  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<Entry>& by_user(std::size_t u) const { return by_user_[u]; }
  const std::vector<Entry>& by_item(std::size_t i) const { return by_item_[i]; }

 private:
  std::vector<std::string> user_ids_, item_ids_;
  std::vector<std::vector<Entry>> by_user_, by_item_;
};

/// Row-per-id factor matrices. Ids absent from training have no row.
struct LatentFactors {
  Eigen::MatrixXd user_factors;  // users x rank
  Eigen::MatrixXd item_factors;  // items x rank
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  ALSConfig config;

  std::size_t rank() const { return static_cast<std::size_t>(user_factors.cols()); }

  void reindex() {
    user_index_.clear();
    item_index_.clear();
    for (std::size_t i = 0; i < user_ids.size(); ++i) user_index_.emplace(user_ids[i], i);
    for (std::size_t i = 0; i < item_ids.size(); ++i) item_index_.emplace(item_ids[i], i);
  }

  std::optional<std::size_t> user_row(const std::string& id) const {
    auto it = user_index_.find(id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> item_row(const std::string& id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Factor row, or the zero vector for a cold-start id.
  Eigen::VectorXd user_or_zero(const std::string& id, bool* found = nullptr) const {
    const auto row = user_row(id);
    if (found) *found = row.has_value();
    return row ? Eigen::VectorXd(user_factors.row(static_cast<Eigen::Index>(*row)).transpose())
               : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rank()));
  }
  Eigen::VectorXd item_or_zero(const std::string& id, bool* found = nullptr) const {
    const auto row = item_row(id);
    if (found) *found = row.has_value();
    return row ? Eigen::VectorXd(item_factors.row(static_cast<Eigen::Index>(*row)).transpose())
               : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rank()));
  }

 private:
  std::unordered_map<std::string, std::size_t> user_index_, item_index_;
};

/// Loss value via the Gramian expansion:
///   sum_all s^2 = <X^T X, Y^T Y>_F, corrected on observed pairs.
inline double objective(const ImplicitFeedback& data, const LatentFactors& f,
                        const ALSConfig& config) {
  if (static_cast<std::size_t>(f.user_factors.rows()) != data.num_users() ||
      static_cast<std::size_t>(f.item_factors.rows()) != data.num_items() ||
      f.user_factors.cols() != f.item_factors.cols()) {
    throw DimensionError("factor matrices do not match the interaction index");
  }
  const Eigen::MatrixXd gx = f.user_factors.transpose() * f.user_factors;
  const Eigen::MatrixXd gy = f.item_factors.transpose() * f.item_factors;
  double loss = gx.cwiseProduct(gy).sum();
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    for (const auto& e : data.by_user(u)) {
      const double s = f.user_factors.row(static_cast<Eigen::Index>(u))
                           .dot(f.item_factors.row(static_cast<Eigen::Index>(e.index)));
      const double c = 1.0 + config.confidence_alpha * e.count;
      loss += c * (1.0 - s) * (1.0 - s) - s * s;
    }
  }
  loss += config.regularization * (f.user_factors.squaredNorm() + f.item_factors.squaredNorm());
  return loss;
}

namespace detail {

// Solves every row of `solve` against the fixed factors `fixed`:
//   (F^T F + F^T (C_r - I) F + lambda I) x_r = F^T C_r p_r
inline void als_half_sweep(Eigen::MatrixXd& solve, const Eigen::MatrixXd& fixed,
                           const std::vector<std::vector<ImplicitFeedback::Entry>>& rows,
                           const ALSConfig& config, unsigned threads) {
  const auto rank = static_cast<Eigen::Index>(config.rank);
  Eigen::MatrixXd base = fixed.transpose() * fixed;
  base.diagonal().array() += config.regularization;
  parallel_for(rows.size(), threads, [&](std::size_t r) {
    Eigen::MatrixXd a = base;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rank);
    for (const auto& e : rows[r]) {
      const auto y = fixed.row(static_cast<Eigen::Index>(e.index)).transpose();
      const double c = 1.0 + config.confidence_alpha * e.count;
      a.noalias() += (c - 1.0) * y * y.transpose();
      b.noalias() += c * y;
    }
    solve.row(static_cast<Eigen::Index>(r)) = a.ldlt().solve(b).transpose();
  });
}

inline std::vector<std::vector<ImplicitFeedback::Entry>> user_rows(const ImplicitFeedback& d) {
  std::vector<std::vector<ImplicitFeedback::Entry>> rows(d.num_users());
  for (std::size_t u = 0; u < d.num_users(); ++u) rows[u] = d.by_user(u);
  return rows;
}

inline std::vector<std::vector<ImplicitFeedback::Entry>> item_rows(const ImplicitFeedback& d) {
  std::vector<std::vector<ImplicitFeedback::Entry>> rows(d.num_items());
  for (std::size_t i = 0; i < d.num_items(); ++i) rows[i] = d.by_item(i);
  return rows;
}

}  // namespace detail

/// Factors start uniform in [0, 0.1]. Each sweep solves all user rows, then
/// all item rows, exactly. `trace`, when given, receives the objective after
/// initialization and after every sweep.
inline LatentFactors fit_als(const ImplicitFeedback& data, const ALSConfig& config,
                             std::vector<double>* trace = nullptr, unsigned threads = 1) {
  config.validate();
  LatentFactors f;
  f.config = config;
  f.user_ids = data.user_ids();
  f.item_ids = data.item_ids();
  const auto rank = static_cast<Eigen::Index>(config.rank);
  f.user_factors.resize(static_cast<Eigen::Index>(data.num_users()), rank);
  f.item_factors.resize(static_cast<Eigen::Index>(data.num_items()), rank);
  auto rng = detail::derive_rng(config.seed, 0x616c73);
  for (auto* m : {&f.user_factors, &f.item_factors}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = 0.1 * detail::uniform01(rng);
    }
  }
  if (trace) {
    trace->clear();
    trace->push_back(objective(data, f, config));
  }
  const auto users = detail::user_rows(data);
  const auto items = detail::item_rows(data);
  for (std::size_t s = 0; s < config.sweeps; ++s) {
    detail::als_half_sweep(f.user_factors, f.item_factors, users, config, threads);
    detail::als_half_sweep(f.item_factors, f.user_factors, items, config, threads);
    if (trace) trace->push_back(objective(data, f, config));
  }
  if (!f.user_factors.allFinite() || !f.item_factors.allFinite()) {
    throw DataError("ALS produced non-finite factors");
  }
  f.reindex();
  return f;
}

inline LatentFactors fit_als(const InteractionLog& train, const ALSConfig& config,
                             std::vector<double>* trace = nullptr, unsigned threads = 1) {
  return fit_als(ImplicitFeedback::from_log(train), config, trace, threads);
}

inline nlohmann::ordered_json to_json(const LatentFactors& f) {
  nlohmann::ordered_json j;
  j["format"] = "tmrec.factors";
  j["version"] = 1;
  j["rank"] = f.rank();
  j["config"] = {{"rank", f.config.rank},
                 {"regularization", f.config.regularization},
                 {"confidence_alpha", f.config.confidence_alpha},
                 {"sweeps", f.config.sweeps},
                 {"seed", f.config.seed}};
  auto rows = [](const Eigen::MatrixXd& m, const std::vector<std::string>& ids) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      std::vector<double> v(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(static_cast<Eigen::Index>(r), c);
      out.push_back({{"id", ids[r]}, {"factors", v}});
    }
    return out;
  };
  j["users"] = rows(f.user_factors, f.user_ids);
  j["items"] = rows(f.item_factors, f.item_ids);
  return j;
}

inline LatentFactors factors_from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "tmrec.factors" || j.value("version", 0) != 1) {
    throw FormatError("not a version-1 factors document");
  }
  LatentFactors f;
  const auto& c = j.at("config");
  f.config.rank = c.at("rank").get<std::size_t>();
  f.config.regularization = c.at("regularization").get<double>();
  f.config.confidence_alpha = c.at("confidence_alpha").get<double>();
  f.config.sweeps = c.at("sweeps").get<std::size_t>();
  f.config.seed = c.at("seed").get<std::uint64_t>();
  const auto rank = j.at("rank").get<Eigen::Index>();
  auto load = [&](const nlohmann::ordered_json& rows, Eigen::MatrixXd& m, std::vector<std::string>& ids) {
    m.resize(static_cast<Eigen::Index>(rows.size()), rank);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ids.push_back(rows[r].at("id").get<std::string>());
      const auto v = rows[r].at("factors").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != rank) throw FormatError("factor row has wrong rank");
      for (Eigen::Index k = 0; k < rank; ++k) m(static_cast<Eigen::Index>(r), k) = v[static_cast<std::size_t>(k)];
    }
  };
  load(j.at("users"), f.user_factors, f.user_ids);
  load(j.at("items"), f.item_factors, f.item_ids);
  f.reindex();
  return f;
}

}  // namespace tmrec
