#pragma once

// Transaction/customer/article tables in the H&M Kaggle layout, the
// temporal train/test split and popularity-ranked item subsets.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tmrec/detail/csv.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

/// Days since 1970-01-01.
using Day = int;

inline Day parse_date(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw DataError("cannot parse date '" + s + "' (expected YYYY-MM-DD)");
  }
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + s + "'");
  return static_cast<Day>(sys_days{ymd}.time_since_epoch().count());
}

inline std::string format_date(Day day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

struct Transaction {
  Day day = 0;
  std::string customer_id;
  std::string item_id;
  double price = 0.0;
  std::string channel;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

/// Id-keyed attribute table with string cells (customers.csv, articles.csv).
class AttributeTable {
 public:
  AttributeTable() = default;
  AttributeTable(std::string id_column, std::vector<std::string> columns)
      : id_column_(std::move(id_column)), columns_(std::move(columns)) {}

  const std::string& id_column() const { return id_column_; }
  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  /// Appends a row; values follow columns() order.
  void add(std::string id, std::vector<std::string> values) {
    if (values.size() != columns_.size()) {
      throw DataError("row for '" + id + "' has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(columns_.size()));
    }
    if (!index_.emplace(id, ids_.size()).second) {
      throw IntegrityError("duplicate id '" + id + "' in " + id_column_ + " table");
    }
    ids_.push_back(std::move(id));
    rows_.push_back(std::move(values));
  }

  std::size_t column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i] == column) return i;
    }
    throw SchemaError("table keyed by '" + id_column_ + "' has no column '" +
                      std::string(column) + "'");
  }
  bool has_column(std::string_view column) const {
    return std::find(columns_.begin(), columns_.end(), column) != columns_.end();
  }

  const std::string& value(const std::string& id, std::size_t column) const {
    return rows_.at(row_of(id)).at(column);
  }
  const std::vector<std::string>& row(const std::string& id) const { return rows_.at(row_of(id)); }
  std::size_t row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw IntegrityError("unknown id '" + id + "'");
    return it->second;
  }

  /// Copy keeping only ids accepted by `keep`, in original order.
  template <typename Pred>
  AttributeTable filtered(Pred keep) const {
    AttributeTable out(id_column_, columns_);
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      if (keep(ids_[r])) out.add(ids_[r], rows_[r]);
    }
    return out;
  }

 private:
  std::string id_column_;
  std::vector<std::string> columns_;
  std::vector<std::string> ids_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Purchases plus the customer and article tables they reference. Tables
/// are shared between logs derived from the same source.
struct InteractionLog {
  std::vector<Transaction> transactions;
  std::shared_ptr<const AttributeTable> customers;
  std::shared_ptr<const AttributeTable> items;

  std::pair<Day, Day> date_range() const {
    if (transactions.empty()) throw DataError("empty interaction log");
    auto [lo, hi] = std::minmax_element(
        transactions.begin(), transactions.end(),
        [](const Transaction& a, const Transaction& b) { return a.day < b.day; });
    return {lo->day, hi->day};
  }
};

/// Throws IntegrityError listing up to ten dangling ids.
inline void check_integrity(const InteractionLog& log) {
  if (!log.customers || !log.items) throw DataError("interaction log is missing its tables");
  std::vector<std::string> offenders;
  std::unordered_set<std::string> reported;
  std::size_t dangling = 0;
  for (const auto& t : log.transactions) {
    for (auto [table, id, kind] :
         {std::tuple{log.customers.get(), &t.customer_id, "customer"},
          std::tuple{log.items.get(), &t.item_id, "article"}}) {
      if (table->contains(*id)) continue;
      ++dangling;
      const std::string label = std::string(kind) + " '" + *id + "'";
      if (offenders.size() < 10 && reported.insert(label).second) offenders.push_back(label);
    }
  }
  if (dangling) {
    std::string msg = std::to_string(dangling) + " dangling reference(s):";
    for (const auto& o : offenders) msg += " " + o;
    throw IntegrityError(msg);
  }
}

struct TablePaths {
  std::string transactions;
  std::string customers;
  std::string articles;
};

struct LoadReport {
  std::size_t transactions = 0;
  std::size_t customers = 0;
  std::size_t articles = 0;
};

namespace detail {

inline std::shared_ptr<AttributeTable> table_from_csv(const CsvTable& csv, std::string_view id_column,
                                                      const std::string& source) {
  const auto id_col = csv.column(id_column, source);
  std::vector<std::string> columns;
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (i != id_col) columns.push_back(csv.header[i]);
  }
  auto table = std::make_shared<AttributeTable>(std::string(id_column), columns);
  for (const auto& row : csv.rows) {
    std::vector<std::string> values;
    values.reserve(columns.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i != id_col) values.push_back(row[i]);
    }
    table->add(row[id_col], std::move(values));
  }
  return table;
}

}  // namespace detail

/// Reads transactions (t_dat, customer_id, article_id, price,
/// sales_channel_id), customers (customer_id, ...) and articles
/// (article_id, ...).
inline InteractionLog load_tables(const TablePaths& paths, LoadReport* report = nullptr) {
  const auto tx = detail::read_csv(paths.transactions);
  const auto date_col = tx.column("t_dat", paths.transactions);
  const auto cust_col = tx.column("customer_id", paths.transactions);
  const auto item_col = tx.column("article_id", paths.transactions);
  const auto price_col = tx.column("price", paths.transactions);
  const auto channel_col = tx.column("sales_channel_id", paths.transactions);
  if (tx.rows.empty()) throw DataError(paths.transactions + ": no transactions");

  InteractionLog log;
  log.customers = detail::table_from_csv(detail::read_csv(paths.customers), "customer_id",
                                         paths.customers);
  log.items = detail::table_from_csv(detail::read_csv(paths.articles), "article_id",
                                     paths.articles);
  log.transactions.reserve(tx.rows.size());
  for (const auto& row : tx.rows) {
    log.transactions.push_back({parse_date(row[date_col]), row[cust_col], row[item_col],
                                detail::parse_double(row[price_col], "price"), row[channel_col]});
  }
  check_integrity(log);
  if (report) {
    *report = {log.transactions.size(), log.customers->size(), log.items->size()};
  }
  return log;
}

/// Writes the three tables in the same layout load_tables reads.
inline void write_tables(const InteractionLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "transactions.csv", std::ios::binary);
    detail::write_csv_row(out, {"t_dat", "customer_id", "article_id", "price", "sales_channel_id"});
    for (const auto& t : log.transactions) {
      detail::write_csv_row(out, {format_date(t.day), t.customer_id, t.item_id,
                                  detail::format_double(t.price), t.channel});
    }
  }
  auto write_table = [&](const AttributeTable& table, const char* file) {
    std::ofstream out(dir / file, std::ios::binary);
    std::vector<std::string> header{table.id_column()};
    header.insert(header.end(), table.columns().begin(), table.columns().end());
    detail::write_csv_row(out, header);
    for (const auto& id : table.ids()) {
      std::vector<std::string> row{id};
      const auto& values = table.row(id);
      row.insert(row.end(), values.begin(), values.end());
      detail::write_csv_row(out, row);
    }
  };
  write_table(*log.customers, "customers.csv");
  write_table(*log.items, "articles.csv");
}

struct SplitDataset {
  InteractionLog train;
  InteractionLog test;
  Day cutoff_day = 0;         // train holds days <= cutoff_day
  bool all_test = false;      // cutoff covers the whole date span
};

/// Rows dated strictly after (max_date - cutoff_days) form the test split.
inline SplitDataset temporal_split(const InteractionLog& log, int cutoff_days = 30) {
  if (cutoff_days < 0) throw ConfigError("cutoff_days must be >= 0");
  const Day last = log.date_range().second;
  SplitDataset split;
  split.cutoff_day = last - cutoff_days;
  split.train.customers = split.test.customers = log.customers;
  split.train.items = split.test.items = log.items;
  for (const auto& t : log.transactions) {
    (t.day > split.cutoff_day ? split.test : split.train).transactions.push_back(t);
  }
  split.all_test = split.train.transactions.empty();
  return split;
}

/// Item ids ordered by purchase count (descending), ties by ascending id.
inline std::vector<std::string> items_by_popularity(const InteractionLog& log) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : log.transactions) ++counts[t.item_id];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ids;
  ids.reserve(ordered.size());
  for (auto& [id, n] : ordered) ids.push_back(id);
  return ids;
}

/// Keeps transactions of the k most purchased items; customers and
/// articles left without transactions are dropped from the tables.
inline InteractionLog topk_subset(const InteractionLog& log, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  auto ranked = items_by_popularity(log);
  if (ranked.size() > k) ranked.resize(k);
  const std::unordered_set<std::string> keep(ranked.begin(), ranked.end());
  InteractionLog out;
  std::unordered_set<std::string> customers;
  for (const auto& t : log.transactions) {
    if (!keep.count(t.item_id)) continue;
    out.transactions.push_back(t);
    customers.insert(t.customer_id);
  }
  out.customers = std::make_shared<AttributeTable>(
      log.customers->filtered([&](const std::string& id) { return customers.count(id) != 0; }));
  out.items = std::make_shared<AttributeTable>(
      log.items->filtered([&](const std::string& id) { return keep.count(id) != 0; }));
  return out;
}

}  // namespace tmrec
