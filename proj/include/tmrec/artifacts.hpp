#pragma once

// On-disk pipeline artifacts. A prepared directory holds:
//   schema.json, factors.json (optional), universe.json,
//   train_examples.csv, test_examples.csv, eval_customers.csv,
//   manifest.json (hashes and per-file FNV-1a checksums).
// Models are sealed containers whose metadata binds them to the schema and
// universe hashes they were trained against.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmrec/detail/csv.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/detail/hash.hpp"
#include "tmrec/pipeline.hpp"

namespace tmrec {

namespace fs = std::filesystem;

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline void write_bytes(const fs::path& path, std::span<const std::byte> bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::vector<std::byte> read_bytes(const fs::path& path) {
  const auto text = read_file(path.string());
  std::vector<std::byte> out(text.size());
  std::memcpy(out.data(), text.data(), text.size());
  return out;
}

inline nlohmann::ordered_json read_json(const fs::path& path) {
  const auto text = read_file(path.string());
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline std::string join_reals(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

inline std::vector<double> split_reals(const std::string& s, std::size_t width) {
  std::vector<double> out;
  out.reserve(width);
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, "real feature"));
  if (out.size() != width) throw FormatError("real vector has " + std::to_string(out.size()) + " entries, expected " +
                                             std::to_string(width));
  return out;
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string examples_csv(std::span<const EncodedExample> examples) {
  std::ostringstream out;
  write_csv_row(out, {"customer_id", "t_dat", "article_id", "label", "bits", "reals"});
  for (const auto& e : examples) {
    write_csv_row(out, {e.customer_id, format_date(e.day), e.item_id, std::to_string(e.label), e.bits.to_hex(),
                        join_reals(e.reals)});
  }
  return out.str();
}

inline std::vector<EncodedExample> parse_examples(const fs::path& path, const FeatureSchema& schema) {
  const auto csv = read_csv(path.string());
  const auto c = csv.column("customer_id", path.string());
  const auto d = csv.column("t_dat", path.string());
  const auto a = csv.column("article_id", path.string());
  const auto l = csv.column("label", path.string());
  const auto b = csv.column("bits", path.string());
  const auto r = csv.column("reals", path.string());
  std::vector<EncodedExample> out;
  out.reserve(csv.rows.size());
  for (const auto& row : csv.rows) {
    out.push_back({row[c], parse_date(row[d]), row[a], static_cast<std::size_t>(std::stoull(row[l])),
                   BinaryFeatureVector::from_hex(row[b], schema.bit_width()),
                   split_reals(row[r], schema.real_width())});
  }
  return out;
}

inline std::string eval_csv(std::span<const EvalCustomer> customers) {
  std::ostringstream out;
  write_csv_row(out, {"customer_id", "bits", "reals", "relevant"});
  for (const auto& e : customers) {
    std::string rel;
    for (std::size_t i = 0; i < e.relevant.size(); ++i) rel += (i ? " " : "") + e.relevant[i];
    write_csv_row(out, {e.customer_id, e.bits.to_hex(), join_reals(e.reals), rel});
  }
  return out.str();
}

inline std::vector<EvalCustomer> parse_eval(const fs::path& path, const FeatureSchema& schema) {
  const auto csv = read_csv(path.string());
  const auto c = csv.column("customer_id", path.string());
  const auto b = csv.column("bits", path.string());
  const auto r = csv.column("reals", path.string());
  const auto rel = csv.column("relevant", path.string());
  std::vector<EvalCustomer> out;
  for (const auto& row : csv.rows) {
    out.push_back({row[c], BinaryFeatureVector::from_hex(row[b], schema.bit_width()),
                   split_reals(row[r], schema.real_width()), split_words(row[rel])});
  }
  return out;
}

inline std::string checksum(std::string_view text) { return hex64(fnv1a(text)); }

}  // namespace detail

inline nlohmann::ordered_json stats_to_json(const PrepareStats& s) {
  return {{"train_rows", s.train_rows},         {"test_rows", s.test_rows},
          {"train_excluded", s.train_excluded}, {"test_excluded", s.test_excluded},
          {"unknown_values", s.unknown_values}, {"latent_missing", s.latent_missing},
          {"cutoff_date", format_date(s.cutoff_day)}};
}

/// Writes every prepared artifact and the manifest; returns the manifest.
inline nlohmann::ordered_json save_prepared(const PreparedData& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> files{
      {"schema.json", detail::dump_json(to_json(data.schema))},
      {"universe.json", detail::dump_json(to_json(data.universe))},
      {"train_examples.csv", detail::examples_csv(data.train)},
      {"test_examples.csv", detail::examples_csv(data.test)},
      {"eval_customers.csv", detail::eval_csv(data.eval)},
  };
  if (data.factors) files.insert(files.begin() + 1, {"factors.json", detail::dump_json(to_json(*data.factors))});
  nlohmann::ordered_json manifest;
  manifest["format"] = "tmrec.manifest";
  manifest["version"] = 1;
  manifest["schema_hash"] = detail::hex64(schema_hash(data.schema));
  manifest["universe_hash"] = detail::hex64(data.universe.hash());
  manifest["bit_width"] = data.schema.bit_width();
  manifest["real_width"] = data.schema.real_width();
  manifest["classes"] = data.universe.size();
  manifest["stats"] = stats_to_json(data.stats);
  manifest["files"] = nlohmann::ordered_json::object();
  for (const auto& [name, text] : files) {
    detail::write_text(dir / name, text);
    manifest["files"][name] = detail::checksum(text);
  }
  detail::write_text(dir / "manifest.json", detail::dump_json(manifest));
  return manifest;
}

/// Reads a prepared directory, verifying checksums and hashes.
inline PreparedData load_prepared(const fs::path& dir, nlohmann::ordered_json* manifest_out = nullptr) {
  if (!fs::exists(dir / "manifest.json")) {
    throw DataError("'" + dir.string() + "' has no manifest.json (run prepare first)");
  }
  const auto manifest = detail::read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "tmrec.manifest" || manifest.value("version", 0) != 1) {
    throw FormatError("manifest.json is not a version-1 manifest");
  }
  for (const auto& [name, sum] : manifest.at("files").items()) {
    const auto text = detail::read_file((dir / name).string());
    if (detail::checksum(text) != sum.get<std::string>()) {
      throw ArtifactError(name + " does not match the checksum recorded in manifest.json");
    }
  }
  PreparedData data;
  data.schema = schema_from_json(detail::read_json(dir / "schema.json"));
  if (detail::hex64(schema_hash(data.schema)) != manifest.at("schema_hash").get<std::string>()) {
    throw ArtifactError("schema.json hash differs from the manifest");
  }
  data.universe = universe_from_json(detail::read_json(dir / "universe.json"));
  if (detail::hex64(data.universe.hash()) != manifest.at("universe_hash").get<std::string>()) {
    throw ArtifactError("universe.json hash differs from the manifest");
  }
  if (manifest.at("files").contains("factors.json")) {
    data.factors = std::make_shared<LatentFactors>(factors_from_json(detail::read_json(dir / "factors.json")));
  }
  data.train = detail::parse_examples(dir / "train_examples.csv", data.schema);
  data.test = detail::parse_examples(dir / "test_examples.csv", data.schema);
  data.eval = detail::parse_eval(dir / "eval_customers.csv", data.schema);
  for (const auto* set : {&data.train, &data.test}) {
    for (const auto& e : *set) {
      if (e.label >= data.universe.size() || data.universe.item(e.label) != e.item_id) {
        throw ArtifactError("example label does not match universe.json");
      }
    }
  }
  const auto& s = manifest.at("stats");
  data.stats.train_rows = s.at("train_rows").get<std::size_t>();
  data.stats.test_rows = s.at("test_rows").get<std::size_t>();
  data.stats.train_excluded = s.at("train_excluded").get<std::size_t>();
  data.stats.test_excluded = s.at("test_excluded").get<std::size_t>();
  data.stats.unknown_values = s.at("unknown_values").get<std::size_t>();
  data.stats.latent_missing = s.at("latent_missing").get<std::size_t>();
  data.stats.cutoff_day = parse_date(s.at("cutoff_date").get<std::string>());
  if (manifest_out) *manifest_out = manifest;
  return data;
}

// ---- models -------------------------------------------------------------

inline nlohmann::ordered_json model_metadata(const RecommenderModel& model, const PreparedData& data,
                                             const ModelOptions& options) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(model.kind);
  j["schema_hash"] = detail::hex64(schema_hash(data.schema));
  j["universe_hash"] = detail::hex64(data.universe.hash());
  j["num_classes"] = model.num_classes;
  j["epochs"] = options.epochs;
  j["seed"] = options.seed;
  return j;
}

inline std::vector<std::byte> serialize(const RecommenderModel& model, const nlohmann::ordered_json& metadata) {
  const auto meta = metadata.dump();
  switch (model.kind) {
    case ModelKind::tm:
      return serialize(*model.tm, meta);
    case ModelKind::mlp:
    case ModelKind::lr:
      return serialize(*model.net, meta);
    case ModelKind::popularity: {
      detail::ByteWriter w;
      w.u64(model.num_classes);
      return seal(ModelKind::popularity, meta, w.bytes());
    }
  }
  throw ConfigError("unknown model kind");
}

/// Loads a model and checks it was trained against `data`'s schema and
/// universe.
inline RecommenderModel load_model(const fs::path& path, const PreparedData& data) {
  if (!fs::exists(path)) throw DataError("model file '" + path.string() + "' not found (run train first)");
  const auto bytes = detail::read_bytes(path);
  const auto sealed = unseal(bytes);
  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(sealed.metadata);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(path.string() + ": unreadable model metadata");
  }
  if (meta.value("schema_hash", "") != detail::hex64(schema_hash(data.schema))) {
    throw ArtifactError(path.string() + " was trained against a different schema");
  }
  if (meta.value("universe_hash", "") != detail::hex64(data.universe.hash())) {
    throw ArtifactError(path.string() + " was trained against a different class universe");
  }
  RecommenderModel model;
  model.kind = sealed.kind;
  model.num_classes = data.universe.size();
  switch (sealed.kind) {
    case ModelKind::tm:
      model.tm = deserialize_tm(bytes);
      if (model.tm->num_classes() != model.num_classes || model.tm->num_features() != data.schema.bit_width()) {
        throw ArtifactError(path.string() + " dimensions do not match the prepared data");
      }
      break;
    case ModelKind::mlp:
    case ModelKind::lr:
      model.net = deserialize_network(bytes);
      if (model.net->num_classes() != model.num_classes || model.net->input_width() != data.schema.real_width()) {
        throw ArtifactError(path.string() + " dimensions do not match the prepared data");
      }
      break;
    case ModelKind::popularity: {
      detail::ByteReader r(sealed.payload);
      if (r.u64() != model.num_classes) throw ArtifactError(path.string() + " class count does not match");
      break;
    }
  }
  return model;
}

inline nlohmann::ordered_json epoch_to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  if (log.loss) j["loss"] = *log.loss;
  if (log.feedback) {
    j["examples"] = log.feedback->examples;
    j["type_i"] = log.feedback->type_i;
    j["type_ii"] = log.feedback->type_ii;
  }
  if (log.test_accuracy) j["test_accuracy"] = *log.test_accuracy;
  return j;
}

}  // namespace tmrec
