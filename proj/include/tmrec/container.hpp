#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmrec/detail/binio.hpp"
#include "tmrec/detail/hash.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

/// Model kinds that share the versioned container. Values are on-disk tags.
enum class ModelKind : std::uint8_t { tm = 1, mlp = 2, lr = 3, popularity = 4 };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::tm: return "tm";
    case ModelKind::mlp: return "mlp";
    case ModelKind::lr: return "lr";
    case ModelKind::popularity: return "popularity";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "tm") return ModelKind::tm;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "lr") return ModelKind::lr;
  if (name == "popularity") return ModelKind::popularity;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

inline constexpr std::array<char, 6> kContainerMagic = {'T', 'M', 'R', 'E', 'C', 'M'};
inline constexpr std::uint16_t kContainerVersion = 1;

/// Container layout (little-endian):
///   magic "TMRECM" | u16 version | u8 kind | u64 len + metadata bytes |
///   u64 len + payload bytes | u64 FNV-1a of all preceding bytes
inline std::vector<std::byte> seal(ModelKind kind, std::string_view metadata,
                                   std::span<const std::byte> payload) {
  detail::ByteWriter w;
  for (char c : kContainerMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kContainerVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.str(metadata);
  w.u64(payload.size());
  w.raw(payload);
  const auto checksum = detail::fnv1a(w.bytes());
  w.u64(checksum);
  return std::move(w).take();
}

struct Unsealed {
  ModelKind kind;
  std::string metadata;
  std::span<const std::byte> payload;  // views into the sealed buffer
};

inline Unsealed unseal(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  for (char c : kContainerMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("not a model container");
  }
  const auto version = r.u16();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto tag = r.u8();
  if (tag < 1 || tag > 4) throw FormatError("unknown model kind tag " + std::to_string(tag));
  Unsealed out{static_cast<ModelKind>(tag), r.str(), {}};
  const auto payload_size = r.u64();
  if (payload_size > r.remaining()) throw FormatError("truncated payload");
  out.payload = r.take(static_cast<std::size_t>(payload_size));
  const auto body_size = r.position();
  const auto checksum = r.u64();
  if (r.remaining() != 0) throw FormatError("trailing bytes after container");
  if (checksum != detail::fnv1a(bytes.first(body_size))) throw FormatError("checksum mismatch");
  return out;
}

inline Unsealed unseal_expect(std::span<const std::byte> bytes, ModelKind expected) {
  auto out = unseal(bytes);
  if (out.kind != expected) {
    throw FormatError("expected a " + to_string(expected) + " model, found " +
                      to_string(out.kind));
  }
  return out;
}

}  // namespace tmrec
