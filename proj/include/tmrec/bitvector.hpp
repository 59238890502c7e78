#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmrec/error.hpp"

namespace tmrec {

/// Fixed-width packed bit vector; the Tsetlin machine's only input type.
/// Bits past size() in the last word are always zero.
class BinaryFeatureVector {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  BinaryFeatureVector() = default;
  explicit BinaryFeatureVector(std::size_t size) : size_(size), words_(word_count(size), 0) {}
  BinaryFeatureVector(std::initializer_list<int> bits) : BinaryFeatureVector(bits.size()) {
    std::size_t i = 0;
    for (int b : bits) set(i++, b != 0);
  }

  static BinaryFeatureVector from_bits(std::span<const std::uint8_t> bits) {
    BinaryFeatureVector v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) v.set(i, bits[i] != 0);
    return v;
  }

  static constexpr std::size_t word_count(std::size_t bits) {
    return (bits + kWordBits - 1) / kWordBits;
  }

  std::size_t size() const noexcept { return size_; }
  std::span<const Word> words() const noexcept { return words_; }

  bool test(std::size_t i) const { return (words_[i / kWordBits] >> (i % kWordBits)) & 1U; }
  void set(std::size_t i, bool value = true) {
    const Word mask = Word{1} << (i % kWordBits);
    if (value) {
      words_[i / kWordBits] |= mask;
    } else {
      words_[i / kWordBits] &= ~mask;
    }
  }
  void flip(std::size_t i) { words_[i / kWordBits] ^= Word{1} << (i % kWordBits); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  /// Appends `other` after the current last bit.
  void append(const BinaryFeatureVector& other) {
    const std::size_t base = size_;
    resize(size_ + other.size_);
    for (std::size_t i = 0; i < other.size_; ++i) {
      if (other.test(i)) set(base + i);
    }
  }

  void resize(std::size_t size) {
    size_ = size;
    words_.resize(word_count(size), 0);
    if (size_ % kWordBits != 0) {
      words_.back() &= (Word{1} << (size_ % kWordBits)) - 1;
    }
  }

  /// Lowercase hex, four bits per character, bit 0 in the low nibble of
  /// the first character.
  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out((size_ + 3) / 4, '0');
    for (std::size_t c = 0; c < out.size(); ++c) {
      const std::size_t bit = c * 4;
      const unsigned nibble =
          static_cast<unsigned>((words_[bit / kWordBits] >> (bit % kWordBits)) & 0xF);
      out[c] = kDigits[nibble];
    }
    return out;
  }

  static BinaryFeatureVector from_hex(std::string_view hex, std::size_t size) {
    if (hex.size() != (size + 3) / 4) {
      throw FormatError("hex bit string has " + std::to_string(hex.size()) +
                        " digits, expected " + std::to_string((size + 3) / 4));
    }
    BinaryFeatureVector v(size);
    for (std::size_t c = 0; c < hex.size(); ++c) {
      const char ch = hex[c];
      unsigned nibble = 0;
      if (ch >= '0' && ch <= '9') {
        nibble = static_cast<unsigned>(ch - '0');
      } else if (ch >= 'a' && ch <= 'f') {
        nibble = static_cast<unsigned>(ch - 'a' + 10);
      } else {
        throw FormatError("invalid hex digit in bit string");
      }
      for (unsigned b = 0; b < 4; ++b) {
        const std::size_t i = c * 4 + b;
        if ((nibble >> b) & 1U) {
          if (i >= size) throw FormatError("hex bit string sets bits past its width");
          v.set(i);
        }
      }
    }
    return v;
  }

  friend bool operator==(const BinaryFeatureVector&, const BinaryFeatureVector&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<Word> words_;
};

}  // namespace tmrec
