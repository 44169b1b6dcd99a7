#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lightlda {

using WordId = std::uint32_t;
using TopicId = std::uint32_t;
using DocId = std::uint64_t;

inline constexpr TopicId kNoTopic = std::numeric_limits<TopicId>::max();

/// One token of a document: its word and its current topic indicator.
/// Words and topics sit side by side so a token and its topic are read together.
struct TokenTopicPair {
  WordId word = 0;
  TopicId topic = 0;

  friend bool operator==(const TokenTopicPair&, const TokenTopicPair&) = default;
};

struct TopicCount {
  TopicId topic = 0;
  std::int32_t count = 0;

  friend bool operator==(const TopicCount&, const TopicCount&) = default;
};

/// Signed change to one word-topic count.
struct DeltaEntry {
  WordId word = 0;
  TopicId topic = 0;
  std::int32_t delta = 0;

  friend bool operator==(const DeltaEntry&, const DeltaEntry&) = default;
};

// Process exit codes used by the command-line driver.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kInvariant = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// A broken count-bookkeeping invariant (underflow, overflow, inconsistent tables).
struct InvariantViolation : Error {
  explicit InvariantViolation(const std::string& what)
      : Error(ExitCode::kInvariant, what) {}
};

/// Seeded random stream. Streams are derived from a run seed plus a tuple of
/// stream ids (iteration, block, slice, partition, ...) so every thread owns an
/// independent, reproducible generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed, {}); }
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    reseed(seed, stream);
  }

  /// Stream keys are folded into one 64-bit seed with SplitMix64 steps.
  void reseed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::uint64_t key = mix(seed ^ 0x6A09E667F3BCC909ull);
    for (auto s : stream) key = mix(key ^ mix(s + 0x9E3779B97F4A7C15ull));
    engine_.seed(key);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  using result_type = std::uint64_t;
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Little-endian byte buffer helpers shared by the block format, the model
// dump and the wire protocol.
namespace le {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw DataError("truncated input: need " + std::to_string(sizeof(T)) +
                      " bytes at offset " + std::to_string(pos_));
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace le

}  // namespace lightlda
