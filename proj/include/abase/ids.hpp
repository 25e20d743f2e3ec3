#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace abase {

/// Opaque 128-bit identifier rendered as 32 lowercase hex characters.
class Id {
 public:
  Id() = default;
  explicit Id(std::string hex) : hex_(std::move(hex)) {}

  const std::string& str() const noexcept { return hex_; }
  bool empty() const noexcept { return hex_.empty(); }

  static bool well_formed(std::string_view s) noexcept;

  auto operator<=>(const Id&) const = default;

 private:
  std::string hex_;
};

/// Thread-safe id source. Seeded generators make whole sessions replayable.
class IdGenerator {
 public:
  IdGenerator();
  explicit IdGenerator(std::uint64_t seed);

  Id next();

 private:
  std::mutex mu_;
  std::mt19937_64 rng_;
};

/// UTC instant with millisecond precision.
struct Timestamp {
  std::int64_t ms = 0;

  auto operator<=>(const Timestamp&) const = default;

  std::string iso() const;
  static std::optional<Timestamp> parse(std::string_view iso);
  static Timestamp now();
};

using Clock = std::function<Timestamp()>;

Clock system_clock();
/// Deterministic clock: each call advances by `step_ms` from `origin`.
Clock stepping_clock(Timestamp origin, std::int64_t step_ms = 1);

}  // namespace abase

template <>
struct std::hash<abase::Id> {
  std::size_t operator()(const abase::Id& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
