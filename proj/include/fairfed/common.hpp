/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FAIRFED_COMMON_HPP_
#define FAIRFED_COMMON_HPP_

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fairfed {

// All recoverable failures in the library surface as this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string str_cat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << args);
  return os.str();
}

namespace log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Verbosity comes from FAIRFED_LOG (debug|info|warn|error|off); default warn.
inline Level parse_level(const char* text) {
  if (text == nullptr) return Level::kWarn;
  const std::string_view v(text);
  if (v == "debug") return Level::kDebug;
  if (v == "info") return Level::kInfo;
  if (v == "error") return Level::kError;
  if (v == "off") return Level::kOff;
  return Level::kWarn;
}

inline Level& threshold() {
  static Level level = parse_level(std::getenv("FAIRFED_LOG"));
  return level;
}

inline void set_threshold(Level level) { threshold() = level; }

inline void write(Level level, std::string_view msg) {
  if (level < threshold()) return;
  static std::mutex mu;
  static constexpr const char* kTags[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[fairfed:" << kTags[static_cast<int>(level)] << "] " << msg
            << '\n';
}

template <typename... Args>
void debug(const Args&... args) {
  if (Level::kDebug >= threshold()) write(Level::kDebug, str_cat(args...));
}
template <typename... Args>
void info(const Args&... args) {
  if (Level::kInfo >= threshold()) write(Level::kInfo, str_cat(args...));
}
template <typename... Args>
void warn(const Args&... args) {
  if (Level::kWarn >= threshold()) write(Level::kWarn, str_cat(args...));
}

}  // namespace log

// Seeded streams. Every consumer of randomness asks for its own stream keyed
// by (global seed, purpose, a, b) so that reordering work across clients or
// threads never changes which numbers a consumer sees.
enum class Stream : std::uint64_t {
  kInit = 1,
  kPartition = 2,
  kSplit = 3,
  kFairBatches = 4,
  kPrivateBatches = 5,
  kNoise = 6,
  kSelection = 7,
  kSynthetic = 8,
  kProbe = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632BE59BD9B4E019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(seed, purpose, a, b));
}

}  // namespace fairfed

#endif  // FAIRFED_COMMON_HPP_
