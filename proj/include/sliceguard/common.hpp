#pragma once

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sliceguard {

// Base error for everything the toolkit throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration; the CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Seeded random source. Distributions are written out by hand so that
// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const auto wide = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Box-Muller; one value per call keeps the stream simple to reason about.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream for a named sub-task.
  Rng fork(std::uint64_t salt) { return Rng(engine_() ^ mix(salt + 0x9e3779b97f4a7c15ULL)); }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw Error("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace sliceguard
