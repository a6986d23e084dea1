#ifndef ADDRTAG_UTIL_HPP
#define ADDRTAG_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace addrtag {

// FNV-1a, used for dataset/config fingerprints in manifests.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// splitmix64 step, used to derive independent seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Rounds x to two decimals with ties going to the even hundredth and renders
// it fixed-point. Report files pin this exact formatting.
inline std::string format_fixed2(double x) {
  double scaled = x * 100.0;
  // remainder(y, 1) subtracts the nearest integer with ties-to-even.
  long long units = static_cast<long long>(std::llround(scaled - std::remainder(scaled, 1.0)));
  bool neg = units < 0;
  if (neg) units = -units;
  std::string out = neg ? "-" : "";
  out += std::to_string(units / 100);
  out += '.';
  long long frac = units % 100;
  if (frac < 10) out += '0';
  out += std::to_string(frac);
  return out;
}

std::vector<std::string> split_ws(std::string_view text);
std::vector<std::string> split_on(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Manifest files are plain `key = value` lines (loadable back through the
// CLI's --config) with informational entries carried as `# key: value`
// comments.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::string>> info;

  void set(std::string key, std::string value) { config.emplace_back(std::move(key), std::move(value)); }
  void note(std::string key, std::string value) { info.emplace_back(std::move(key), std::move(value)); }
  std::string render() const;
  void write(const std::string& path) const;
};

std::uint64_t file_fingerprint(const std::string& path);

}  // namespace addrtag

#endif  // ADDRTAG_UTIL_HPP
