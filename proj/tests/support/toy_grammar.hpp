#ifndef ADDRTAG_TESTS_TOY_GRAMMAR_HPP
#define ADDRTAG_TESTS_TOY_GRAMMAR_HPP

// Synthetic address grammar for desk-scale experiments. Three patterns share
// one vocabulary:
//   A: [GeneralDelivery] StreetNumber [Unit] StreetName+suffix [Orientation]
//      Municipality Province PostalCode
//   B: Municipality Province PostalCode StreetNumber [Unit] StreetName+suffix
//   C: Province Municipality StreetName+suffix StreetNumber PostalCode
// Street numbers and digit-style postal codes overlap lexically (3-5 digit
// strings), and a few name words appear in both the street and city pools,
// so tagging those tokens requires positional context.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "addrtag/types.hpp"

namespace toy {

using addrtag::AddressSample;
using addrtag::Tag;

inline const std::vector<std::string>& street_names() {
  static const std::vector<std::string> v = {"Baker", "Main",  "Oak",   "Elm",      "Maple",
                                             "River", "Hill",  "Stone", "York",     "Kent",
                                             "Victoria"};
  return v;
}

inline const std::vector<std::string>& street_suffixes() {
  static const std::vector<std::string> v = {"Street", "Road", "Avenue", "Lane", "Drive"};
  return v;
}

inline const std::vector<std::string>& cities() {
  // York, Kent and Victoria double as street names.
  static const std::vector<std::string> v = {"London", "Paris",  "Berlin", "Madrid",   "Oslo",
                                             "Vienna", "Prague", "York",   "Kent",     "Victoria"};
  return v;
}

inline const std::vector<std::string>& provinces() {
  static const std::vector<std::string> v = {"Ontario", "Bavaria", "Texas", "Anjou", "Skane", "Tyrol"};
  return v;
}

inline const std::vector<std::string>& unit_letters() {
  static const std::vector<std::string> v = {"A", "B", "C", "D", "E", "F"};
  return v;
}

inline const std::vector<std::string>& orientations() {
  static const std::vector<std::string> v = {"NORTH", "SOUTH", "EAST", "WEST"};
  return v;
}

inline const std::vector<std::string>& postal_mixes() {
  static const std::vector<std::string> v = {"NW1", "6XE", "K2P", "8QT", "SW9", "2LB", "E1W", "7JF"};
  return v;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::vector<AddressSample> generate(char pattern, int n, const std::string& country) {
    std::vector<AddressSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(one(pattern, country));
    return out;
  }

  AddressSample one(char pattern, const std::string& country) {
    AddressSample s;
    s.country = country;
    switch (pattern) {
      case 'A': {
        put(s, digits(), Tag::kStreetNumber);
        if (chance(0.3)) put(s, pick(unit_letters()), Tag::kUnit);
        street(s);
        if (chance(0.15)) put(s, pick(orientations()), Tag::kOrientation);
        put(s, pick(cities()), Tag::kMunicipality);
        put(s, pick(provinces()), Tag::kProvince);
        postal(s);
        break;
      }
      case 'B': {
        put(s, pick(cities()), Tag::kMunicipality);
        put(s, pick(provinces()), Tag::kProvince);
        postal(s);
        put(s, digits(), Tag::kStreetNumber);
        if (chance(0.3)) put(s, pick(unit_letters()), Tag::kUnit);
        street(s);
        break;
      }
      case 'C': {
        put(s, pick(provinces()), Tag::kProvince);
        put(s, pick(cities()), Tag::kMunicipality);
        street(s);
        put(s, digits(), Tag::kStreetNumber);
        postal(s);
        break;
      }
      default:
        throw std::logic_error("unknown toy pattern");
    }
    return s;
  }

  // Full class order of each pattern, usable as reorder-probe configuration.
  static std::vector<Tag> class_order(char pattern) {
    switch (pattern) {
      case 'A':
        return {Tag::kGeneralDelivery, Tag::kStreetNumber, Tag::kUnit,     Tag::kStreetName,
                Tag::kOrientation,     Tag::kMunicipality, Tag::kProvince, Tag::kPostalCode};
      case 'B':
        return {Tag::kMunicipality, Tag::kProvince,   Tag::kPostalCode,  Tag::kStreetNumber,
                Tag::kUnit,         Tag::kStreetName, Tag::kOrientation, Tag::kGeneralDelivery};
      case 'C':
        return {Tag::kProvince,     Tag::kMunicipality, Tag::kStreetName, Tag::kStreetNumber,
                Tag::kPostalCode,   Tag::kUnit,         Tag::kOrientation, Tag::kGeneralDelivery};
      default:
        throw std::logic_error("unknown toy pattern");
    }
  }

 private:
  void street(AddressSample& s) {
    put(s, pick(street_names()), Tag::kStreetName);
    put(s, pick(street_suffixes()), Tag::kStreetName);
  }

  void postal(AddressSample& s) {
    if (chance(0.5)) {
      put(s, digits(), Tag::kPostalCode);
    } else {
      put(s, pick(postal_mixes()), Tag::kPostalCode);
      put(s, pick(postal_mixes()), Tag::kPostalCode);
    }
  }

  static void put(AddressSample& s, const std::string& token, Tag tag) {
    s.tokens.push_back(token);
    s.tags.push_back(tag);
  }

  std::string digits() {
    int len = 3 + static_cast<int>(rng_() % 3);  // 3-5 digits
    std::string out;
    out += static_cast<char>('1' + rng_() % 9);
    for (int i = 1; i < len; ++i) out += static_cast<char>('0' + rng_() % 10);
    return out;
  }

  const std::string& pick(const std::vector<std::string>& pool) { return pool[rng_() % pool.size()]; }
  bool chance(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }

  std::mt19937_64 rng_;
};

}  // namespace toy

#endif  // ADDRTAG_TESTS_TOY_GRAMMAR_HPP
