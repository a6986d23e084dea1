#include "addrtag/types.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "addrtag/util.hpp"

namespace addrtag {

namespace {

const std::array<std::string, kTagCount> kTagNames = {
    "StreetNumber", "StreetName",  "Unit",       "Municipality",
    "Province",     "PostalCode",  "Orientation", "GeneralDelivery",
};

}  // namespace

const std::string& tag_name(Tag t) { return kTagNames[static_cast<std::size_t>(t)]; }

Tag tag_from_index(int index) {
  if (index < 0 || index >= kTagCount) throw UnknownTagError("index " + std::to_string(index));
  return static_cast<Tag>(index);
}

Tag tag_from_name(std::string_view name) {
  for (int i = 0; i < kTagCount; ++i) {
    if (kTagNames[static_cast<std::size_t>(i)] == name) return static_cast<Tag>(i);
  }
  throw UnknownTagError(std::string(name));
}

const std::array<Tag, kTagCount>& all_tags() {
  static const std::array<Tag, kTagCount> tags = {
      Tag::kStreetNumber, Tag::kStreetName,  Tag::kUnit,        Tag::kMunicipality,
      Tag::kProvince,     Tag::kPostalCode,  Tag::kOrientation, Tag::kGeneralDelivery,
  };
  return tags;
}

bool CountrySet::is_training(std::string_view code) const {
  return std::find(training.begin(), training.end(), code) != training.end();
}

bool CountrySet::is_zero_shot(std::string_view code) const {
  return std::find(zero_shot.begin(), zero_shot.end(), code) != zero_shot.end();
}

const CountrySet& deepparse_countries() {
  static const CountrySet set = {
      // training, holdout-table row order
      {"US", "BR", "KR", "AU", "MX", "DE", "ES", "NL", "CA", "CH",
       "PL", "NO", "AT", "FI", "DK", "CZ", "IT", "FR", "GB", "RU"},
      // zero-shot, transfer-table row order
      {"BE", "SE", "AR", "IN", "RO", "SK", "HU", "JP", "IS", "VE",
       "PH", "SI", "UA", "BY", "RS", "HR", "GR", "NZ", "PT", "BG",
       "LT", "FO", "RE", "MD", "ID", "BM", "MY", "ZA", "LV", "KZ",
       "NC", "EE", "SG", "BD", "PY", "CY", "BA", "IE", "DZ", "CO",
       "UZ"},
  };
  return set;
}

std::optional<std::string> country_code_from_name(std::string_view name) {
  static const std::unordered_map<std::string, std::string> table = {
      {"United States", "US"}, {"Brazil", "BR"},         {"South Korea", "KR"},
      {"Australia", "AU"},     {"Mexico", "MX"},         {"Germany", "DE"},
      {"Spain", "ES"},         {"Netherlands", "NL"},    {"Canada", "CA"},
      {"Switzerland", "CH"},   {"Poland", "PL"},         {"Norway", "NO"},
      {"Austria", "AT"},       {"Finland", "FI"},        {"Denmark", "DK"},
      {"Czechia", "CZ"},       {"Italy", "IT"},          {"France", "FR"},
      {"UK", "GB"},            {"United Kingdom", "GB"}, {"Russia", "RU"},
      {"Belgium", "BE"},       {"Sweden", "SE"},         {"Argentina", "AR"},
      {"India", "IN"},         {"Romania", "RO"},        {"Slovakia", "SK"},
      {"Hungary", "HU"},       {"Japan", "JP"},          {"Iceland", "IS"},
      {"Venezuela", "VE"},     {"Philippines", "PH"},    {"Slovenia", "SI"},
      {"Ukraine", "UA"},       {"Belarus", "BY"},        {"Serbia", "RS"},
      {"Croatia", "HR"},       {"Greece", "GR"},         {"New Zealand", "NZ"},
      {"Portugal", "PT"},      {"Bulgaria", "BG"},       {"Lithuania", "LT"},
      {"Faroe Islands", "FO"}, {"Reunion", "RE"},        {"Réunion", "RE"},
      {"Moldova", "MD"},       {"Indonesia", "ID"},      {"Bermuda", "BM"},
      {"Malaysia", "MY"},      {"South Africa", "ZA"},   {"Latvia", "LV"},
      {"Kazakhstan", "KZ"},    {"New Caledonia", "NC"},  {"Estonia", "EE"},
      {"Singapore", "SG"},     {"Bangladesh", "BD"},     {"Paraguay", "PY"},
      {"Cyprus", "CY"},        {"Bosnia", "BA"},         {"Ireland", "IE"},
      {"Algeria", "DZ"},       {"Colombia", "CO"},       {"Uzbekistan", "UZ"},
  };
  auto it = table.find(std::string(name));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

namespace {

bool country_code_shape_ok(const std::string& code) {
  if (code == "??") return true;
  if (code.size() != 2) return false;
  return std::isupper(static_cast<unsigned char>(code[0])) && std::isupper(static_cast<unsigned char>(code[1]));
}

}  // namespace

ValidationResult validate_sample(const AddressSample& s) {
  ValidationResult r;
  if (s.tokens.empty()) r.violations.push_back("empty token sequence");
  if (s.tokens.size() != s.tags.size()) {
    r.violations.push_back("token/tag length mismatch: " + std::to_string(s.tokens.size()) + " vs " +
                           std::to_string(s.tags.size()));
  }
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.tokens[i].empty()) {
      r.violations.push_back("empty token at position " + std::to_string(i));
      break;
    }
  }
  if (!country_code_shape_ok(s.country)) r.violations.push_back("bad country code: " + s.country);
  return r;
}

ValidationResult validate_sample(const AddressSample& s, const CountrySet& countries) {
  ValidationResult r = validate_sample(s);
  if (s.country != "??" && !countries.contains(s.country)) {
    r.violations.push_back("country not in configured set: " + s.country);
  }
  return r;
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == sep) {
      out.emplace_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string Manifest::render() const {
  std::ostringstream os;
  for (const auto& [k, v] : config) os << k << " = " << v << "\n";
  for (const auto& [k, v] : info) os << "# " << k << ": " << v << "\n";
  return os.str();
}

void Manifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << render();
}

std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a(buf.str());
}

}  // namespace addrtag
