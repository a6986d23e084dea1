#ifndef ADDRTAG_TYPES_HPP
#define ADDRTAG_TYPES_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace addrtag {

// Errors that stem from user-supplied data or files. The CLI maps these to
// exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Errors raised by the model/runtime layer (exit code 3).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownTagError : DataError {
  explicit UnknownTagError(const std::string& name) : DataError("unknown tag name: " + name) {}
};

struct MalformedRecordError : DataError {
  long line_no;
  MalformedRecordError(long line, const std::string& why)
      : DataError("malformed record at line " + std::to_string(line) + ": " + why), line_no(line) {}
};

struct UnknownCountryError : DataError {
  explicit UnknownCountryError(const std::string& code) : DataError("country not in configured set: " + code) {}
};

struct CannotDropError : DataError {
  explicit CannotDropError(const std::string& why) : DataError("cannot make incomplete variant: " + why) {}
};

struct InsufficientDataError : DataError {
  std::string country;
  InsufficientDataError(std::string code, long needed, long have)
      : DataError("insufficient eligible samples for " + code + ": need " + std::to_string(needed) +
                  ", have " + std::to_string(have)),
        country(std::move(code)) {}
};

struct PatternMismatchError : DataError {
  explicit PatternMismatchError(const std::string& why) : DataError("pattern mismatch: " + why) {}
};

struct BadFormatError : DataError {
  explicit BadFormatError(const std::string& why) : DataError("bad file format: " + why) {}
};

struct DimensionMismatchError : DataError {
  explicit DimensionMismatchError(const std::string& why) : DataError("dimension mismatch: " + why) {}
};

struct CorruptFileError : DataError {
  explicit CorruptFileError(const std::string& why) : DataError("corrupt file: " + why) {}
};

struct CountryNotAllowedError : DataError {
  explicit CountryNotAllowedError(const std::string& why) : DataError("country not allowed: " + why) {}
};

struct LengthMismatchError : DataError {
  explicit LengthMismatchError(const std::string& why) : DataError("length mismatch: " + why) {}
};

struct EmptyBatchError : DataError {
  explicit EmptyBatchError(const std::string& why) : DataError("empty batch: " + why) {}
};

struct ProviderUnavailableError : ModelError {
  explicit ProviderUnavailableError(const std::string& why) : ModelError("embedding provider unavailable: " + why) {}
};

struct NonFiniteError : ModelError {
  explicit NonFiniteError(const std::string& where) : ModelError("non-finite values in " + where) {}
};

struct MissingGoldError : ModelError {
  explicit MissingGoldError(const std::string& why) : ModelError("missing gold tags: " + why) {}
};

struct EmptyInputError : ModelError {
  explicit EmptyInputError(const std::string& why) : ModelError("empty input: " + why) {}
};

struct TooFewDomainsError : ModelError {
  explicit TooFewDomainsError(const std::string& why) : ModelError("too few domains: " + why) {}
};

struct ManifestMismatchError : ModelError {
  explicit ManifestMismatchError(const std::string& why) : ModelError("manifest mismatch: " + why) {}
};

// The eight address component tags. Index order is fixed and stable; it is
// part of every serialized artifact (datasets, checkpoints, reports).
enum class Tag : std::uint8_t {
  kStreetNumber = 0,
  kStreetName = 1,
  kUnit = 2,
  kMunicipality = 3,
  kProvince = 4,
  kPostalCode = 5,
  kOrientation = 6,
  kGeneralDelivery = 7,
};

inline constexpr int kTagCount = 8;

constexpr int tag_index(Tag t) { return static_cast<int>(t); }

const std::string& tag_name(Tag t);
Tag tag_from_index(int index);

// Case-sensitive exact match; throws UnknownTagError otherwise.
Tag tag_from_name(std::string_view name);

const std::array<Tag, kTagCount>& all_tags();

// Tag label space used by the model: the 8 tags plus BOS and PAD rows.
// PAD exists purely for batching; loss and accuracy always mask it out.
struct TagVocabulary {
  std::array<Tag, kTagCount> tags = all_tags();
  int bos_index = kTagCount;      // 8
  int pad_index = kTagCount + 1;  // 9

  int size() const { return kTagCount + 2; }
};

// One tokenized address with its gold tag sequence.
struct AddressSample {
  std::vector<std::string> tokens;
  std::vector<Tag> tags;
  std::string country;  // ISO-3166 alpha-2, or "??" for ad-hoc parse input

  bool operator==(const AddressSample&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// The 20 training countries and 41 zero-shot countries.
struct CountrySet {
  std::vector<std::string> training;
  std::vector<std::string> zero_shot;

  bool is_training(std::string_view code) const;
  bool is_zero_shot(std::string_view code) const;
  bool contains(std::string_view code) const { return is_training(code) || is_zero_shot(code); }
};

// The deepparse country split (20 training + 41 zero-shot).
const CountrySet& deepparse_countries();

// English country name -> alpha-2 code for the 61 configured countries.
std::optional<std::string> country_code_from_name(std::string_view name);

// Structural checks only: token/tag alignment, non-empty sequence, country
// code shape (two uppercase letters or "??").
ValidationResult validate_sample(const AddressSample& s);

// Additionally requires membership in `countries`.
ValidationResult validate_sample(const AddressSample& s, const CountrySet& countries);

}  // namespace addrtag

#endif  // ADDRTAG_TYPES_HPP
