#ifndef ADDRTAG_DATASET_HPP
#define ADDRTAG_DATASET_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "addrtag/types.hpp"

namespace addrtag::data {

// Padded batch of samples. Rows are samples, columns are time steps.
// mask(i, j) == 1 exactly where j < lengths[i]; tag_matrix holds pad_index
// wherever the mask is 0.
struct Batch {
  std::vector<std::vector<std::string>> tokens;  // batch x max_len, "" at padding
  Eigen::MatrixXi tag_matrix;                    // batch x max_len
  std::vector<int> lengths;
  std::vector<std::string> countries;
  Eigen::ArrayXXd mask;  // batch x max_len, 0/1

  int size() const { return static_cast<int>(lengths.size()); }
  int max_len() const { return static_cast<int>(tokens.empty() ? 0 : tokens.front().size()); }
};

// Synthesis policy for incomplete addresses: whole token runs of at least
// min_dropped of the four droppable tag classes are removed.
struct IncompletePolicy {
  std::array<Tag, 4> droppable = {Tag::kStreetName, Tag::kPostalCode, Tag::kMunicipality, Tag::kProvince};
  int min_dropped = 1;
  std::uint64_t rng_seed = 0;
};

// An address is incomplete when it lacks at least one of the four droppable
// tag classes.
bool is_incomplete(const AddressSample& s, const IncompletePolicy& policy = {});

// True when make_incomplete_variant can succeed on this sample.
bool can_make_incomplete(const AddressSample& s, const IncompletePolicy& policy = {});

// Reads one JSON record per line: {"address": ..., "tags": [...], "country": ...}.
// Tokens are the whitespace-separated fields of `address`. When
// expected_countries is given, every record's country must belong to it.
std::vector<AddressSample> load_dataset(const std::string& path, const CountrySet* expected_countries = nullptr);

void save_dataset(const std::string& path, const std::vector<AddressSample>& samples);

std::string sample_to_record(const AddressSample& s);
AddressSample sample_from_record(const std::string& line, long line_no);

// Removes every token of 1..k randomly chosen droppable classes (entire class
// runs, never partial). Deterministic for a fixed policy.rng_seed.
AddressSample make_incomplete_variant(const AddressSample& s, const IncompletePolicy& policy);

// Per-country disjoint train/holdout split of synthesized incomplete samples.
std::pair<std::vector<AddressSample>, std::vector<AddressSample>> build_incomplete_dataset(
    const std::vector<AddressSample>& samples, const IncompletePolicy& policy, long train_n, long holdout_n);

// Rewrites each sample's tag-class blocks to follow pattern_a or pattern_b,
// with the assignment split equally between the two. Within-class token order
// is preserved and tags move with their tokens.
std::vector<AddressSample> reorder_probe(const std::vector<AddressSample>& samples,
                                         const std::vector<Tag>& pattern_a, const std::vector<Tag>& pattern_b,
                                         std::uint64_t rng_seed);

// Reorders a single sample's class blocks to follow `pattern`.
AddressSample reorder_to_pattern(const AddressSample& s, const std::vector<Tag>& pattern);

// Partitions samples into padded batches. Without a shuffle seed the file
// order is kept.
std::vector<Batch> make_batches(const std::vector<AddressSample>& samples, int batch_size,
                                const TagVocabulary& vocab, std::optional<std::uint64_t> shuffle_seed);

}  // namespace addrtag::data

#endif  // ADDRTAG_DATASET_HPP
