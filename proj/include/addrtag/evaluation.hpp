#ifndef ADDRTAG_EVALUATION_HPP
#define ADDRTAG_EVALUATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "addrtag/dataset.hpp"
#include "addrtag/embeddings.hpp"
#include "addrtag/model.hpp"
#include "addrtag/training.hpp"
#include "addrtag/types.hpp"
#include "addrtag/util.hpp"

namespace addrtag::eval {

// Fraction of positions tagged correctly within one address.
double sequence_accuracy(const std::vector<Tag>& pred, const std::vector<Tag>& gold);

struct CountryReport {
  std::string country;
  double mean_accuracy;  // percent
  double std_accuracy;   // percent, population convention across seeds
  int n_seeds;
  long n_samples;
};

// per_seed_fractions[k] holds the per-sample accuracies of seed k.
CountryReport aggregate_country(const std::string& country,
                                const std::vector<std::vector<double>>& per_seed_fractions);

// Mean sequence accuracy (percent) of uniform-random tagging.
double random_baseline(const std::vector<AddressSample>& samples, const TagVocabulary& vocab,
                       std::uint64_t rng_seed);

enum class SuiteKind { kHoldout, kZeroShot, kIncompleteHoldout };

std::string suite_to_string(SuiteKind k);
SuiteKind suite_from_string(const std::string& s);

struct EvalSuite {
  SuiteKind kind = SuiteKind::kHoldout;
  std::vector<std::string> countries;
  std::map<std::string, std::string> dataset_paths;  // country -> file
  CountrySet country_config = deepparse_countries();
};

struct SuiteResult {
  std::vector<CountryReport> reports;  // country-code order
  Manifest manifest;
};

// Evaluates every checkpoint (one per seed) over every suite country.
// Holdout and incomplete-holdout suites accept training countries only,
// zero-shot its own 41; anything else raises CountryNotAllowed.
SuiteResult run_suite(const EvalSuite& suite, const std::vector<train::Checkpoint>& checkpoints,
                      const emb::Provider& provider, int batch_size = 256);

// Mean sequence accuracy (percent) of one model over a reordered probe.
double reorder_probe_eval(model::ModelParams& mp, const emb::Provider& provider,
                          const std::vector<AddressSample>& probe, int batch_size = 256);

// Per-sample sequence accuracies of one model over a dataset.
std::vector<double> per_sample_accuracies(model::ModelParams& mp, const emb::Provider& provider,
                                          const std::vector<AddressSample>& samples, int batch_size = 256);

// `country,mean,std,n_seeds,n_samples`, two half-even decimals, optional
// trailing Mean row.
void write_report_csv(const std::string& path, const std::vector<CountryReport>& reports, bool mean_row);
std::string render_report_table(const std::vector<CountryReport>& reports, bool mean_row);
CountryReport mean_report_row(const std::vector<CountryReport>& reports);

}  // namespace addrtag::eval

#endif  // ADDRTAG_EVALUATION_HPP
