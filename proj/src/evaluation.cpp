#include "addrtag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace addrtag::eval {

double sequence_accuracy(const std::vector<Tag>& pred, const std::vector<Tag>& gold) {
  if (pred.size() != gold.size()) {
    throw LengthMismatchError("pred has " + std::to_string(pred.size()) + " tags, gold has " +
                              std::to_string(gold.size()));
  }
  if (pred.empty()) throw LengthMismatchError("empty tag sequences");
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gold[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

CountryReport aggregate_country(const std::string& country,
                                const std::vector<std::vector<double>>& per_seed_fractions) {
  if (per_seed_fractions.empty()) throw DataError("aggregate_country needs at least one seed");
  std::vector<double> per_seed;
  long n_samples = 0;
  for (const auto& fractions : per_seed_fractions) {
    if (fractions.empty()) throw DataError("aggregate_country needs at least one sample per seed");
    double sum = 0.0;
    for (double f : fractions) sum += f;
    per_seed.push_back(100.0 * sum / static_cast<double>(fractions.size()));
    n_samples = static_cast<long>(fractions.size());
  }
  double mean = 0.0;
  for (double a : per_seed) mean += a;
  mean /= static_cast<double>(per_seed.size());
  double var = 0.0;
  for (double a : per_seed) var += (a - mean) * (a - mean);
  var /= static_cast<double>(per_seed.size());  // population convention
  return {country, mean, std::sqrt(std::max(0.0, var)), static_cast<int>(per_seed.size()), n_samples};
}

double random_baseline(const std::vector<AddressSample>& samples, const TagVocabulary& vocab,
                       std::uint64_t rng_seed) {
  if (samples.empty()) throw DataError("random baseline needs samples");
  std::mt19937_64 rng(rng_seed);
  const std::size_t k = vocab.tags.size();
  double sum = 0.0;
  for (const AddressSample& s : samples) {
    std::vector<Tag> pred;
    pred.reserve(s.tags.size());
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
      pred.push_back(vocab.tags[static_cast<std::size_t>(rng() % k)]);
    }
    sum += sequence_accuracy(pred, s.tags);
  }
  return 100.0 * sum / static_cast<double>(samples.size());
}

std::string suite_to_string(SuiteKind k) {
  switch (k) {
    case SuiteKind::kHoldout: return "holdout";
    case SuiteKind::kZeroShot: return "zero_shot";
    case SuiteKind::kIncompleteHoldout: return "incomplete";
  }
  return "holdout";
}

SuiteKind suite_from_string(const std::string& s) {
  if (s == "holdout") return SuiteKind::kHoldout;
  if (s == "zero_shot" || s == "zero-shot") return SuiteKind::kZeroShot;
  if (s == "incomplete" || s == "incomplete_holdout") return SuiteKind::kIncompleteHoldout;
  throw DataError("unknown suite: " + s);
}

std::vector<double> per_sample_accuracies(model::ModelParams& mp, const emb::Provider& provider,
                                          const std::vector<AddressSample>& samples, int batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<data::Batch> batches = data::make_batches(samples, batch_size, mp.vocab, std::nullopt);
  std::size_t cursor = 0;
  for (const data::Batch& batch : batches) {
    std::vector<std::vector<Tag>> parsed = model::greedy_parse_batch(mp, provider, batch);
    for (int r = 0; r < batch.size(); ++r) {
      out.push_back(sequence_accuracy(parsed[static_cast<std::size_t>(r)], samples[cursor].tags));
      ++cursor;
    }
  }
  return out;
}

SuiteResult run_suite(const EvalSuite& suite, const std::vector<train::Checkpoint>& checkpoints,
                      const emb::Provider& provider, int batch_size) {
  if (checkpoints.empty()) throw DataError("run_suite needs at least one checkpoint");

  const std::vector<std::string>& eligible = suite.kind == SuiteKind::kZeroShot
                                                 ? suite.country_config.zero_shot
                                                 : suite.country_config.training;
  for (const std::string& c : suite.countries) {
    if (std::find(eligible.begin(), eligible.end(), c) == eligible.end()) {
      throw CountryNotAllowedError(c + " is not eligible for the " + suite_to_string(suite.kind) + " suite");
    }
    if (!suite.dataset_paths.count(c)) throw DataError("no dataset path for country " + c);
  }

  // All checkpoints must describe the same model family.
  auto head = train::parse_manifest(checkpoints.front().manifest);
  for (const auto& ckpt : checkpoints) {
    auto kv = train::parse_manifest(ckpt.manifest);
    for (const char* key : {"variant", "adversarial", "embeddings", "hidden_dim", "embed_dim"}) {
      if (kv[key] != head[key]) {
        throw ManifestMismatchError("checkpoints mix model families (" + std::string(key) + ")");
      }
    }
    if (emb::kind_from_string(kv["embeddings"]) != provider.kind()) {
      throw ManifestMismatchError("checkpoint embeddings " + kv["embeddings"] + " vs provider " +
                                  emb::kind_to_string(provider.kind()));
    }
  }

  std::vector<std::string> countries = suite.countries;
  std::sort(countries.begin(), countries.end());

  SuiteResult result;
  result.manifest.set("suite", suite_to_string(suite.kind));
  result.manifest.set("countries", join(countries, ","));
  result.manifest.note("n_checkpoints", std::to_string(checkpoints.size()));
  result.manifest.note("std_convention", "population over per-seed accuracies");
  for (const auto& ckpt : checkpoints) {
    auto kv = train::parse_manifest(ckpt.manifest);
    result.manifest.note("checkpoint", "seed " + kv["seed"] + ", config " + kv["config_hash"]);
  }

  for (const std::string& country : countries) {
    const std::string& path = suite.dataset_paths.at(country);
    std::vector<AddressSample> samples = data::load_dataset(path);
    if (samples.empty()) throw DataError("empty dataset for " + country + ": " + path);
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(file_fingerprint(path)));
    result.manifest.note("dataset " + country, std::string(fp));

    std::vector<std::vector<double>> per_seed;
    for (const auto& ckpt : checkpoints) {
      model::ModelParams mp = train::restore_model(ckpt);
      // Rebind a provider copy when the combiner is trainable state.
      emb::Provider local = provider;
      if (mp.spec.provider == emb::Kind::kBpeCombined) local.bind_combiner(mp.combiner());
      per_seed.push_back(per_sample_accuracies(mp, local, samples, batch_size));
    }
    result.reports.push_back(aggregate_country(country, per_seed));
  }
  return result;
}

double reorder_probe_eval(model::ModelParams& mp, const emb::Provider& provider,
                          const std::vector<AddressSample>& probe, int batch_size) {
  std::vector<double> fractions = per_sample_accuracies(mp, provider, probe, batch_size);
  double sum = 0.0;
  for (double f : fractions) sum += f;
  return fractions.empty() ? 0.0 : 100.0 * sum / static_cast<double>(fractions.size());
}

CountryReport mean_report_row(const std::vector<CountryReport>& reports) {
  if (reports.empty()) throw DataError("no reports to average");
  double mean = 0.0;
  long samples = 0;
  for (const auto& r : reports) {
    mean += r.mean_accuracy;
    samples += r.n_samples;
  }
  mean /= static_cast<double>(reports.size());
  double var = 0.0;
  for (const auto& r : reports) var += (r.mean_accuracy - mean) * (r.mean_accuracy - mean);
  var /= static_cast<double>(reports.size());
  return {"Mean", mean, std::sqrt(std::max(0.0, var)), reports.front().n_seeds, samples};
}

void write_report_csv(const std::string& path, const std::vector<CountryReport>& reports, bool mean_row) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  out << "country,mean,std,n_seeds,n_samples\n";
  auto emit = [&out](const CountryReport& r) {
    out << r.country << ',' << format_fixed2(r.mean_accuracy) << ',' << format_fixed2(r.std_accuracy) << ','
        << r.n_seeds << ',' << r.n_samples << "\n";
  };
  for (const auto& r : reports) emit(r);
  if (mean_row && !reports.empty()) emit(mean_report_row(reports));
}

std::string render_report_table(const std::vector<CountryReport>& reports, bool mean_row) {
  std::ostringstream os;
  os << "country      mean    std  seeds  samples\n";
  auto emit = [&os](const CountryReport& r) {
    std::string mean = format_fixed2(r.mean_accuracy), std_s = format_fixed2(r.std_accuracy);
    os << r.country;
    for (std::size_t i = r.country.size(); i < 10; ++i) os << ' ';
    for (std::size_t i = mean.size(); i < 8; ++i) os << ' ';
    os << mean;
    for (std::size_t i = std_s.size(); i < 7; ++i) os << ' ';
    os << std_s << "  " << r.n_seeds << "      " << r.n_samples << "\n";
  };
  for (const auto& r : reports) emit(r);
  if (mean_row && !reports.empty()) emit(mean_report_row(reports));
  return os.str();
}

}  // namespace addrtag::eval
