#include <filesystem>
#include <fstream>
#include <random>

#include "addrtag/evaluation.hpp"
#include "doctest.h"
#include "support/toy_grammar.hpp"

using namespace addrtag;
using namespace addrtag::eval;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Tag> random_tags(std::mt19937_64& rng, std::size_t n) {
  std::vector<Tag> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(tag_from_index(static_cast<int>(rng() % 8)));
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("evaluation");

TEST_CASE("sequence accuracy basics") {
  std::vector<Tag> gold = {Tag::kStreetNumber, Tag::kPostalCode};
  CHECK(sequence_accuracy(gold, gold) == 1.0);
  CHECK(sequence_accuracy({Tag::kStreetNumber, Tag::kStreetNumber}, gold) == 0.5);
  CHECK(sequence_accuracy({Tag::kUnit, Tag::kUnit}, gold) == 0.0);
  CHECK_THROWS_AS(sequence_accuracy({Tag::kUnit}, gold), LengthMismatchError);
  CHECK_THROWS_AS(sequence_accuracy({}, {}), LengthMismatchError);
}

TEST_CASE("sequence accuracy equals a position-by-position count on random pairs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t n = 1 + rng() % 12;
    std::vector<Tag> pred = random_tags(rng, n), gold = random_tags(rng, n);
    long correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == gold[i];
    CHECK(sequence_accuracy(pred, gold) == static_cast<double>(correct) / static_cast<double>(n));
  }
}

TEST_CASE("accuracy is invariant under simultaneous position permutation") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng() % 10;
    std::vector<Tag> pred = random_tags(rng, n), gold = random_tags(rng, n);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    std::vector<Tag> pred_p(n), gold_p(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred_p[i] = pred[perm[i]];
      gold_p[i] = gold[perm[i]];
    }
    CHECK(sequence_accuracy(pred, gold) == sequence_accuracy(pred_p, gold_p));
  }
}

TEST_CASE("country aggregation over seeds") {
  CountryReport one = aggregate_country("US", {{1.0, 0.5}});
  CHECK(one.mean_accuracy == doctest::Approx(75.0));
  CHECK(one.std_accuracy == 0.0);
  CHECK(one.n_seeds == 1);
  CHECK(one.n_samples == 2);

  CountryReport two = aggregate_country("DE", {{1.0, 1.0}, {1.0, 0.96}});
  CHECK(two.mean_accuracy == doctest::Approx(99.0));
  CHECK(two.std_accuracy == doctest::Approx(1.0));  // population convention
  CHECK(two.n_seeds == 2);
}

TEST_CASE("uniform-random tagging lands near one eighth") {
  toy::Generator gen(23);
  std::vector<AddressSample> samples = gen.generate('A', 2000, "US");
  double pct = random_baseline(samples, TagVocabulary{}, 7);
  CHECK(pct > 11.0);
  CHECK(pct < 14.0);
  CHECK(random_baseline(samples, TagVocabulary{}, 7) == pct);  // seeded
}

TEST_CASE("holdout-table row renders with two half-even decimals") {
  std::vector<CountryReport> reports = {{"US", 99.61, 0.09, 5, 100000}};
  std::string path = temp_path("addrtag_rep1.csv");
  write_report_csv(path, reports, false);
  CHECK(read_file(path) == "country,mean,std,n_seeds,n_samples\nUS,99.61,0.09,5,100000\n");

  CHECK(format_fixed2(99.605) == "99.60");  // ties to even
  CHECK(format_fixed2(99.615) == "99.62");
  CHECK(format_fixed2(0.0) == "0.00");
  CHECK(format_fixed2(100.0) == "100.00");
  CHECK(format_fixed2(12.5) == "12.50");
}

TEST_CASE("csv mean row averages the country means") {
  std::vector<CountryReport> reports = {{"US", 98.0, 0.5, 5, 10}, {"DE", 96.0, 0.25, 5, 10}};
  std::string path = temp_path("addrtag_rep2.csv");
  write_report_csv(path, reports, true);
  std::string content = read_file(path);
  CHECK(content.find("Mean,97.00,1.00,5,20\n") != std::string::npos);
  CHECK(!render_report_table(reports, true).empty());
}

TEST_CASE("suite kind strings and eligibility") {
  CHECK(suite_from_string("holdout") == SuiteKind::kHoldout);
  CHECK(suite_from_string("zero_shot") == SuiteKind::kZeroShot);
  CHECK(suite_from_string("incomplete") == SuiteKind::kIncompleteHoldout);
  CHECK_THROWS_AS(suite_from_string("test"), DataError);
}

namespace {

struct SuiteFixture {
  emb::Provider provider = emb::Provider::fallback();
  std::vector<train::Checkpoint> checkpoints;
  EvalSuite suite;

  SuiteFixture() {
    toy::Generator gen(29);
    model::ModelSpec spec;
    spec.dims.hidden = 8;
    spec.dims.attention = 8;
    spec.dims.tag_repr = 4;

    std::vector<AddressSample> tr = gen.generate('A', 24, "US");
    std::vector<AddressSample> va = gen.generate('A', 8, "US");
    train::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr0 = 1.0;
    for (std::uint64_t seed : {5ull, 10ull}) {
      checkpoints.push_back(train::train(cfg, spec, provider, tr, va, seed).checkpoint);
    }

    suite.kind = SuiteKind::kHoldout;
    suite.countries = {"US", "DE"};
    for (const char* cc : {"US", "DE"}) {
      std::string path = temp_path(std::string("addrtag_suite_") + cc + ".jsonl");
      data::save_dataset(path, gen.generate(cc[0] == 'U' ? 'A' : 'B', 12, cc));
      suite.dataset_paths[cc] = path;
    }
  }
};

}  // namespace

TEST_CASE("run_suite produces one deterministic report per country") {
  SuiteFixture fx;
  SuiteResult r1 = run_suite(fx.suite, fx.checkpoints, fx.provider);
  REQUIRE(r1.reports.size() == 2);
  CHECK(r1.reports[0].country == "DE");  // country-code order
  CHECK(r1.reports[1].country == "US");
  for (const auto& rep : r1.reports) {
    CHECK(rep.n_seeds == 2);
    CHECK(rep.n_samples == 12);
    CHECK(rep.mean_accuracy >= 0.0);
    CHECK(rep.mean_accuracy <= 100.0);
    CHECK(rep.std_accuracy >= 0.0);
  }

  SuiteResult r2 = run_suite(fx.suite, fx.checkpoints, fx.provider);
  for (std::size_t i = 0; i < r1.reports.size(); ++i) {
    CHECK(r1.reports[i].mean_accuracy == r2.reports[i].mean_accuracy);
    CHECK(r1.reports[i].std_accuracy == r2.reports[i].std_accuracy);
  }
  CHECK(r1.manifest.render() == r2.manifest.render());
  CHECK(r1.manifest.render().find("dataset US") != std::string::npos);
}

TEST_CASE("suite country eligibility is enforced") {
  SuiteFixture fx;
  fx.suite.kind = SuiteKind::kIncompleteHoldout;
  fx.suite.countries = {"JP"};  // zero-shot country
  CHECK_THROWS_AS(run_suite(fx.suite, fx.checkpoints, fx.provider), CountryNotAllowedError);

  fx.suite.kind = SuiteKind::kZeroShot;
  fx.suite.countries = {"US"};  // training country
  CHECK_THROWS_AS(run_suite(fx.suite, fx.checkpoints, fx.provider), CountryNotAllowedError);
}

TEST_CASE("run_suite rejects an empty checkpoint list and mixed families") {
  SuiteFixture fx;
  CHECK_THROWS_AS(run_suite(fx.suite, {}, fx.provider), DataError);

  model::ModelSpec other;
  other.variant = model::Variant::kAttention;
  other.dims.hidden = 8;
  other.dims.attention = 8;
  other.dims.tag_repr = 4;
  model::ModelParams mp = model::ModelParams::create(other);
  mp.init(1);
  std::vector<train::Checkpoint> mixed = fx.checkpoints;
  mixed.push_back(train::make_checkpoint(mp, 15, 1, 0.9, 2));
  CHECK_THROWS_AS(run_suite(fx.suite, mixed, fx.provider), ManifestMismatchError);
}

TEST_CASE("reorder probe evaluation returns a mean percentage") {
  SuiteFixture fx;
  toy::Generator gen(31);
  std::vector<AddressSample> probe = gen.generate('A', 10, "US");
  model::ModelParams mp = train::restore_model(fx.checkpoints[0]);
  double pct = reorder_probe_eval(mp, fx.provider, probe);
  CHECK(pct >= 0.0);
  CHECK(pct <= 100.0);
}

TEST_SUITE_END();
