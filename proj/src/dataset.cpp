#include "addrtag/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "addrtag/util.hpp"
#include "json.hpp"

namespace addrtag::data {

namespace {

using nlohmann::json;

// Portable bounded draw; bias is irrelevant at these ranges, stability of the
// stream across platforms is what matters.
std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) { return n <= 1 ? 0 : rng() % n; }

bool has_tag(const AddressSample& s, Tag t) {
  return std::find(s.tags.begin(), s.tags.end(), t) != s.tags.end();
}

AddressSample make_incomplete_with_rng(const AddressSample& s, const IncompletePolicy& policy,
                                       std::mt19937_64& rng) {
  std::vector<Tag> present;
  for (Tag t : policy.droppable) {
    if (has_tag(s, t)) present.push_back(t);
  }
  if (present.empty()) throw CannotDropError("no droppable tag class present");

  bool covers_all = std::all_of(s.tags.begin(), s.tags.end(), [&](Tag t) {
    return std::find(present.begin(), present.end(), t) != present.end();
  });
  int k = static_cast<int>(present.size());
  int max_allowed = covers_all ? k - 1 : k;
  if (max_allowed < std::max(policy.min_dropped, 1)) {
    throw CannotDropError("dropping would empty the address");
  }

  int m = std::max(policy.min_dropped, 1) +
          static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(max_allowed - std::max(policy.min_dropped, 1) + 1)));
  // Partial Fisher-Yates: the first m entries become the dropped classes.
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(k - i)));
    std::swap(present[static_cast<std::size_t>(i)], present[static_cast<std::size_t>(j)]);
  }
  std::set<Tag> dropped(present.begin(), present.begin() + m);

  AddressSample out;
  out.country = s.country;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (!dropped.count(s.tags[i])) {
      out.tokens.push_back(s.tokens[i]);
      out.tags.push_back(s.tags[i]);
    }
  }
  return out;
}

}  // namespace

bool is_incomplete(const AddressSample& s, const IncompletePolicy& policy) {
  for (Tag t : policy.droppable) {
    if (!has_tag(s, t)) return true;
  }
  return false;
}

bool can_make_incomplete(const AddressSample& s, const IncompletePolicy& policy) {
  std::vector<Tag> present;
  for (Tag t : policy.droppable) {
    if (has_tag(s, t)) present.push_back(t);
  }
  if (present.empty()) return false;
  bool covers_all = std::all_of(s.tags.begin(), s.tags.end(), [&](Tag t) {
    return std::find(present.begin(), present.end(), t) != present.end();
  });
  int max_allowed = covers_all ? static_cast<int>(present.size()) - 1 : static_cast<int>(present.size());
  return max_allowed >= std::max(policy.min_dropped, 1);
}

std::string sample_to_record(const AddressSample& s) {
  json rec;
  rec["address"] = join(s.tokens, " ");
  json tags = json::array();
  for (Tag t : s.tags) tags.push_back(tag_name(t));
  rec["tags"] = tags;
  rec["country"] = s.country;
  return rec.dump();
}

AddressSample sample_from_record(const std::string& line, long line_no) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw MalformedRecordError(line_no, e.what());
  }
  if (!rec.is_object() || !rec.contains("address") || !rec.contains("tags") || !rec.contains("country")) {
    throw MalformedRecordError(line_no, "record needs address, tags and country fields");
  }
  if (!rec["address"].is_string() || !rec["tags"].is_array() || !rec["country"].is_string()) {
    throw MalformedRecordError(line_no, "field with wrong type");
  }

  AddressSample s;
  s.tokens = split_ws(rec["address"].get<std::string>());
  s.country = rec["country"].get<std::string>();
  for (const auto& t : rec["tags"]) {
    if (!t.is_string()) throw MalformedRecordError(line_no, "tag entry is not a string");
    try {
      s.tags.push_back(tag_from_name(t.get<std::string>()));
    } catch (const UnknownTagError& e) {
      throw MalformedRecordError(line_no, e.what());
    }
  }

  ValidationResult v = validate_sample(s);
  if (!v.ok()) throw MalformedRecordError(line_no, v.violations.front());
  return s;
}

std::vector<AddressSample> load_dataset(const std::string& path, const CountrySet* expected_countries) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset: " + path);

  std::vector<AddressSample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AddressSample s = sample_from_record(line, line_no);
    if (expected_countries && s.country != "??" && !expected_countries->contains(s.country)) {
      throw UnknownCountryError(s.country + " (line " + std::to_string(line_no) + ")");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<AddressSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset: " + path);
  for (const auto& s : samples) out << sample_to_record(s) << "\n";
}

AddressSample make_incomplete_variant(const AddressSample& s, const IncompletePolicy& policy) {
  std::mt19937_64 rng(policy.rng_seed);
  return make_incomplete_with_rng(s, policy, rng);
}

std::pair<std::vector<AddressSample>, std::vector<AddressSample>> build_incomplete_dataset(
    const std::vector<AddressSample>& samples, const IncompletePolicy& policy, long train_n, long holdout_n) {
  std::map<std::string, std::vector<std::size_t>> by_country;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (can_make_incomplete(samples[i], policy)) by_country[samples[i].country].push_back(i);
  }

  std::vector<AddressSample> train, holdout;
  for (auto& [country, eligible] : by_country) {
    long needed = train_n + holdout_n;
    if (static_cast<long>(eligible.size()) < needed) {
      throw InsufficientDataError(country, needed, static_cast<long>(eligible.size()));
    }
    // One derived stream per country: shuffle, then per-sample synthesis draws.
    std::mt19937_64 rng(mix_seed(policy.rng_seed, fnv1a(country)));
    for (std::size_t i = eligible.size() - 1; i > 0; --i) {
      std::size_t j = rand_below(rng, i + 1);
      std::swap(eligible[i], eligible[j]);
    }
    for (long i = 0; i < needed; ++i) {
      AddressSample variant = make_incomplete_with_rng(samples[eligible[static_cast<std::size_t>(i)]], policy, rng);
      (i < train_n ? train : holdout).push_back(std::move(variant));
    }
  }
  return {std::move(train), std::move(holdout)};
}

AddressSample reorder_to_pattern(const AddressSample& s, const std::vector<Tag>& pattern) {
  for (Tag t : s.tags) {
    if (std::find(pattern.begin(), pattern.end(), t) == pattern.end()) {
      throw PatternMismatchError("sample contains " + tag_name(t) + " which the pattern lacks");
    }
  }
  AddressSample out;
  out.country = s.country;
  for (Tag t : pattern) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (s.tags[i] == t) {
        out.tokens.push_back(s.tokens[i]);
        out.tags.push_back(t);
      }
    }
  }
  return out;
}

std::vector<AddressSample> reorder_probe(const std::vector<AddressSample>& samples,
                                         const std::vector<Tag>& pattern_a, const std::vector<Tag>& pattern_b,
                                         std::uint64_t rng_seed) {
  const std::size_t n = samples.size();
  std::vector<char> use_a(n, 0);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) use_a[i] = 1;
  std::mt19937_64 rng(rng_seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rand_below(rng, i);
    std::swap(use_a[i - 1], use_a[j]);
  }

  std::vector<AddressSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(reorder_to_pattern(samples[i], use_a[i] ? pattern_a : pattern_b));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<AddressSample>& samples, int batch_size,
                                const TagVocabulary& vocab, std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = rand_below(rng, i);
      std::swap(order[i - 1], order[j]);
    }
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    int b = static_cast<int>(end - start);
    int max_len = 0;
    for (std::size_t i = start; i < end; ++i) {
      max_len = std::max(max_len, static_cast<int>(samples[order[i]].tokens.size()));
    }

    Batch batch;
    batch.tokens.assign(static_cast<std::size_t>(b), std::vector<std::string>(static_cast<std::size_t>(max_len)));
    batch.tag_matrix = Eigen::MatrixXi::Constant(b, max_len, vocab.pad_index);
    batch.mask = Eigen::ArrayXXd::Zero(b, max_len);
    batch.lengths.resize(static_cast<std::size_t>(b));
    batch.countries.resize(static_cast<std::size_t>(b));
    for (int r = 0; r < b; ++r) {
      const AddressSample& s = samples[order[start + static_cast<std::size_t>(r)]];
      batch.lengths[static_cast<std::size_t>(r)] = static_cast<int>(s.tokens.size());
      batch.countries[static_cast<std::size_t>(r)] = s.country;
      for (int c = 0; c < static_cast<int>(s.tokens.size()); ++c) {
        batch.tokens[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = s.tokens[static_cast<std::size_t>(c)];
        batch.tag_matrix(r, c) = tag_index(s.tags[static_cast<std::size_t>(c)]);
        batch.mask(r, c) = 1.0;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace addrtag::data
