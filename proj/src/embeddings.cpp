#include "addrtag/embeddings.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "addrtag/util.hpp"

namespace addrtag::emb {

namespace {

constexpr int kHashBuckets = 2048;
constexpr std::uint64_t kTokenHashSeed = 0x70cca11ull;
constexpr std::uint64_t kUnitHashSeed = 0xb9e5eedull;

// Shared bucket table for n-gram hashing. Entries are fixed pseudo-random
// values, so fallback embeddings are identical across runs and processes.
const Eigen::MatrixXd& hash_bucket_table() {
  static const Eigen::MatrixXd table = [] {
    Eigen::MatrixXd t(kHashBuckets, kEmbeddingDim);
    std::uint64_t state = 0xadd7e55ull;
    for (int r = 0; r < kHashBuckets; ++r) {
      for (int c = 0; c < kEmbeddingDim; ++c) {
        state = mix_seed(state, 0x17);
        double unit = static_cast<double>(state >> 11) * 0x1.0p-53;
        t(r, c) = (2.0 * unit - 1.0) / std::sqrt(static_cast<double>(kEmbeddingDim));
      }
    }
    return t;
  }();
  return table;
}

// Splits UTF-8 text into codepoint-sized chunks; invalid lead bytes pass
// through as single-byte units.
std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char b = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// Bundled merge table for desk-scale byte-pair segmentation; production
// setups load the external model's own segmentation via unit-vector files.
const std::vector<std::pair<std::string, std::string>>& bpe_merges() {
  static const std::vector<std::pair<std::string, std::string>> merges = {
      {"s", "t"},    {"r", "e"},     {"e", "r"},    {"a", "n"},   {"o", "n"},  {"e", "n"},
      {"i", "n"},    {"a", "r"},     {"o", "r"},    {"a", "l"},   {"l", "e"},  {"e", "t"},
      {"r", "o"},    {"a", "d"},     {"d", "e"},    {"l", "a"},   {"t", "a"},  {"v", "e"},
      {"n", "e"},    {"u", "e"},     {"st", "re"},  {"stre", "et"}, {"ro", "ad"}, {"a", "ve"},
      {"n", "ue"},   {"b", "o"},     {"u", "l"},    {"w", "a"},   {"y", "e"},  {"c", "h"},
      {"s", "h"},    {"t", "h"},     {"g", "h"},    {"o", "u"},   {"e", "e"},  {"o", "o"},
      {"S", "t"},    {"R", "o"},     {"A", "ve"},   {"B", "o"},   {"L", "a"},  {"St", "re"},
  };
  return merges;
}

int merge_rank(const std::string& a, const std::string& b) {
  const auto& merges = bpe_merges();
  for (std::size_t i = 0; i < merges.size(); ++i) {
    if (merges[i].first == a && merges[i].second == b) return static_cast<int>(i);
  }
  return -1;
}

struct LstmState {
  Eigen::RowVectorXd h;
  Eigen::RowVectorXd c;
};

// One cell step in gate order i, f, g, o.
LstmState lstm_step(const Eigen::RowVectorXd& x, const LstmState& prev, const Eigen::MatrixXd& wx,
                    const Eigen::MatrixXd& wh, const Eigen::MatrixXd& b) {
  const long hidden = wh.rows();
  Eigen::RowVectorXd z = x * wx + prev.h * wh + b.row(0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  LstmState next{Eigen::RowVectorXd(hidden), Eigen::RowVectorXd(hidden)};
  for (long k = 0; k < hidden; ++k) {
    double i = sig(z(k));
    double f = sig(z(hidden + k));
    double g = std::tanh(z(2 * hidden + k));
    double o = sig(z(3 * hidden + k));
    next.c(k) = f * prev.c(k) + i * g;
    next.h(k) = o * std::tanh(next.c(k));
  }
  return next;
}

}  // namespace

std::string kind_to_string(Kind k) {
  switch (k) {
    case Kind::kWordSubword: return "word_subword";
    case Kind::kBpeCombined: return "bpe_combined";
    case Kind::kFallback: return "fallback";
  }
  return "fallback";
}

Kind kind_from_string(const std::string& s) {
  if (s == "word_subword") return Kind::kWordSubword;
  if (s == "bpe_combined") return Kind::kBpeCombined;
  if (s == "fallback") return Kind::kFallback;
  throw DataError("unknown embeddings kind: " + s);
}

SubwordCombinerParams make_combiner(params::ParamSet& set, int input_dim, int hidden) {
  SubwordCombinerParams c;
  c.fwd_wx = &set.add("comb.fwd.wx", input_dim, 4 * hidden, input_dim);
  c.fwd_wh = &set.add("comb.fwd.wh", hidden, 4 * hidden, hidden);
  c.fwd_b = &set.add("comb.fwd.b", 1, 4 * hidden, hidden);
  c.bwd_wx = &set.add("comb.bwd.wx", input_dim, 4 * hidden, input_dim);
  c.bwd_wh = &set.add("comb.bwd.wh", hidden, 4 * hidden, hidden);
  c.bwd_b = &set.add("comb.bwd.b", 1, 4 * hidden, hidden);
  c.proj_w = &set.add("comb.proj.w", 2 * hidden, hidden, 2 * hidden);
  c.proj_b = &set.add("comb.proj.b", 1, hidden, 2 * hidden);
  return c;
}

std::vector<std::string> subword_segment(const std::string& token) {
  if (token.empty()) throw EmptyInputError("subword_segment of empty token");
  std::vector<std::string> units = utf8_chars(token);
  while (units.size() > 1) {
    int best = -1;
    for (std::size_t i = 0; i + 1 < units.size(); ++i) {
      int rank = merge_rank(units[i], units[i + 1]);
      if (rank >= 0 && (best < 0 || rank < best)) best = rank;
    }
    if (best < 0) break;
    const auto& m = bpe_merges()[static_cast<std::size_t>(best)];
    std::vector<std::string> merged;
    for (std::size_t i = 0; i < units.size();) {
      if (i + 1 < units.size() && units[i] == m.first && units[i + 1] == m.second) {
        merged.push_back(units[i] + units[i + 1]);
        i += 2;
      } else {
        merged.push_back(units[i]);
        ++i;
      }
    }
    units = std::move(merged);
  }
  return units;
}

Eigen::VectorXd combine_subwords(const SubwordCombinerParams& params,
                                 const std::vector<Eigen::VectorXd>& unit_vectors) {
  if (unit_vectors.empty()) throw EmptyInputError("combine_subwords with no units");
  if (!params.bound()) throw ProviderUnavailableError("combiner parameters not bound");
  const int hidden = params.hidden();
  for (const auto& u : unit_vectors) {
    if (u.size() != params.input_dim()) {
      throw DimensionMismatchError("unit vector size " + std::to_string(u.size()));
    }
  }

  LstmState fwd{Eigen::RowVectorXd::Zero(hidden), Eigen::RowVectorXd::Zero(hidden)};
  for (const auto& u : unit_vectors) {
    fwd = lstm_step(u.transpose(), fwd, params.fwd_wx->w, params.fwd_wh->w, params.fwd_b->w);
  }
  LstmState bwd{Eigen::RowVectorXd::Zero(hidden), Eigen::RowVectorXd::Zero(hidden)};
  for (auto it = unit_vectors.rbegin(); it != unit_vectors.rend(); ++it) {
    bwd = lstm_step(it->transpose(), bwd, params.bwd_wx->w, params.bwd_wh->w, params.bwd_b->w);
  }

  Eigen::RowVectorXd both(2 * hidden);
  both << fwd.h, bwd.h;
  Eigen::RowVectorXd out = both * params.proj_w->w + params.proj_b->w.row(0);
  return out.transpose();
}

Provider::Provider(Kind kind) : kind_(kind) {}

Provider Provider::fallback() { return Provider(Kind::kFallback); }
Provider Provider::word_subword() { return Provider(Kind::kWordSubword); }
Provider Provider::bpe_combined() { return Provider(Kind::kBpeCombined); }

Eigen::VectorXd Provider::ngram_hash_vector(const std::string& token, std::uint64_t seed) const {
  const Eigen::MatrixXd& table = hash_bucket_table();
  std::string marked = "<" + token + ">";
  std::vector<std::string> chars = utf8_chars(marked);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(kEmbeddingDim);
  long count = 0;
  for (int n = 3; n <= 6; ++n) {
    if (static_cast<int>(chars.size()) < n) break;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= chars.size(); ++i) {
      std::string gram;
      for (int k = 0; k < n; ++k) gram += chars[i + static_cast<std::size_t>(k)];
      std::uint64_t h = fnv1a(gram, seed);
      acc += table.row(static_cast<long>(h % kHashBuckets)).transpose();
      ++count;
    }
  }
  if (count == 0) {
    std::uint64_t h = fnv1a(marked, seed);
    acc = table.row(static_cast<long>(h % kHashBuckets)).transpose();
  } else {
    acc /= static_cast<double>(count);
  }
  // unit norm keeps the input scale independent of token length
  double norm = acc.norm();
  return norm > 0.0 ? Eigen::VectorXd(acc / norm) : acc;
}

Eigen::VectorXd Provider::unit_vector(const std::string& unit) const {
  auto it = table_.find(unit);
  if (it != table_.end()) return it->second;
  return ngram_hash_vector(unit, kUnitHashSeed);
}

Eigen::VectorXd Provider::embed_word(const std::string& token) const {
  if (token.empty()) throw EmptyInputError("embed_word of empty token");
  switch (kind_) {
    case Kind::kFallback:
      return ngram_hash_vector(token, kTokenHashSeed);
    case Kind::kWordSubword: {
      if (table_.empty()) throw ProviderUnavailableError("word_subword vectors not loaded");
      auto it = table_.find(token);
      if (it != table_.end()) return it->second;
      return ngram_hash_vector(token, kTokenHashSeed);  // subword route for OOV
    }
    case Kind::kBpeCombined: {
      if (!combiner_.bound()) throw ProviderUnavailableError("byte-pair combiner not bound to model parameters");
      std::vector<std::string> units = subword_segment(token);
      std::vector<Eigen::VectorXd> vecs;
      vecs.reserve(units.size());
      for (const auto& u : units) vecs.push_back(unit_vector(u));
      return combine_subwords(combiner_, vecs);
    }
  }
  throw ModelError("unreachable provider kind");
}

EmbeddedSequence Provider::embed_sequence(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw EmptyInputError("embed_sequence of empty token list");
  EmbeddedSequence out(static_cast<long>(tokens.size()), kEmbeddingDim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.row(static_cast<long>(i)) = embed_word(tokens[i]).transpose();
  }
  return out;
}

namespace {

constexpr char kBinaryMagic[8] = {'A', 'T', 'V', 'E', 'C', 'B', '0', '1'};

using VectorTable = std::unordered_map<std::string, Eigen::VectorXd>;

VectorTable load_vectors_text(std::ifstream& in, const std::string& path) {
  std::string header;
  if (!std::getline(in, header)) throw BadFormatError("missing header line in " + path);
  std::vector<std::string> fields = split_ws(header);
  if (fields.size() != 2) throw BadFormatError("header must be `count dim` in " + path);
  long count = 0, dim = 0;
  try {
    count = std::stol(fields[0]);
    dim = std::stol(fields[1]);
  } catch (const std::exception&) {
    throw BadFormatError("non-numeric header in " + path);
  }
  if (dim != kEmbeddingDim) {
    throw DimensionMismatchError("vector file declares dim " + std::to_string(dim) + ", expected " +
                                 std::to_string(kEmbeddingDim));
  }

  VectorTable table;
  std::string line;
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw BadFormatError("truncated vector file " + path);
    const char* cursor = line.c_str();
    while (*cursor == ' ' || *cursor == '\t') ++cursor;
    const char* word_start = cursor;
    while (*cursor && *cursor != ' ' && *cursor != '\t') ++cursor;
    if (cursor == word_start) throw BadFormatError("empty record in " + path);
    std::string word(word_start, cursor);

    Eigen::VectorXd v(kEmbeddingDim);
    for (int d = 0; d < kEmbeddingDim; ++d) {
      char* end = nullptr;
      double val = std::strtod(cursor, &end);
      if (end == cursor) throw BadFormatError("truncated vector record in " + path);
      v(d) = val;
      cursor = end;
    }
    table[word] = std::move(v);
  }
  return table;
}

template <typename T>
void read_raw(std::ifstream& in, T* out, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(sizeof(T) * count));
  if (!in) throw BadFormatError("truncated binary vector file " + path);
}

VectorTable load_vectors_binary(std::ifstream& in, const std::string& path) {
  std::uint64_t count = 0, dim = 0;
  read_raw(in, &count, 1, path);
  read_raw(in, &dim, 1, path);
  if (dim != static_cast<std::uint64_t>(kEmbeddingDim)) {
    throw DimensionMismatchError("binary vector file declares dim " + std::to_string(dim));
  }
  VectorTable table;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    read_raw(in, &len, 1, path);
    std::string word(len, '\0');
    read_raw(in, word.data(), len, path);
    Eigen::VectorXd v(kEmbeddingDim);
    read_raw(in, v.data(), static_cast<std::size_t>(kEmbeddingDim), path);
    table[word] = std::move(v);
  }
  return table;
}

}  // namespace

Provider load_pretrained_vectors(const std::string& path, Kind kind) {
  if (kind == Kind::kFallback) throw DataError("fallback provider takes no vector file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vector file: " + path);

  Provider p(kind);
  char magic[8] = {};
  in.read(magic, 8);
  if (in && std::memcmp(magic, kBinaryMagic, 8) == 0) {
    p.table_ = load_vectors_binary(in, path);
    return p;
  }
  in.clear();
  in.seekg(0);
  p.table_ = load_vectors_text(in, path);
  return p;
}

void save_vectors_binary(const std::string& path,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vector file: " + path);
  out.write(kBinaryMagic, 8);
  std::uint64_t count = entries.size(), dim = kEmbeddingDim;
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  for (const auto& [word, v] : entries) {
    if (v.size() != kEmbeddingDim) throw DimensionMismatchError("vector entry with dim " + std::to_string(v.size()));
    std::uint32_t len = static_cast<std::uint32_t>(word.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(word.data(), len);
    out.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * kEmbeddingDim);
  }
}

}  // namespace addrtag::emb
