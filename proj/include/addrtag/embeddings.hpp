#ifndef ADDRTAG_EMBEDDINGS_HPP
#define ADDRTAG_EMBEDDINGS_HPP

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "addrtag/autodiff.hpp"
#include "addrtag/types.hpp"

namespace addrtag::emb {

// Every provider emits vectors of exactly this dimension.
inline constexpr int kEmbeddingDim = 300;

// Rows are tokens.
using EmbeddedSequence = Eigen::MatrixXd;

enum class Kind { kWordSubword, kBpeCombined, kFallback };

std::string kind_to_string(Kind k);
Kind kind_from_string(const std::string& s);

// Bidirectional recurrent combiner that merges per-unit vectors into one
// word vector: concat(final forward hidden, final backward hidden) through a
// fully connected projection. Blocks are owned by the model's ParamSet.
struct SubwordCombinerParams {
  params::Block* fwd_wx = nullptr;  // input  x 4*hidden
  params::Block* fwd_wh = nullptr;  // hidden x 4*hidden
  params::Block* fwd_b = nullptr;   // 1 x 4*hidden
  params::Block* bwd_wx = nullptr;
  params::Block* bwd_wh = nullptr;
  params::Block* bwd_b = nullptr;
  params::Block* proj_w = nullptr;  // 2*hidden x hidden
  params::Block* proj_b = nullptr;  // 1 x hidden

  bool bound() const { return fwd_wx != nullptr; }
  int hidden() const { return fwd_wx ? static_cast<int>(fwd_wx->w.cols() / 4) : 0; }
  int input_dim() const { return fwd_wx ? static_cast<int>(fwd_wx->w.rows()) : 0; }
};

// Registers the combiner blocks in `set` (hidden = kEmbeddingDim).
SubwordCombinerParams make_combiner(params::ParamSet& set, int input_dim, int hidden);

// Deterministic byte-pair segmentation with a small bundled merge table.
// Concatenating the units reconstructs the token.
std::vector<std::string> subword_segment(const std::string& token);

// Runs the combiner over the given unit vectors. Pure forward path; the
// training graph builds the same computation on a tape.
Eigen::VectorXd combine_subwords(const SubwordCombinerParams& params,
                                 const std::vector<Eigen::VectorXd>& unit_vectors);

class Provider {
 public:
  static Provider fallback();
  static Provider word_subword();   // unavailable until vectors are loaded
  static Provider bpe_combined();   // unit vectors hashed unless loaded

  Kind kind() const { return kind_; }
  int dimension() const { return kEmbeddingDim; }
  // Only the byte-pair combiner carries trainable state.
  bool trainable() const { return kind_ == Kind::kBpeCombined; }

  void bind_combiner(const SubwordCombinerParams& c) { combiner_ = c; }
  const SubwordCombinerParams& combiner() const { return combiner_; }

  // Deterministic per token for fixed provider state. Out-of-vocabulary
  // tokens fall back to character n-gram hashing, so lookups never fail.
  Eigen::VectorXd embed_word(const std::string& token) const;
  EmbeddedSequence embed_sequence(const std::vector<std::string>& tokens) const;

  // Frozen per-unit vector (loaded table or hash fallback).
  Eigen::VectorXd unit_vector(const std::string& unit) const;

  bool has_table() const { return !table_.empty(); }
  std::size_t table_size() const { return table_.size(); }

 private:
  friend Provider load_pretrained_vectors(const std::string& path, Kind kind);

  explicit Provider(Kind kind);
  Eigen::VectorXd ngram_hash_vector(const std::string& token, std::uint64_t seed) const;

  Kind kind_;
  std::unordered_map<std::string, Eigen::VectorXd> table_;  // words or units
  SubwordCombinerParams combiner_;
};

// Reads the text format `count dim\nword v1..v300\n...` or the equivalent
// binary container, and returns a ready provider of the given kind.
Provider load_pretrained_vectors(const std::string& path, Kind kind);

void save_vectors_binary(const std::string& path,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& entries);

// Spec-style free functions.
inline Eigen::VectorXd embed_word(const Provider& p, const std::string& token) { return p.embed_word(token); }
inline EmbeddedSequence embed_sequence(const Provider& p, const std::vector<std::string>& tokens) {
  return p.embed_sequence(tokens);
}

}  // namespace addrtag::emb

#endif  // ADDRTAG_EMBEDDINGS_HPP
