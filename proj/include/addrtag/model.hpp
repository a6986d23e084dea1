#ifndef ADDRTAG_MODEL_HPP
#define ADDRTAG_MODEL_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "addrtag/autodiff.hpp"
#include "addrtag/dataset.hpp"
#include "addrtag/embeddings.hpp"
#include "addrtag/types.hpp"

namespace addrtag::model {

enum class Variant { kBase, kAttention };

std::string variant_to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelDims {
  int embed = emb::kEmbeddingDim;
  int hidden = 1024;
  int attention = 1024;  // alignment width of the additive attention
  int tag_repr = 32;     // learned tag representation width
  bool one_hot_tags = false;

  int tag_repr_dim() const { return one_hot_tags ? kTagCount + 2 : tag_repr; }
};

struct ModelSpec {
  Variant variant = Variant::kBase;
  bool adversarial = false;
  emb::Kind provider = emb::Kind::kFallback;
  ModelDims dims;
};

// All trainable state of one tagger. Blocks live in `set` in a fixed order;
// accessors look them up by name so the struct stays freely copyable.
struct ModelParams {
  ModelSpec spec;
  TagVocabulary vocab;
  params::ParamSet set;

  static ModelParams create(const ModelSpec& spec, const TagVocabulary& vocab = {});
  void init(std::uint64_t seed);

  int decoder_input_dim() const;

  params::Block& block(const std::string& name);
  const params::Block& block(const std::string& name) const;
  bool has_block(const std::string& name) const { return set.find(name) != nullptr; }

  emb::SubwordCombinerParams combiner();

  // Deep copies of the weights, for best-epoch snapshots.
  std::vector<Eigen::MatrixXd> snapshot_weights() const;
  void restore_weights(const std::vector<Eigen::MatrixXd>& weights);
};

// --- single-sample surface ---------------------------------------------

struct EncoderOutputs {
  Eigen::MatrixXd outputs;       // n x hidden, one row per input step
  Eigen::VectorXd final_hidden;  // == outputs.row(n-1)
  Eigen::VectorXd final_cell;
};

struct DecoderState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
  int step = 0;
};

struct AttentionParams {
  Eigen::MatrixXd w_h;  // hidden x a
  Eigen::MatrixXd w_o;  // hidden x a
  Eigen::VectorXd p;    // a
};

AttentionParams attention_params(const ModelParams& mp);

EncoderOutputs encode(const ModelParams& mp, const emb::EmbeddedSequence& x);

// Initial decoder state: the encoder's final hidden and cell state.
DecoderState initial_decoder_state(const EncoderOutputs& enc);

Eigen::VectorXd tag_representation(const ModelParams& mp, int label_index);

// alpha_j = softmax_j(p . tanh(w_h' h_prev + w_o' O_j)); sums to one.
Eigen::VectorXd attention_weights(const AttentionParams& ap, const DecoderState& h_prev,
                                  const EncoderOutputs& enc);

// Convex combination of the encoder outputs.
Eigen::VectorXd context_vector(const Eigen::VectorXd& alpha, const EncoderOutputs& enc);

struct StepResult {
  Eigen::VectorXd logits;  // kTagCount entries
  DecoderState state;
  Eigen::VectorXd alpha;   // empty for the plain decoder
};

StepResult decode_step_plain(const ModelParams& mp, const DecoderState& state,
                             const Eigen::VectorXd& last_tag_repr);

StepResult decode_step_attention(const ModelParams& mp, const DecoderState& state,
                                 const Eigen::VectorXd& last_tag_repr, const EncoderOutputs& enc);

// Returns one row of logits per input step. With teacher forcing, step i
// consumes gold tag i-1; otherwise the argmax of step i-1.
Eigen::MatrixXd forward(const ModelParams& mp, const emb::EmbeddedSequence& x, const std::vector<int>* gold,
                        bool teacher_forcing, Variant variant);

std::vector<Tag> greedy_parse(const ModelParams& mp, const emb::Provider& provider,
                              const std::vector<std::string>& tokens, Variant variant);

// --- batched graph builders (training and evaluation core) ---------------

struct ParamVars {
  ad::Var enc_wx, enc_wh, enc_b;
  ad::Var dec_wx, dec_wh, dec_b;
  ad::Var att_wh, att_wo, att_p;
  ad::Var tag_table, out_w, out_b;
  ad::Var disc_w, disc_b;
  ad::Var comb_fwd_wx, comb_fwd_wh, comb_fwd_b;
  ad::Var comb_bwd_wx, comb_bwd_wh, comb_bwd_b;
  ad::Var comb_proj_w, comb_proj_b;
};

ParamVars load_param_vars(ad::Tape& tape, ModelParams& mp);

// Per-step (B x embed) input matrices. For the byte-pair provider the unique
// tokens of the batch run through the combiner on the tape, so gradients
// reach the combiner blocks.
std::vector<ad::Var> build_input_steps(ad::Tape& tape, const ParamVars& pv, ModelParams& mp,
                                       const emb::Provider& provider, const data::Batch& batch);

struct EncodedBatch {
  std::vector<ad::Var> outputs;   // T entries, each B x hidden
  std::vector<ad::Var> att_keys;  // T entries, each B x a (attention models)
  ad::Var final_h, final_c;
};

EncodedBatch build_encoder(ad::Tape& tape, const ParamVars& pv, const ModelParams& mp,
                           const std::vector<ad::Var>& inputs, const data::Batch& batch);

struct DecodeOutput {
  std::vector<ad::Var> logits;           // T entries, each B x kTagCount
  std::vector<Eigen::MatrixXd> alphas;   // attention weights per step (values)
  ad::Var loss;                          // masked mean cross-entropy; invalid unless requested
};

DecodeOutput build_decoder(ad::Tape& tape, const ParamVars& pv, const ModelParams& mp, const EncodedBatch& enc,
                           const data::Batch& batch, bool teacher_forcing, bool with_loss);

std::vector<std::vector<Tag>> greedy_parse_batch(ModelParams& mp, const emb::Provider& provider,
                                                 const data::Batch& batch);

// Masked mean cross-entropy of a teacher-forced pass (no backward).
double batch_loss_value(ModelParams& mp, const emb::Provider& provider, const data::Batch& batch);

}  // namespace addrtag::model

#endif  // ADDRTAG_MODEL_HPP
