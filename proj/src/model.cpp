#include "addrtag/model.hpp"

#include <algorithm>
#include <unordered_map>

#include "addrtag/nn_math.hpp"
#include "addrtag/util.hpp"

namespace addrtag::model {

std::string variant_to_string(Variant v) { return v == Variant::kBase ? "base" : "attention"; }

Variant variant_from_string(const std::string& s) {
  if (s == "base") return Variant::kBase;
  if (s == "attention") return Variant::kAttention;
  throw DataError("unknown variant: " + s);
}

int ModelParams::decoder_input_dim() const {
  return spec.dims.tag_repr_dim() + (spec.variant == Variant::kAttention ? spec.dims.hidden : 0);
}

ModelParams ModelParams::create(const ModelSpec& spec, const TagVocabulary& vocab) {
  ModelParams mp;
  mp.spec = spec;
  mp.vocab = vocab;
  const ModelDims& d = spec.dims;
  const int label_space = vocab.size();

  mp.set.add("enc.wx", d.embed, 4 * d.hidden, d.embed);
  mp.set.add("enc.wh", d.hidden, 4 * d.hidden, d.hidden);
  mp.set.add("enc.b", 1, 4 * d.hidden, d.hidden);

  const int dec_in = mp.decoder_input_dim();
  mp.set.add("dec.wx", dec_in, 4 * d.hidden, dec_in);
  mp.set.add("dec.wh", d.hidden, 4 * d.hidden, d.hidden);
  mp.set.add("dec.b", 1, 4 * d.hidden, d.hidden);

  if (spec.variant == Variant::kAttention) {
    mp.set.add("att.wh", d.hidden, d.attention, d.hidden);
    mp.set.add("att.wo", d.hidden, d.attention, d.hidden);
    mp.set.add("att.p", d.attention, 1, d.attention);
  }

  params::Block& table = mp.set.add("tag.table", label_space, d.tag_repr_dim(), d.tag_repr_dim());
  if (d.one_hot_tags) {
    table.w = Eigen::MatrixXd::Identity(label_space, label_space);
    table.frozen = true;
  }

  mp.set.add("out.w", d.hidden, kTagCount, d.hidden);
  mp.set.add("out.b", 1, kTagCount, d.hidden);

  if (spec.adversarial) {
    mp.set.add("disc.w", d.hidden, 2, d.hidden);
    mp.set.add("disc.b", 1, 2, d.hidden);
  }

  if (spec.provider == emb::Kind::kBpeCombined) {
    emb::make_combiner(mp.set, d.embed, d.embed);
  }
  return mp;
}

void ModelParams::init(std::uint64_t seed) { set.init_uniform(mix_seed(seed, 0xb10c)); }

params::Block& ModelParams::block(const std::string& name) {
  params::Block* b = set.find(name);
  if (!b) throw std::logic_error("no parameter block " + name + " in this model variant");
  return *b;
}

const params::Block& ModelParams::block(const std::string& name) const {
  const params::Block* b = set.find(name);
  if (!b) throw std::logic_error("no parameter block " + name + " in this model variant");
  return *b;
}

emb::SubwordCombinerParams ModelParams::combiner() {
  emb::SubwordCombinerParams c;
  if (spec.provider != emb::Kind::kBpeCombined) return c;
  c.fwd_wx = &block("comb.fwd.wx");
  c.fwd_wh = &block("comb.fwd.wh");
  c.fwd_b = &block("comb.fwd.b");
  c.bwd_wx = &block("comb.bwd.wx");
  c.bwd_wh = &block("comb.bwd.wh");
  c.bwd_b = &block("comb.bwd.b");
  c.proj_w = &block("comb.proj.w");
  c.proj_b = &block("comb.proj.b");
  return c;
}

std::vector<Eigen::MatrixXd> ModelParams::snapshot_weights() const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(set.blocks.size());
  for (const auto& b : set.blocks) out.push_back(b.w);
  return out;
}

void ModelParams::restore_weights(const std::vector<Eigen::MatrixXd>& weights) {
  if (weights.size() != set.blocks.size()) throw std::logic_error("weight snapshot size mismatch");
  std::size_t i = 0;
  for (auto& b : set.blocks) b.w = weights[i++];
}

// --- single-sample surface ---------------------------------------------

AttentionParams attention_params(const ModelParams& mp) {
  if (mp.spec.variant != Variant::kAttention) throw std::logic_error("base model has no attention parameters");
  return {mp.block("att.wh").w, mp.block("att.wo").w, mp.block("att.p").w.col(0)};
}

EncoderOutputs encode(const ModelParams& mp, const emb::EmbeddedSequence& x) {
  if (x.rows() == 0) throw EmptyInputError("encode of empty sequence");
  if (x.cols() != mp.spec.dims.embed) {
    throw DimensionMismatchError("encoder input width " + std::to_string(x.cols()));
  }
  const Eigen::MatrixXd& wx = mp.block("enc.wx").w;
  const Eigen::MatrixXd& wh = mp.block("enc.wh").w;
  const Eigen::MatrixXd& b = mp.block("enc.b").w;

  nn::LstmState st = nn::lstm_zero_state(mp.spec.dims.hidden);
  EncoderOutputs out;
  out.outputs.resize(x.rows(), mp.spec.dims.hidden);
  for (long t = 0; t < x.rows(); ++t) {
    st = nn::lstm_cell(x.row(t), st, wx, wh, b);
    out.outputs.row(t) = st.h;
  }
  if (!out.outputs.allFinite()) throw NonFiniteError("encoder outputs");
  out.final_hidden = st.h.transpose();
  out.final_cell = st.c.transpose();
  return out;
}

DecoderState initial_decoder_state(const EncoderOutputs& enc) {
  return {enc.final_hidden, enc.final_cell, 0};
}

Eigen::VectorXd tag_representation(const ModelParams& mp, int label_index) {
  const Eigen::MatrixXd& table = mp.block("tag.table").w;
  if (label_index < 0 || label_index >= table.rows()) {
    throw std::out_of_range("tag label index " + std::to_string(label_index));
  }
  return table.row(label_index).transpose();
}

Eigen::VectorXd attention_weights(const AttentionParams& ap, const DecoderState& h_prev,
                                  const EncoderOutputs& enc) {
  const long n = enc.outputs.rows();
  if (n == 0) throw EmptyInputError("attention over empty encoder outputs");
  Eigen::RowVectorXd hw = h_prev.h.transpose() * ap.w_h;
  Eigen::VectorXd scores(n);
  for (long j = 0; j < n; ++j) {
    Eigen::RowVectorXd t = (hw + enc.outputs.row(j) * ap.w_o).array().tanh();
    scores(j) = t * ap.p;
  }
  if (!scores.allFinite()) throw NonFiniteError("attention scores");
  return nn::softmax(scores);
}

Eigen::VectorXd context_vector(const Eigen::VectorXd& alpha, const EncoderOutputs& enc) {
  if (alpha.size() != enc.outputs.rows()) {
    throw LengthMismatchError("attention weights vs encoder outputs");
  }
  return enc.outputs.transpose() * alpha;
}

namespace {

StepResult decode_step(const ModelParams& mp, const DecoderState& state, const Eigen::RowVectorXd& input,
                       Eigen::VectorXd alpha) {
  nn::LstmState prev{state.h.transpose(), state.c.transpose()};
  nn::LstmState next = nn::lstm_cell(input, prev, mp.block("dec.wx").w, mp.block("dec.wh").w, mp.block("dec.b").w);
  Eigen::RowVectorXd logits = next.h * mp.block("out.w").w + mp.block("out.b").w.row(0);
  if (!logits.allFinite()) throw NonFiniteError("decoder logits");
  return {logits.transpose(), {next.h.transpose(), next.c.transpose(), state.step + 1}, std::move(alpha)};
}

}  // namespace

StepResult decode_step_plain(const ModelParams& mp, const DecoderState& state,
                             const Eigen::VectorXd& last_tag_repr) {
  if (last_tag_repr.size() != mp.spec.dims.tag_repr_dim()) {
    throw DimensionMismatchError("tag representation width " + std::to_string(last_tag_repr.size()));
  }
  return decode_step(mp, state, last_tag_repr.transpose(), Eigen::VectorXd());
}

StepResult decode_step_attention(const ModelParams& mp, const DecoderState& state,
                                 const Eigen::VectorXd& last_tag_repr, const EncoderOutputs& enc) {
  if (last_tag_repr.size() != mp.spec.dims.tag_repr_dim()) {
    throw DimensionMismatchError("tag representation width " + std::to_string(last_tag_repr.size()));
  }
  AttentionParams ap = attention_params(mp);
  Eigen::VectorXd alpha = attention_weights(ap, state, enc);
  Eigen::VectorXd ctx = context_vector(alpha, enc);
  Eigen::RowVectorXd input(last_tag_repr.size() + ctx.size());
  input << last_tag_repr.transpose(), ctx.transpose();
  return decode_step(mp, state, input, std::move(alpha));
}

Eigen::MatrixXd forward(const ModelParams& mp, const emb::EmbeddedSequence& x, const std::vector<int>* gold,
                        bool teacher_forcing, Variant variant) {
  if (variant != mp.spec.variant) throw std::logic_error("forward variant does not match model");
  if (teacher_forcing && !gold) throw MissingGoldError("teacher forcing needs gold tags");
  if (gold && static_cast<long>(gold->size()) != x.rows()) {
    throw MissingGoldError("gold length " + std::to_string(gold->size()) + " vs input " + std::to_string(x.rows()));
  }

  EncoderOutputs enc = encode(mp, x);
  DecoderState state = initial_decoder_state(enc);
  Eigen::VectorXd repr = tag_representation(mp, mp.vocab.bos_index);

  Eigen::MatrixXd out(x.rows(), kTagCount);
  for (long t = 0; t < x.rows(); ++t) {
    StepResult step = variant == Variant::kAttention ? decode_step_attention(mp, state, repr, enc)
                                                     : decode_step_plain(mp, state, repr);
    out.row(t) = step.logits.transpose();
    state = std::move(step.state);
    int next_label = teacher_forcing ? (*gold)[static_cast<std::size_t>(t)]
                                     : nn::argmax_lowest(step.logits.transpose());
    repr = tag_representation(mp, next_label);
  }
  return out;
}

std::vector<Tag> greedy_parse(const ModelParams& mp, const emb::Provider& provider,
                              const std::vector<std::string>& tokens, Variant variant) {
  if (tokens.empty()) throw EmptyInputError("greedy_parse of empty token list");
  emb::EmbeddedSequence x = provider.embed_sequence(tokens);
  Eigen::MatrixXd logits = forward(mp, x, nullptr, false, variant);
  std::vector<Tag> tags;
  tags.reserve(tokens.size());
  for (long t = 0; t < logits.rows(); ++t) {
    tags.push_back(tag_from_index(nn::argmax_lowest(logits.row(t))));
  }
  return tags;
}

// --- batched graph builders ---------------------------------------------

ParamVars load_param_vars(ad::Tape& tape, ModelParams& mp) {
  ParamVars pv;
  pv.enc_wx = tape.param(mp.block("enc.wx"));
  pv.enc_wh = tape.param(mp.block("enc.wh"));
  pv.enc_b = tape.param(mp.block("enc.b"));
  pv.dec_wx = tape.param(mp.block("dec.wx"));
  pv.dec_wh = tape.param(mp.block("dec.wh"));
  pv.dec_b = tape.param(mp.block("dec.b"));
  if (mp.spec.variant == Variant::kAttention) {
    pv.att_wh = tape.param(mp.block("att.wh"));
    pv.att_wo = tape.param(mp.block("att.wo"));
    pv.att_p = tape.param(mp.block("att.p"));
  }
  pv.tag_table = tape.param(mp.block("tag.table"));
  pv.out_w = tape.param(mp.block("out.w"));
  pv.out_b = tape.param(mp.block("out.b"));
  if (mp.spec.adversarial) {
    pv.disc_w = tape.param(mp.block("disc.w"));
    pv.disc_b = tape.param(mp.block("disc.b"));
  }
  if (mp.spec.provider == emb::Kind::kBpeCombined) {
    pv.comb_fwd_wx = tape.param(mp.block("comb.fwd.wx"));
    pv.comb_fwd_wh = tape.param(mp.block("comb.fwd.wh"));
    pv.comb_fwd_b = tape.param(mp.block("comb.fwd.b"));
    pv.comb_bwd_wx = tape.param(mp.block("comb.bwd.wx"));
    pv.comb_bwd_wh = tape.param(mp.block("comb.bwd.wh"));
    pv.comb_bwd_b = tape.param(mp.block("comb.bwd.b"));
    pv.comb_proj_w = tape.param(mp.block("comb.proj.w"));
    pv.comb_proj_b = tape.param(mp.block("comb.proj.b"));
  }
  return pv;
}

namespace {

std::pair<ad::Var, ad::Var> lstm_cell_tape(ad::Tape& tape, ad::Var x, ad::Var h, ad::Var c, ad::Var wx,
                                           ad::Var wh, ad::Var b, int hidden) {
  ad::Var z = tape.add_rowvec(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b);
  ad::Var i = tape.sigmoid(tape.slice_cols(z, 0, hidden));
  ad::Var f = tape.sigmoid(tape.slice_cols(z, hidden, hidden));
  ad::Var g = tape.tanh(tape.slice_cols(z, 2 * hidden, hidden));
  ad::Var o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, hidden));
  ad::Var cn = tape.add(tape.hadamard(f, c), tape.hadamard(i, g));
  ad::Var hn = tape.hadamard(o, tape.tanh(cn));
  return {hn, cn};
}

// h := mask * h_new + (1 - mask) * h_prev, per row. Keeps short sequences'
// final states untouched past their length.
ad::Var freeze_rows(ad::Tape& tape, ad::Var h_new, ad::Var h_prev, const Eigen::ArrayXd& mask_col) {
  ad::Var m = tape.constant(mask_col.matrix());
  ad::Var inv = tape.constant((1.0 - mask_col).matrix());
  return tape.add(tape.row_scale(h_new, m), tape.row_scale(h_prev, inv));
}

struct AttStep {
  ad::Var ctx;
  ad::Var alpha;
};

AttStep attend(ad::Tape& tape, const ParamVars& pv, const EncodedBatch& enc, ad::Var h_prev,
               const Eigen::ArrayXXd& mask) {
  ad::Var hw = tape.matmul(h_prev, pv.att_wh);
  std::vector<ad::Var> cols;
  cols.reserve(enc.outputs.size());
  for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
    ad::Var t = tape.tanh(tape.add(hw, enc.att_keys[j]));
    cols.push_back(tape.matmul(t, pv.att_p));
  }
  ad::Var scores = tape.hconcat(cols);
  Eigen::MatrixXd m = mask.matrix();
  ad::Var alpha = tape.softmax_rows(scores, &m);
  ad::Var ctx;
  for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
    ad::Var term = tape.row_scale(enc.outputs[j], tape.slice_cols(alpha, static_cast<int>(j), 1));
    ctx = j == 0 ? term : tape.add(ctx, term);
  }
  return {ctx, alpha};
}

}  // namespace

std::vector<ad::Var> build_input_steps(ad::Tape& tape, const ParamVars& pv, ModelParams& mp,
                                       const emb::Provider& provider, const data::Batch& batch) {
  const int B = batch.size();
  const int T = batch.max_len();
  const int E = mp.spec.dims.embed;
  if (B == 0 || T == 0) throw EmptyBatchError("no tokens to embed");
  if (provider.dimension() != E) {
    throw DimensionMismatchError("provider emits " + std::to_string(provider.dimension()) +
                                 "-dim vectors, model expects " + std::to_string(E));
  }

  std::vector<ad::Var> steps;
  steps.reserve(static_cast<std::size_t>(T));

  if (provider.kind() != emb::Kind::kBpeCombined) {
    std::unordered_map<std::string, Eigen::VectorXd> cache;
    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(B, E);
      for (int r = 0; r < B; ++r) {
        const std::string& tok = batch.tokens[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)];
        if (tok.empty()) continue;  // padding
        auto it = cache.find(tok);
        if (it == cache.end()) it = cache.emplace(tok, provider.embed_word(tok)).first;
        m.row(r) = it->second.transpose();
      }
      steps.push_back(tape.constant(std::move(m)));
    }
    return steps;
  }

  // Byte-pair route: run every unique token of the batch through the
  // trainable combiner once, then gather rows per time step.
  std::vector<std::string> uniq;
  std::unordered_map<std::string, int> index;
  for (const auto& row : batch.tokens) {
    for (const auto& tok : row) {
      if (!tok.empty() && !index.count(tok)) {
        index.emplace(tok, static_cast<int>(uniq.size()));
        uniq.push_back(tok);
      }
    }
  }

  std::vector<std::vector<std::string>> units(uniq.size());
  std::size_t max_units = 1;
  for (std::size_t u = 0; u < uniq.size(); ++u) {
    units[u] = emb::subword_segment(uniq[u]);
    max_units = std::max(max_units, units[u].size());
  }

  const long U = static_cast<long>(uniq.size());
  const int H = E;  // combiner hidden width equals the embedding width
  Eigen::ArrayXXd umask = Eigen::ArrayXXd::Zero(U, static_cast<long>(max_units));
  std::vector<Eigen::MatrixXd> xs(max_units, Eigen::MatrixXd::Zero(U, E));
  for (long u = 0; u < U; ++u) {
    for (std::size_t k = 0; k < units[static_cast<std::size_t>(u)].size(); ++k) {
      xs[k].row(u) = provider.unit_vector(units[static_cast<std::size_t>(u)][k]).transpose();
      umask(u, static_cast<long>(k)) = 1.0;
    }
  }

  ad::Var hf = tape.constant(Eigen::MatrixXd::Zero(U, H));
  ad::Var cf = hf;
  std::vector<ad::Var> unit_steps;
  unit_steps.reserve(max_units);
  for (std::size_t k = 0; k < max_units; ++k) unit_steps.push_back(tape.constant(xs[k]));
  for (std::size_t k = 0; k < max_units; ++k) {
    auto [hn, cn] = lstm_cell_tape(tape, unit_steps[k], hf, cf, pv.comb_fwd_wx, pv.comb_fwd_wh, pv.comb_fwd_b, H);
    if (umask.col(static_cast<long>(k)).minCoeff() == 1.0) {
      hf = hn;
      cf = cn;
    } else {
      hf = freeze_rows(tape, hn, hf, umask.col(static_cast<long>(k)));
      cf = freeze_rows(tape, cn, cf, umask.col(static_cast<long>(k)));
    }
  }
  ad::Var hb = tape.constant(Eigen::MatrixXd::Zero(U, H));
  ad::Var cb = hb;
  for (std::size_t k = max_units; k-- > 0;) {
    auto [hn, cn] = lstm_cell_tape(tape, unit_steps[k], hb, cb, pv.comb_bwd_wx, pv.comb_bwd_wh, pv.comb_bwd_b, H);
    if (umask.col(static_cast<long>(k)).minCoeff() == 1.0) {
      hb = hn;
      cb = cn;
    } else {
      hb = freeze_rows(tape, hn, hb, umask.col(static_cast<long>(k)));
      cb = freeze_rows(tape, cn, cb, umask.col(static_cast<long>(k)));
    }
  }
  ad::Var both = tape.hconcat({hf, hb});
  ad::Var token_vecs = tape.add_rowvec(tape.matmul(both, pv.comb_proj_w), pv.comb_proj_b);

  for (int t = 0; t < T; ++t) {
    std::vector<int> idx(static_cast<std::size_t>(B), 0);
    Eigen::ArrayXd real = Eigen::ArrayXd::Zero(B);
    for (int r = 0; r < B; ++r) {
      const std::string& tok = batch.tokens[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)];
      if (!tok.empty()) {
        idx[static_cast<std::size_t>(r)] = index.at(tok);
        real(r) = 1.0;
      }
    }
    ad::Var gathered = tape.gather_rows(token_vecs, std::move(idx));
    if (real.minCoeff() == 1.0) {
      steps.push_back(gathered);
    } else {
      // zero rows at padding so pad positions carry no signal
      steps.push_back(tape.row_scale(gathered, tape.constant(real.matrix())));
    }
  }
  return steps;
}

EncodedBatch build_encoder(ad::Tape& tape, const ParamVars& pv, const ModelParams& mp,
                           const std::vector<ad::Var>& inputs, const data::Batch& batch) {
  const int B = batch.size();
  const int T = static_cast<int>(inputs.size());
  const int H = mp.spec.dims.hidden;
  if (B == 0 || T == 0) throw EmptyBatchError("encoder over empty batch");

  EncodedBatch enc;
  ad::Var h = tape.constant(Eigen::MatrixXd::Zero(B, H));
  ad::Var c = h;
  for (int t = 0; t < T; ++t) {
    auto [hn, cn] = lstm_cell_tape(tape, inputs[static_cast<std::size_t>(t)], h, c, pv.enc_wx, pv.enc_wh, pv.enc_b, H);
    if (batch.mask.col(t).minCoeff() == 1.0) {
      h = hn;
      c = cn;
    } else {
      h = freeze_rows(tape, hn, h, batch.mask.col(t));
      c = freeze_rows(tape, cn, c, batch.mask.col(t));
    }
    enc.outputs.push_back(h);
  }
  enc.final_h = h;
  enc.final_c = c;
  if (mp.spec.variant == Variant::kAttention) {
    enc.att_keys.reserve(enc.outputs.size());
    for (ad::Var o : enc.outputs) enc.att_keys.push_back(tape.matmul(o, pv.att_wo));
  }
  return enc;
}

DecodeOutput build_decoder(ad::Tape& tape, const ParamVars& pv, const ModelParams& mp, const EncodedBatch& enc,
                           const data::Batch& batch, bool teacher_forcing, bool with_loss) {
  const int B = batch.size();
  const int T = static_cast<int>(enc.outputs.size());
  const int H = mp.spec.dims.hidden;
  const bool attention = mp.spec.variant == Variant::kAttention;
  const double total_tokens = batch.mask.sum();

  DecodeOutput out;
  ad::Var h = enc.final_h;
  ad::Var c = enc.final_c;
  std::vector<int> labels(static_cast<std::size_t>(B), mp.vocab.bos_index);

  for (int t = 0; t < T; ++t) {
    ad::Var repr = tape.gather_rows(pv.tag_table, labels);
    ad::Var x = repr;
    if (attention) {
      AttStep att = attend(tape, pv, enc, h, batch.mask);
      x = tape.hconcat({repr, att.ctx});
      out.alphas.push_back(tape.value(att.alpha));
    }
    auto [hn, cn] = lstm_cell_tape(tape, x, h, c, pv.dec_wx, pv.dec_wh, pv.dec_b, H);
    h = hn;
    c = cn;
    ad::Var logits = tape.add_rowvec(tape.matmul(h, pv.out_w), pv.out_b);
    out.logits.push_back(logits);

    if (with_loss) {
      std::vector<int> targets(static_cast<std::size_t>(B), 0);
      Eigen::VectorXd weights(B);
      for (int r = 0; r < B; ++r) {
        bool real = batch.mask(r, t) != 0.0;
        targets[static_cast<std::size_t>(r)] = real ? batch.tag_matrix(r, t) : 0;
        weights(r) = real ? 1.0 : 0.0;
      }
      ad::Var ce = tape.cross_entropy(logits, std::move(targets), std::move(weights), total_tokens);
      out.loss = out.loss.valid() ? tape.add(out.loss, ce) : ce;
    }

    for (int r = 0; r < B; ++r) {
      if (teacher_forcing) {
        labels[static_cast<std::size_t>(r)] = batch.tag_matrix(r, t);  // pad row at padded steps
      } else {
        labels[static_cast<std::size_t>(r)] = nn::argmax_lowest(tape.value(logits).row(r));
      }
    }
  }
  return out;
}

std::vector<std::vector<Tag>> greedy_parse_batch(ModelParams& mp, const emb::Provider& provider,
                                                 const data::Batch& batch) {
  if (batch.size() == 0) throw EmptyBatchError("greedy parse of empty batch");
  ad::Tape tape;
  ParamVars pv = load_param_vars(tape, mp);
  std::vector<ad::Var> inputs = build_input_steps(tape, pv, mp, provider, batch);
  EncodedBatch enc = build_encoder(tape, pv, mp, inputs, batch);
  DecodeOutput dec = build_decoder(tape, pv, mp, enc, batch, /*teacher_forcing=*/false, /*with_loss=*/false);

  std::vector<std::vector<Tag>> tags(static_cast<std::size_t>(batch.size()));
  for (int r = 0; r < batch.size(); ++r) {
    int len = batch.lengths[static_cast<std::size_t>(r)];
    tags[static_cast<std::size_t>(r)].reserve(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      const Eigen::MatrixXd& lg = tape.value(dec.logits[static_cast<std::size_t>(t)]);
      if (!lg.row(r).allFinite()) throw NonFiniteError("decoder logits");
      tags[static_cast<std::size_t>(r)].push_back(tag_from_index(nn::argmax_lowest(lg.row(r))));
    }
  }
  return tags;
}

double batch_loss_value(ModelParams& mp, const emb::Provider& provider, const data::Batch& batch) {
  if (batch.size() == 0) throw EmptyBatchError("loss of empty batch");
  ad::Tape tape;
  ParamVars pv = load_param_vars(tape, mp);
  std::vector<ad::Var> inputs = build_input_steps(tape, pv, mp, provider, batch);
  EncodedBatch enc = build_encoder(tape, pv, mp, inputs, batch);
  DecodeOutput dec = build_decoder(tape, pv, mp, enc, batch, /*teacher_forcing=*/true, /*with_loss=*/true);
  return tape.value(dec.loss)(0, 0);
}

}  // namespace addrtag::model
