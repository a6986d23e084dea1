#include <cmath>
#include <random>

#include "addrtag/evaluation.hpp"
#include "addrtag/model.hpp"
#include "addrtag/nn_math.hpp"
#include "doctest.h"
#include "support/fd_check.hpp"
#include "support/toy_grammar.hpp"

using namespace addrtag;
using namespace addrtag::model;

namespace {

// Provider-fed models keep the 300-dim embedding contract; only the hidden
// side is scaled down.
ModelSpec tiny_spec(Variant variant, bool adversarial = false, emb::Kind kind = emb::Kind::kFallback) {
  ModelSpec spec;
  spec.variant = variant;
  spec.adversarial = adversarial;
  spec.provider = kind;
  spec.dims.embed = 300;
  spec.dims.hidden = 5;
  spec.dims.attention = 4;
  spec.dims.tag_repr = 3;
  return spec;
}

ModelSpec micro_spec(Variant variant) {
  ModelSpec spec = tiny_spec(variant);
  spec.dims.embed = 6;
  return spec;
}

emb::EmbeddedSequence random_embedded(std::mt19937_64& rng, int n, int dim) {
  emb::EmbeddedSequence x(n, dim);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < dim; ++c) x(r, c) = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
  }
  return x;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("encoder emits one <hidden> vector per input step") {
  ModelParams mp = ModelParams::create(micro_spec(Variant::kBase));
  mp.init(1);
  std::mt19937_64 rng(2);
  EncoderOutputs enc = encode(mp, random_embedded(rng, 4, 6));
  CHECK(enc.outputs.rows() == 4);
  CHECK(enc.outputs.cols() == 5);
  CHECK(enc.final_hidden == enc.outputs.row(3).transpose());

  EncoderOutputs one = encode(mp, random_embedded(rng, 1, 6));
  CHECK(one.final_hidden == one.outputs.row(0).transpose());

  CHECK_THROWS_AS(encode(mp, emb::EmbeddedSequence(0, 6)), EmptyInputError);
}

TEST_CASE("zero weights and zero input collapse the recurrence to zero") {
  ModelParams mp = ModelParams::create(micro_spec(Variant::kBase));  // zero-initialized blocks
  EncoderOutputs enc = encode(mp, emb::EmbeddedSequence::Zero(3, 6));
  CHECK(enc.outputs.cwiseAbs().maxCoeff() == 0.0);
  CHECK(enc.final_cell.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention weights are uniform when all scores agree") {
  AttentionParams ap;
  ap.w_h = Eigen::MatrixXd::Zero(2, 1);
  ap.w_o = Eigen::MatrixXd::Zero(2, 1);
  ap.p = Eigen::VectorXd::Ones(1);
  EncoderOutputs enc;
  enc.outputs = Eigen::MatrixXd::Random(3, 2);
  DecoderState state{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), 0};
  Eigen::VectorXd alpha = attention_weights(ap, state, enc);
  for (int i = 0; i < 3; ++i) CHECK(alpha(i) == doctest::Approx(1.0 / 3));
}

TEST_CASE("attention weights for scores (ln 2, 0) are (2/3, 1/3)") {
  AttentionParams ap;
  ap.w_h = Eigen::MatrixXd::Zero(2, 1);
  ap.w_o = Eigen::MatrixXd::Zero(2, 1);
  ap.w_o(0, 0) = 1.0;
  ap.p = Eigen::VectorXd::Ones(1);
  EncoderOutputs enc;
  enc.outputs = Eigen::MatrixXd::Zero(2, 2);
  enc.outputs(0, 0) = std::atanh(std::log(2.0));
  DecoderState state{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), 0};
  Eigen::VectorXd alpha = attention_weights(ap, state, enc);
  CHECK(alpha(0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(alpha(1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("single encoder step gets full attention") {
  ModelParams mp = ModelParams::create(micro_spec(Variant::kAttention));
  mp.init(3);
  std::mt19937_64 rng(4);
  EncoderOutputs enc = encode(mp, random_embedded(rng, 1, 6));
  DecoderState state = initial_decoder_state(enc);
  Eigen::VectorXd alpha = attention_weights(attention_params(mp), state, enc);
  REQUIRE(alpha.size() == 1);
  CHECK(alpha(0) == doctest::Approx(1.0));

  StepResult step = decode_step_attention(mp, state, tag_representation(mp, mp.vocab.bos_index), enc);
  CHECK(step.alpha.size() == 1);
  CHECK(step.logits.size() == kTagCount);
}

TEST_CASE("attention normalization holds for random draws of all lengths") {
  std::mt19937_64 rng(5);
  ModelParams mp = ModelParams::create(micro_spec(Variant::kAttention));
  for (int trial = 0; trial < 200; ++trial) {
    mp.init(static_cast<std::uint64_t>(trial));
    int n = 1 + static_cast<int>(rng() % 64);
    EncoderOutputs enc;
    enc.outputs = random_embedded(rng, n, 5) * 3.0;
    DecoderState state{random_embedded(rng, 1, 5).row(0).transpose() * 2.0, Eigen::VectorXd::Zero(5), 0};
    Eigen::VectorXd alpha = attention_weights(attention_params(mp), state, enc);
    CHECK(alpha.minCoeff() >= 0.0);
    CHECK(std::abs(alpha.sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("permuting encoder outputs permutes the attention weights identically") {
  std::mt19937_64 rng(6);
  ModelParams mp = ModelParams::create(micro_spec(Variant::kAttention));
  mp.init(11);
  EncoderOutputs enc;
  enc.outputs = random_embedded(rng, 5, 5);
  DecoderState state{random_embedded(rng, 1, 5).row(0).transpose(), Eigen::VectorXd::Zero(5), 0};
  Eigen::VectorXd alpha = attention_weights(attention_params(mp), state, enc);

  std::vector<int> perm = {3, 0, 4, 1, 2};
  EncoderOutputs shuffled;
  shuffled.outputs.resize(5, 5);
  for (int i = 0; i < 5; ++i) shuffled.outputs.row(i) = enc.outputs.row(perm[i]);
  Eigen::VectorXd alpha2 = attention_weights(attention_params(mp), state, shuffled);
  for (int i = 0; i < 5; ++i) CHECK(alpha2(i) == doctest::Approx(alpha(perm[i])).epsilon(1e-12));
}

TEST_CASE("context vector is the alpha-weighted combination of encoder outputs") {
  std::mt19937_64 rng(7);
  EncoderOutputs enc;
  enc.outputs = random_embedded(rng, 4, 6);

  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(4);
  onehot(2) = 1.0;
  CHECK(context_vector(onehot, enc) == enc.outputs.row(2).transpose());

  EncoderOutputs two;
  two.outputs = random_embedded(rng, 2, 6);
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd mid = context_vector(uniform, two);
  CHECK((mid - 0.5 * (two.outputs.row(0) + two.outputs.row(1)).transpose()).cwiseAbs().maxCoeff() < 1e-15);

  // naive summation oracle
  Eigen::VectorXd alpha(4);
  alpha << 0.1, 0.2, 0.3, 0.4;
  Eigen::VectorXd naive = Eigen::VectorXd::Zero(6);
  for (int j = 0; j < 4; ++j) {
    for (int d = 0; d < 6; ++d) naive(d) += alpha(j) * enc.outputs(j, d);
  }
  CHECK((context_vector(alpha, enc) - naive).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::VectorXd wrong(3);
  wrong << 1, 0, 0;
  CHECK_THROWS_AS(context_vector(wrong, enc), LengthMismatchError);
}

TEST_CASE("plain decode step emits eight finite logits, deterministically") {
  ModelParams mp = ModelParams::create(micro_spec(Variant::kBase));
  mp.init(13);
  std::mt19937_64 rng(8);
  EncoderOutputs enc = encode(mp, random_embedded(rng, 3, 6));
  DecoderState state = initial_decoder_state(enc);
  Eigen::VectorXd bos = tag_representation(mp, mp.vocab.bos_index);
  StepResult a = decode_step_plain(mp, state, bos);
  StepResult b = decode_step_plain(mp, state, bos);
  CHECK(a.logits.size() == kTagCount);
  CHECK(a.logits.allFinite());
  CHECK(a.logits == b.logits);
  CHECK(a.state.step == 1);
  CHECK(a.alpha.size() == 0);
}

TEST_CASE("forward emits exactly one logit row per token") {
  for (Variant v : {Variant::kBase, Variant::kAttention}) {
    ModelParams mp = ModelParams::create(micro_spec(v));
    mp.init(17);
    std::mt19937_64 rng(9);
    Eigen::MatrixXd logits = forward(mp, random_embedded(rng, 3, 6), nullptr, false, v);
    CHECK(logits.rows() == 3);
    CHECK(logits.cols() == kTagCount);
  }
}

TEST_CASE("teacher forcing consumes gold shifted by one step") {
  ModelParams mp = ModelParams::create(micro_spec(Variant::kBase));
  mp.init(19);
  std::mt19937_64 rng(10);
  emb::EmbeddedSequence x = random_embedded(rng, 4, 6);
  std::vector<int> gold = {0, 0, 5, 2};

  Eigen::MatrixXd base = forward(mp, x, &gold, true, Variant::kBase);

  // gold[3] is never consumed (only n steps), so changing it changes nothing
  std::vector<int> tail = gold;
  tail[3] = 7;
  CHECK(forward(mp, x, &tail, true, Variant::kBase) == base);

  // changing gold[1] can only influence steps 3 and 4
  std::vector<int> mid = gold;
  mid[1] = 7;
  Eigen::MatrixXd changed = forward(mp, x, &mid, true, Variant::kBase);
  CHECK(changed.row(0) == base.row(0));
  CHECK(changed.row(1) == base.row(1));
  CHECK((changed.row(2) - base.row(2)).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(forward(mp, x, nullptr, true, Variant::kBase), MissingGoldError);
  std::vector<int> short_gold = {0, 1};
  CHECK_THROWS_AS(forward(mp, x, &short_gold, true, Variant::kBase), MissingGoldError);
}

TEST_CASE("greedy parse keeps length, tag range and breaks ties low") {
  emb::Provider provider = emb::Provider::fallback();
  ModelParams mp = ModelParams::create(tiny_spec(Variant::kBase));
  mp.init(23);
  std::vector<std::string> tokens = {"221", "B", "Baker", "Street", "London"};
  std::vector<Tag> tags = greedy_parse(mp, provider, tokens, Variant::kBase);
  REQUIRE(tags.size() == tokens.size());
  for (Tag t : tags) CHECK(tag_index(t) < kTagCount);

  // zero output projection: every step ties across all eight logits
  mp.block("out.w").w.setZero();
  mp.block("out.b").w.setZero();
  for (Tag t : greedy_parse(mp, provider, tokens, Variant::kBase)) CHECK(t == Tag::kStreetNumber);
}

TEST_CASE("adding a constant to all logits never changes the parse") {
  emb::Provider provider = emb::Provider::fallback();
  for (Variant v : {Variant::kBase, Variant::kAttention}) {
    ModelParams mp = ModelParams::create(tiny_spec(v));
    mp.init(29);
    std::vector<std::string> tokens = {"10", "Main", "Road", "Paris", "75008"};
    std::vector<Tag> before = greedy_parse(mp, provider, tokens, v);
    mp.block("out.b").w.array() += 3.25;  // shifts every logit equally
    CHECK(greedy_parse(mp, provider, tokens, v) == before);
  }
}

TEST_CASE("batched pipeline agrees with the single-sample path") {
  emb::Provider provider = emb::Provider::fallback();
  toy::Generator gen(31);
  std::vector<AddressSample> samples = gen.generate('A', 6, "US");
  TagVocabulary vocab;

  for (Variant v : {Variant::kBase, Variant::kAttention}) {
    ModelParams mp = ModelParams::create(tiny_spec(v));
    mp.init(37);
    auto batches = data::make_batches(samples, 6, vocab, std::nullopt);  // mixed lengths, one batch
    REQUIRE(batches.size() == 1);
    auto batched = greedy_parse_batch(mp, provider, batches[0]);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      CHECK(batched[i] == greedy_parse(mp, provider, samples[i].tokens, v));
    }
  }
}

TEST_CASE("padded attention matches the unpadded slice and zeroes pad positions") {
  emb::Provider provider = emb::Provider::fallback();
  ModelParams mp = ModelParams::create(tiny_spec(Variant::kAttention));
  mp.init(41);

  AddressSample short_s{{"221", "Baker"}, {Tag::kStreetNumber, Tag::kStreetName}, "US"};
  AddressSample long_s{{"10", "Main", "Road", "Paris"},
                       {Tag::kStreetNumber, Tag::kStreetName, Tag::kStreetName, Tag::kMunicipality},
                       "US"};
  TagVocabulary vocab;
  auto batches = data::make_batches({short_s, long_s}, 2, vocab, std::nullopt);
  REQUIRE(batches.size() == 1);

  ad::Tape tape;
  ParamVars pv = load_param_vars(tape, mp);
  auto inputs = build_input_steps(tape, pv, mp, provider, batches[0]);
  EncodedBatch enc = build_encoder(tape, pv, mp, inputs, batches[0]);
  DecodeOutput dec = build_decoder(tape, pv, mp, enc, batches[0], /*teacher_forcing=*/true, /*with_loss=*/false);
  REQUIRE(dec.alphas.size() == 4);

  // single-sample route over the short sample
  EncoderOutputs senc = encode(mp, provider.embed_sequence(short_s.tokens));
  DecoderState state = initial_decoder_state(senc);
  Eigen::VectorXd repr = tag_representation(mp, vocab.bos_index);
  for (int t = 0; t < 2; ++t) {
    StepResult step = decode_step_attention(mp, state, repr, senc);
    for (int j = 0; j < 2; ++j) {
      CHECK(dec.alphas[static_cast<std::size_t>(t)](0, j) == doctest::Approx(step.alpha(j)).epsilon(1e-10));
    }
    // padded positions carry exactly zero attention
    CHECK(dec.alphas[static_cast<std::size_t>(t)](0, 2) == 0.0);
    CHECK(dec.alphas[static_cast<std::size_t>(t)](0, 3) == 0.0);
    state = step.state;
    repr = tag_representation(mp, tag_index(short_s.tags[static_cast<std::size_t>(t)]));
  }
}

TEST_CASE("analytic gradients of the tagging loss match finite differences") {
  emb::Provider provider = emb::Provider::fallback();
  toy::Generator gen(43);
  std::vector<AddressSample> samples = gen.generate('A', 3, "US");
  TagVocabulary vocab;

  for (Variant v : {Variant::kBase, Variant::kAttention}) {
    ModelParams mp = ModelParams::create(micro_spec(v));
    mp.spec.provider = emb::Kind::kFallback;
    mp.spec.dims.embed = 300;
    mp = ModelParams::create(mp.spec);
    mp.init(47);
    auto batches = data::make_batches(samples, 3, vocab, std::nullopt);

    ad::Tape tape;
    ParamVars pv = load_param_vars(tape, mp);
    auto inputs = build_input_steps(tape, pv, mp, provider, batches[0]);
    EncodedBatch enc = build_encoder(tape, pv, mp, inputs, batches[0]);
    DecodeOutput dec = build_decoder(tape, pv, mp, enc, batches[0], true, true);
    tape.backward(dec.loss);

    auto loss_value = [&]() { return batch_loss_value(mp, provider, batches[0]); };
    auto report = testsupport::finite_difference_check(mp.set, loss_value, 1e-5, 12);
    INFO(variant_to_string(v) << " worst: " << report.worst);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("combiner gradients flow through the batched byte-pair route") {
  emb::Provider provider = emb::Provider::bpe_combined();
  AddressSample s{{"221", "Baker"}, {Tag::kStreetNumber, Tag::kStreetName}, "US"};
  TagVocabulary vocab;

  ModelSpec spec = tiny_spec(Variant::kBase, false, emb::Kind::kBpeCombined);
  ModelParams mp = ModelParams::create(spec);
  mp.init(59);
  auto batches = data::make_batches({s}, 1, vocab, std::nullopt);

  ad::Tape tape;
  ParamVars pv = load_param_vars(tape, mp);
  auto inputs = build_input_steps(tape, pv, mp, provider, batches[0]);
  EncodedBatch enc = build_encoder(tape, pv, mp, inputs, batches[0]);
  DecodeOutput dec = build_decoder(tape, pv, mp, enc, batches[0], true, true);
  tape.backward(dec.loss);

  double comb_grad = 0.0;
  for (const char* name : {"comb.fwd.wx", "comb.bwd.wx", "comb.proj.w"}) {
    comb_grad += mp.block(name).g.cwiseAbs().sum();
  }
  CHECK(comb_grad > 0.0);

  auto loss_value = [&]() { return batch_loss_value(mp, provider, batches[0]); };
  auto report = testsupport::finite_difference_check(mp.set, loss_value, 1e-5, 4);
  INFO(report.worst);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("pure combiner and batched combiner agree") {
  emb::Provider provider = emb::Provider::bpe_combined();
  ModelSpec spec = tiny_spec(Variant::kBase, false, emb::Kind::kBpeCombined);
  ModelParams mp = ModelParams::create(spec);
  mp.init(61);
  provider.bind_combiner(mp.combiner());

  AddressSample s{{"Baker", "Street"}, {Tag::kStreetName, Tag::kStreetName}, "US"};
  TagVocabulary vocab;
  auto batches = data::make_batches({s}, 1, vocab, std::nullopt);

  ad::Tape tape;
  ParamVars pv = load_param_vars(tape, mp);
  auto inputs = build_input_steps(tape, pv, mp, provider, batches[0]);
  for (int t = 0; t < 2; ++t) {
    Eigen::VectorXd pure = provider.embed_word(s.tokens[static_cast<std::size_t>(t)]);
    Eigen::VectorXd taped = tape.value(inputs[static_cast<std::size_t>(t)]).row(0).transpose();
    CHECK((pure - taped).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_SUITE_END();
