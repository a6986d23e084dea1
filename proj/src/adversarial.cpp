#include "addrtag/adversarial.hpp"

#include <cmath>
#include <random>

#include "addrtag/util.hpp"

namespace addrtag::adv {

Eigen::Vector2d discriminate_domain(const model::ModelParams& mp, const Eigen::VectorXd& context) {
  if (!context.allFinite()) throw NonFiniteError("discriminator input");
  const Eigen::MatrixXd& w = mp.block("disc.w").w;
  const Eigen::MatrixXd& b = mp.block("disc.b").w;
  if (context.size() != w.rows()) throw DimensionMismatchError("discriminator context width");
  return (context.transpose() * w + b.row(0)).transpose();
}

std::vector<DomainPair> adann_pairing(const std::vector<std::string>& countries, std::uint64_t epoch_seed) {
  if (countries.size() < 2) throw TooFewDomainsError("pairing needs at least two countries");
  std::mt19937_64 rng(epoch_seed);
  std::vector<std::string> order = countries;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  std::vector<DomainPair> pairs;
  pairs.reserve(order.size());
  for (const auto& source : order) {
    std::size_t pick = rng() % (countries.size() - 1);
    for (const auto& target : countries) {
      if (target == source) continue;
      if (pick == 0) {
        pairs.push_back({source, target});
        break;
      }
      --pick;
    }
  }
  return pairs;
}

namespace {

// Domain classification loss: reversed gradient into the encoder context,
// plain gradient into the discriminator weights.
ad::Var domain_loss(ad::Tape& tape, const model::ParamVars& pv, ad::Var context, int label, double lambda) {
  ad::Var rev = tape.grad_reverse(context, lambda);
  ad::Var logits = tape.add_rowvec(tape.matmul(rev, pv.disc_w), pv.disc_b);
  const long b = tape.value(logits).rows();
  std::vector<int> targets(static_cast<std::size_t>(b), label);
  return tape.cross_entropy(logits, std::move(targets), Eigen::VectorXd::Ones(b), static_cast<double>(b));
}

}  // namespace

AdvLossVars build_adversarial_loss(ad::Tape& tape, const model::ParamVars& pv, model::ModelParams& mp,
                                   const emb::Provider& provider, const data::Batch& source,
                                   const data::Batch& target, double lambda) {
  if (source.size() == 0 || target.size() == 0) throw EmptyBatchError("adversarial loss");
  if (!mp.spec.adversarial) throw std::logic_error("model has no domain discriminator");
  if (lambda < 0.0) throw std::invalid_argument("grl lambda must be >= 0");

  AdvLossVars out;

  std::vector<ad::Var> src_inputs = model::build_input_steps(tape, pv, mp, provider, source);
  model::EncodedBatch src_enc = model::build_encoder(tape, pv, mp, src_inputs, source);
  model::DecodeOutput dec = model::build_decoder(tape, pv, mp, src_enc, source, /*teacher_forcing=*/true,
                                                 /*with_loss=*/true);
  out.task = dec.loss;
  out.domain_source = domain_loss(tape, pv, src_enc.final_h, 0, lambda);

  std::vector<ad::Var> tgt_inputs = model::build_input_steps(tape, pv, mp, provider, target);
  model::EncodedBatch tgt_enc = model::build_encoder(tape, pv, mp, tgt_inputs, target);
  out.domain_target = domain_loss(tape, pv, tgt_enc.final_h, 1, lambda);

  out.total = tape.add(tape.add(out.task, out.domain_source), out.domain_target);
  return out;
}

AdvLossValues adversarial_batch_loss(model::ModelParams& mp, const emb::Provider& provider,
                                     const data::Batch& source, const data::Batch& target, double lambda,
                                     bool accumulate_grads) {
  if (source.size() > 0 && target.size() > 0 && !source.countries.empty() && !target.countries.empty() &&
      source.countries.front() == target.countries.front()) {
    throw std::invalid_argument("source and target batches must come from different countries");
  }
  ad::Tape tape;
  model::ParamVars pv = model::load_param_vars(tape, mp);
  AdvLossVars vars = build_adversarial_loss(tape, pv, mp, provider, source, target, lambda);
  if (accumulate_grads) tape.backward(vars.total);
  return {tape.value(vars.task)(0, 0), tape.value(vars.domain_source)(0, 0),
          tape.value(vars.domain_target)(0, 0), tape.value(vars.total)(0, 0)};
}

}  // namespace addrtag::adv
