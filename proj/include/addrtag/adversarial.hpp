#ifndef ADDRTAG_ADVERSARIAL_HPP
#define ADDRTAG_ADVERSARIAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "addrtag/autodiff.hpp"
#include "addrtag/dataset.hpp"
#include "addrtag/embeddings.hpp"
#include "addrtag/model.hpp"

namespace addrtag::adv {

// Class 0 is the source domain, class 1 the target domain.
Eigen::Vector2d discriminate_domain(const model::ModelParams& mp, const Eigen::VectorXd& context);

struct DomainPair {
  std::string source;
  std::string target;
};

// One sweep: every country appears as source exactly once, paired with a
// uniformly drawn other country. Deterministic for a fixed epoch seed.
std::vector<DomainPair> adann_pairing(const std::vector<std::string>& countries, std::uint64_t epoch_seed);

struct AdvLossVars {
  ad::Var task;           // masked cross-entropy on the source batch
  ad::Var domain_source;  // discriminator loss on source contexts (label 0)
  ad::Var domain_target;  // discriminator loss on target contexts (label 1)
  ad::Var total;
};

// Builds task + domain losses on the tape. The domain terms pass through a
// gradient reversal before the discriminator, so the encoder receives the
// reversed gradient while the discriminator's own weights do not.
AdvLossVars build_adversarial_loss(ad::Tape& tape, const model::ParamVars& pv, model::ModelParams& mp,
                                   const emb::Provider& provider, const data::Batch& source,
                                   const data::Batch& target, double lambda);

struct AdvLossValues {
  double task;
  double domain_source;
  double domain_target;
  double total;
};

// Value-level wrapper; when accumulate_grads is set, backpropagates the total
// objective into the model's gradient blocks.
AdvLossValues adversarial_batch_loss(model::ModelParams& mp, const emb::Provider& provider,
                                     const data::Batch& source, const data::Batch& target, double lambda,
                                     bool accumulate_grads = false);

}  // namespace addrtag::adv

#endif  // ADDRTAG_ADVERSARIAL_HPP
