#ifndef ADDRTAG_TRAINING_HPP
#define ADDRTAG_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "addrtag/dataset.hpp"
#include "addrtag/embeddings.hpp"
#include "addrtag/model.hpp"
#include "addrtag/types.hpp"

namespace addrtag::train {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 512;  // the adversarial family trains at 256
  double lr0 = 0.1;
  double lr_decay_factor = 0.1;
  int lr_patience_epochs = 10;
  int early_stop_patience = 15;
  std::vector<std::uint64_t> seeds = {5, 10, 15, 20, 25};
  std::uint64_t retry_seed = 30;
  double improvement_tol = 1e-6;  // a loss must drop by at least this to count
  double nonconvergence_threshold = 0.80;
  double teacher_forcing_ratio = 1.0;
  double grl_lambda = 1.0;
  // Step-size multiplier for the discriminator head. The unbounded linear
  // head needs a smaller stable step than the gate-saturated recurrent
  // blocks when the global rate is pushed high.
  double disc_lr_scale = 1.0;
  // Optional per-epoch lambda override; defaults to constant grl_lambda.
  std::function<double(int)> grl_lambda_schedule;

  double lambda_at(int epoch) const {
    return grl_lambda_schedule ? grl_lambda_schedule(epoch) : grl_lambda;
  }
  int effective_batch_size(bool adversarial) const {
    if (batch_size > 0) return batch_size;
    return adversarial ? 256 : 512;
  }
};

// Lowers the learning rate by `factor` after `patience` consecutive epochs
// without loss reduction; the counter resets after each decay.
struct PlateauScheduler {
  double lr;
  double factor;
  int patience;
  double tol;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  double step(double epoch_val_loss);
};

struct EarlyStopper {
  int patience;
  double tol;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int best_epoch = -1;

  // Returns true when training should stop after this epoch.
  bool step(int epoch, double epoch_val_loss);
  bool improved_last_step = false;
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
  double lr;
  double seconds;
  double val_accuracy;  // token-level, kept in memory only
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
  std::uint64_t seed = 0;
};

// Line-delimited records: epoch,train_loss,val_loss,lr,seconds.
void write_train_log(const std::string& path, const TrainLog& log);

// Parameter blocks plus a verbatim text manifest. Serialization round-trips
// bit-exactly.
struct Checkpoint {
  std::string manifest;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> blocks;
};

Checkpoint make_checkpoint(const model::ModelParams& mp, std::uint64_t seed, int epoch, double best_val_loss,
                           std::uint64_t config_hash);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::map<std::string, std::string> parse_manifest(const std::string& manifest);
model::ModelSpec spec_from_manifest(const std::map<std::string, std::string>& kv);

// Rebuilds the model the manifest describes and loads the stored weights.
model::ModelParams restore_model(const Checkpoint& ckpt);

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

// One optimization run. Binds the provider's combiner to the model when the
// byte-pair embeddings are in play. Deterministic for a fixed seed under
// serial execution.
TrainResult train(const TrainConfig& config, const model::ModelSpec& spec, emb::Provider& provider,
                  const std::vector<AddressSample>& train_data, const std::vector<AddressSample>& val_data,
                  std::uint64_t seed);

// Best validation token accuracy below the threshold.
bool detect_nonconvergence(const TrainLog& log, double threshold);

struct SeedRun {
  std::uint64_t requested_seed;
  std::uint64_t used_seed;
  bool converged;
  bool retried;
  TrainResult result;
};

// Runs every configured seed; a non-converged run is retried once with the
// retry seed. Still-non-converged runs are reported, not fatal.
std::vector<SeedRun> multi_seed_run(const TrainConfig& config, const model::ModelSpec& spec,
                                    emb::Provider& provider, const std::vector<AddressSample>& train_data,
                                    const std::vector<AddressSample>& val_data);

}  // namespace addrtag::train

#endif  // ADDRTAG_TRAINING_HPP
