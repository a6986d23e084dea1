#include "addrtag/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "addrtag/adversarial.hpp"
#include "addrtag/nn_math.hpp"
#include "addrtag/util.hpp"

namespace addrtag::train {

double PlateauScheduler::step(double epoch_val_loss) {
  if (epoch_val_loss < best - tol) {
    best = epoch_val_loss;
    bad_epochs = 0;
  } else {
    ++bad_epochs;
    if (bad_epochs >= patience) {
      lr *= factor;
      bad_epochs = 0;
    }
  }
  return lr;
}

bool EarlyStopper::step(int epoch, double epoch_val_loss) {
  if (epoch_val_loss < best - tol) {
    best = epoch_val_loss;
    best_epoch = epoch;
    bad_epochs = 0;
    improved_last_step = true;
    return false;
  }
  improved_last_step = false;
  ++bad_epochs;
  return bad_epochs >= patience;
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write train log: " + path);
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[256];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.6g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.lr,
                  e.seconds);
    out << buf;
  }
}

// --- checkpoint serialization --------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'A', 'T', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void append_raw(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(const std::string& buf, std::size_t& cursor) {
  if (cursor + sizeof(T) > buf.size()) throw CorruptFileError("unexpected end of checkpoint");
  T v;
  std::memcpy(&v, buf.data() + cursor, sizeof(T));
  cursor += sizeof(T);
  return v;
}

std::string read_bytes(const std::string& buf, std::size_t& cursor, std::size_t n) {
  if (cursor + n > buf.size()) throw CorruptFileError("unexpected end of checkpoint");
  std::string out = buf.substr(cursor, n);
  cursor += n;
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Checkpoint make_checkpoint(const model::ModelParams& mp, std::uint64_t seed, int epoch, double best_val_loss,
                           std::uint64_t config_hash) {
  std::ostringstream m;
  char num[64];
  m << "format = addrtag-ckpt-1\n";
  m << "variant = " << model::variant_to_string(mp.spec.variant) << "\n";
  m << "adversarial = " << (mp.spec.adversarial ? 1 : 0) << "\n";
  m << "embeddings = " << emb::kind_to_string(mp.spec.provider) << "\n";
  m << "embed_dim = " << mp.spec.dims.embed << "\n";
  m << "hidden_dim = " << mp.spec.dims.hidden << "\n";
  m << "attention_dim = " << mp.spec.dims.attention << "\n";
  m << "tag_repr_dim = " << mp.spec.dims.tag_repr << "\n";
  m << "one_hot_tags = " << (mp.spec.dims.one_hot_tags ? 1 : 0) << "\n";
  std::vector<std::string> names;
  for (Tag t : mp.vocab.tags) names.push_back(tag_name(t));
  m << "tags = " << join(names, ",") << "\n";
  m << "bos_index = " << mp.vocab.bos_index << "\n";
  m << "pad_index = " << mp.vocab.pad_index << "\n";
  std::snprintf(num, sizeof(num), "%016llx", static_cast<unsigned long long>(config_hash));
  m << "config_hash = " << num << "\n";
  m << "seed = " << seed << "\n";
  m << "epoch = " << epoch << "\n";
  std::snprintf(num, sizeof(num), "%.17g", best_val_loss);
  m << "best_val_loss = " << num << "\n";

  Checkpoint ckpt;
  ckpt.manifest = m.str();
  for (const auto& b : mp.set.blocks) ckpt.blocks.emplace_back(b.name, b.w);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string payload;
  append_raw<std::uint64_t>(payload, ckpt.manifest.size());
  payload += ckpt.manifest;
  append_raw<std::uint32_t>(payload, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, w] : ckpt.blocks) {
    append_raw<std::uint32_t>(payload, static_cast<std::uint32_t>(name.size()));
    payload += name;
    append_raw<std::uint32_t>(payload, static_cast<std::uint32_t>(w.rows()));
    append_raw<std::uint32_t>(payload, static_cast<std::uint32_t>(w.cols()));
    payload.append(reinterpret_cast<const char*>(w.data()), sizeof(double) * static_cast<std::size_t>(w.size()));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::uint64_t checksum = fnv1a(payload);
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string all = ss.str();
  if (all.size() < 16 || std::memcmp(all.data(), kCkptMagic, 8) != 0) {
    throw CorruptFileError("not a checkpoint file: " + path);
  }
  std::string payload = all.substr(8, all.size() - 16);
  std::uint64_t stored;
  std::memcpy(&stored, all.data() + all.size() - 8, 8);
  if (stored != fnv1a(payload)) throw CorruptFileError("checksum mismatch in " + path);

  std::size_t cursor = 0;
  Checkpoint ckpt;
  std::uint64_t mlen = read_raw<std::uint64_t>(payload, cursor);
  ckpt.manifest = read_bytes(payload, cursor, mlen);
  std::uint32_t nblocks = read_raw<std::uint32_t>(payload, cursor);
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    std::uint32_t name_len = read_raw<std::uint32_t>(payload, cursor);
    std::string name = read_bytes(payload, cursor, name_len);
    std::uint32_t rows = read_raw<std::uint32_t>(payload, cursor);
    std::uint32_t cols = read_raw<std::uint32_t>(payload, cursor);
    Eigen::MatrixXd w(rows, cols);
    std::string bytes = read_bytes(payload, cursor, sizeof(double) * static_cast<std::size_t>(rows) * cols);
    std::memcpy(w.data(), bytes.data(), bytes.size());
    ckpt.blocks.emplace_back(std::move(name), std::move(w));
  }
  if (cursor != payload.size()) throw CorruptFileError("trailing bytes in " + path);
  return ckpt;
}

std::map<std::string, std::string> parse_manifest(const std::string& manifest) {
  std::map<std::string, std::string> kv;
  for (const std::string& raw : split_on(manifest, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ManifestMismatchError("manifest line without '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

const std::string& manifest_get(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ManifestMismatchError("manifest misses key " + key);
  return it->second;
}

int manifest_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  try {
    return std::stoi(manifest_get(kv, key));
  } catch (const std::exception&) {
    throw ManifestMismatchError("manifest key " + key + " is not an integer");
  }
}

}  // namespace

model::ModelSpec spec_from_manifest(const std::map<std::string, std::string>& kv) {
  if (manifest_get(kv, "format") != "addrtag-ckpt-1") {
    throw ManifestMismatchError("unsupported checkpoint format " + manifest_get(kv, "format"));
  }
  model::ModelSpec spec;
  spec.variant = model::variant_from_string(manifest_get(kv, "variant"));
  spec.adversarial = manifest_int(kv, "adversarial") != 0;
  spec.provider = emb::kind_from_string(manifest_get(kv, "embeddings"));
  spec.dims.embed = manifest_int(kv, "embed_dim");
  spec.dims.hidden = manifest_int(kv, "hidden_dim");
  spec.dims.attention = manifest_int(kv, "attention_dim");
  spec.dims.tag_repr = manifest_int(kv, "tag_repr_dim");
  spec.dims.one_hot_tags = manifest_int(kv, "one_hot_tags") != 0;
  return spec;
}

model::ModelParams restore_model(const Checkpoint& ckpt) {
  auto kv = parse_manifest(ckpt.manifest);
  model::ModelSpec spec = spec_from_manifest(kv);

  TagVocabulary vocab;
  std::vector<std::string> names;
  for (Tag t : vocab.tags) names.push_back(tag_name(t));
  if (manifest_get(kv, "tags") != join(names, ",")) throw ManifestMismatchError("tag vocabulary differs");
  if (manifest_int(kv, "bos_index") != vocab.bos_index || manifest_int(kv, "pad_index") != vocab.pad_index) {
    throw ManifestMismatchError("label bookkeeping indices differ");
  }

  model::ModelParams mp = model::ModelParams::create(spec, vocab);
  if (ckpt.blocks.size() != mp.set.blocks.size()) {
    throw ManifestMismatchError("checkpoint holds " + std::to_string(ckpt.blocks.size()) + " blocks, model needs " +
                                std::to_string(mp.set.blocks.size()));
  }
  for (const auto& [name, w] : ckpt.blocks) {
    params::Block* b = mp.set.find(name);
    if (!b) throw ManifestMismatchError("unexpected block " + name);
    if (b->w.rows() != w.rows() || b->w.cols() != w.cols()) {
      throw ManifestMismatchError("block " + name + " has shape " + std::to_string(w.rows()) + "x" +
                                  std::to_string(w.cols()) + ", manifest dims imply " + std::to_string(b->w.rows()) +
                                  "x" + std::to_string(b->w.cols()));
    }
    b->w = w;
  }
  return mp;
}

// --- optimization ---------------------------------------------------------

namespace {

std::uint64_t config_fingerprint(const TrainConfig& c, const model::ModelSpec& spec) {
  std::ostringstream os;
  os << c.epochs << '|' << c.batch_size << '|' << c.lr0 << '|' << c.lr_decay_factor << '|' << c.lr_patience_epochs
     << '|' << c.early_stop_patience << '|' << c.improvement_tol << '|' << c.teacher_forcing_ratio << '|'
     << c.grl_lambda << '|' << model::variant_to_string(spec.variant) << '|' << spec.adversarial << '|'
     << emb::kind_to_string(spec.provider) << '|' << spec.dims.embed << '|' << spec.dims.hidden << '|'
     << spec.dims.attention << '|' << spec.dims.tag_repr << '|' << spec.dims.one_hot_tags;
  return fnv1a(os.str());
}

double run_plain_epoch(model::ModelParams& mp, const emb::Provider& provider,
                       const std::vector<AddressSample>& train_data, int batch_size, double lr,
                       std::uint64_t shuffle_seed, int epoch) {
  std::vector<data::Batch> batches = data::make_batches(train_data, batch_size, mp.vocab, shuffle_seed);
  double loss_sum = 0.0;
  long n = 0;
  for (const data::Batch& batch : batches) {
    ad::Tape tape;
    model::ParamVars pv = model::load_param_vars(tape, mp);
    std::vector<ad::Var> inputs = model::build_input_steps(tape, pv, mp, provider, batch);
    model::EncodedBatch enc = model::build_encoder(tape, pv, mp, inputs, batch);
    model::DecodeOutput dec = model::build_decoder(tape, pv, mp, enc, batch, /*teacher_forcing=*/true,
                                                   /*with_loss=*/true);
    double loss = tape.value(dec.loss)(0, 0);
    if (!std::isfinite(loss)) {
      throw NonFiniteError("training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(n));
    }
    tape.backward(dec.loss);
    mp.set.sgd_step(lr);
    mp.set.zero_grads();
    loss_sum += loss;
    ++n;
  }
  return n ? loss_sum / static_cast<double>(n) : 0.0;
}

double run_adversarial_epoch(model::ModelParams& mp, const emb::Provider& provider,
                             const std::map<std::string, std::vector<AddressSample>>& by_country, int batch_size,
                             double lr, double lambda, std::uint64_t seed, int epoch) {
  std::vector<std::string> countries;
  for (const auto& [c, _] : by_country) countries.push_back(c);
  std::vector<adv::DomainPair> pairing = adv::adann_pairing(countries, mix_seed(seed, 0xada000ull + epoch));

  std::map<std::string, std::vector<data::Batch>> batches;
  for (const auto& [c, samples] : by_country) {
    batches[c] = data::make_batches(samples, batch_size, mp.vocab, mix_seed(mix_seed(seed, epoch), fnv1a(c)));
  }

  // Round-robin over the pairing: every optimization step switches the
  // source domain, so each batch sees one (source, target) assignment.
  std::map<std::string, std::size_t> cursor;
  for (const auto& [c, _] : by_country) cursor[c] = 0;

  double loss_sum = 0.0;
  long n = 0;
  bool any = true;
  while (any) {
    any = false;
    for (const adv::DomainPair& pair : pairing) {
      const auto& src_batches = batches.at(pair.source);
      std::size_t& i = cursor[pair.source];
      if (i >= src_batches.size()) continue;
      any = true;
      const auto& tgt_batches = batches.at(pair.target);
      const data::Batch& tgt = tgt_batches[i % tgt_batches.size()];
      ad::Tape tape;
      model::ParamVars pv = model::load_param_vars(tape, mp);
      adv::AdvLossVars vars = adv::build_adversarial_loss(tape, pv, mp, provider, src_batches[i], tgt, lambda);
      double loss = tape.value(vars.total)(0, 0);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("adversarial loss at epoch " + std::to_string(epoch) + ", source " + pair.source);
      }
      tape.backward(vars.total);
      mp.set.sgd_step(lr);
      mp.set.zero_grads();
      loss_sum += loss;
      ++n;
      ++i;
    }
  }
  return n ? loss_sum / static_cast<double>(n) : 0.0;
}

struct ValScore {
  double loss;
  double token_accuracy;
};

ValScore validate(model::ModelParams& mp, const emb::Provider& provider, const std::vector<data::Batch>& batches) {
  double loss_sum = 0.0, token_sum = 0.0;
  long correct = 0, total = 0;
  for (const data::Batch& batch : batches) {
    double tokens = batch.mask.sum();
    loss_sum += model::batch_loss_value(mp, provider, batch) * tokens;
    token_sum += tokens;
    std::vector<std::vector<Tag>> parsed = model::greedy_parse_batch(mp, provider, batch);
    for (int r = 0; r < batch.size(); ++r) {
      for (int t = 0; t < batch.lengths[static_cast<std::size_t>(r)]; ++t) {
        correct += tag_index(parsed[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)]) ==
                   batch.tag_matrix(r, t);
        ++total;
      }
    }
  }
  return {token_sum > 0 ? loss_sum / token_sum : 0.0,
          total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0};
}

}  // namespace

TrainResult train(const TrainConfig& config, const model::ModelSpec& spec, emb::Provider& provider,
                  const std::vector<AddressSample>& train_data, const std::vector<AddressSample>& val_data,
                  std::uint64_t seed) {
  if (train_data.empty() || val_data.empty()) throw DataError("train and validation sets must be non-empty");
  if (config.teacher_forcing_ratio != 1.0) {
    throw std::invalid_argument("only teacher forcing ratio 1.0 is supported");
  }

  model::ModelParams mp = model::ModelParams::create(spec, {});
  mp.init(seed);
  if (spec.provider == emb::Kind::kBpeCombined) provider.bind_combiner(mp.combiner());

  std::map<std::string, std::vector<AddressSample>> by_country;
  if (spec.adversarial) {
    for (const AddressSample& s : train_data) by_country[s.country].push_back(s);
    if (by_country.size() < 2) throw TooFewDomainsError("adversarial training needs at least two countries");
    mp.block("disc.w").lr_scale = config.disc_lr_scale;
    mp.block("disc.b").lr_scale = config.disc_lr_scale;
  }

  const int batch_size = config.effective_batch_size(spec.adversarial);
  std::vector<data::Batch> val_batches = data::make_batches(val_data, batch_size, mp.vocab, std::nullopt);

  PlateauScheduler sched{config.lr0, config.lr_decay_factor, config.lr_patience_epochs, config.improvement_tol};
  EarlyStopper stopper{config.early_stop_patience, config.improvement_tol};
  TrainLog log;
  log.seed = seed;
  std::vector<Eigen::MatrixXd> best_weights = mp.snapshot_weights();
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr_used = sched.lr;
    double train_loss =
        spec.adversarial
            ? run_adversarial_epoch(mp, provider, by_country, batch_size, lr_used, config.lambda_at(epoch), seed,
                                    epoch)
            : run_plain_epoch(mp, provider, train_data, batch_size, lr_used, mix_seed(seed, epoch), epoch);

    ValScore val = validate(mp, provider, val_batches);
    if (!std::isfinite(val.loss)) throw NonFiniteError("validation loss at epoch " + std::to_string(epoch));
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool should_stop = stopper.step(epoch, val.loss);
    if (stopper.improved_last_step) {
      best_weights = mp.snapshot_weights();
      best_epoch = epoch;
      log.best_val_loss = val.loss;
    }
    log.best_val_accuracy = std::max(log.best_val_accuracy, val.token_accuracy);
    sched.step(val.loss);

    log.epochs.push_back({epoch, train_loss, val.loss, lr_used, seconds, val.token_accuracy});
    if (should_stop) {
      log.stopped_early = true;
      break;
    }
  }

  log.best_epoch = best_epoch;
  mp.restore_weights(best_weights);
  Checkpoint ckpt = make_checkpoint(mp, seed, best_epoch, log.best_val_loss, config_fingerprint(config, spec));
  return {std::move(ckpt), std::move(log)};
}

bool detect_nonconvergence(const TrainLog& log, double threshold) {
  if (log.epochs.empty()) throw DataError("empty training log");
  return log.best_val_accuracy < threshold;
}

std::vector<SeedRun> multi_seed_run(const TrainConfig& config, const model::ModelSpec& spec,
                                    emb::Provider& provider, const std::vector<AddressSample>& train_data,
                                    const std::vector<AddressSample>& val_data) {
  if (config.seeds.empty()) throw std::invalid_argument("multi_seed_run needs at least one seed");
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : config.seeds) {
    TrainResult result = train(config, spec, provider, train_data, val_data, seed);
    bool converged = !detect_nonconvergence(result.log, config.nonconvergence_threshold);
    if (converged) {
      runs.push_back({seed, seed, true, false, std::move(result)});
      continue;
    }
    TrainResult retry = train(config, spec, provider, train_data, val_data, config.retry_seed);
    bool retry_converged = !detect_nonconvergence(retry.log, config.nonconvergence_threshold);
    runs.push_back({seed, config.retry_seed, retry_converged, true, std::move(retry)});
  }
  return runs;
}

}  // namespace addrtag::train
