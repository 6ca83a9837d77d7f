#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossdose/dataset.hpp"
#include "crossdose/loss.hpp"
#include "crossdose/model.hpp"
#include "crossdose/rng.hpp"

namespace crossdose::train {

/// Polynomial decay lr_base * (1 - n/M)^gamma for 0 <= n <= M.
double lr_at(std::int64_t n_iter, std::int64_t total, double lr_base = 0.01, double gamma = 0.85);

/// One momentum-SGD update with decoupled weight decay:
///   v <- momentum * v + g;   theta <- theta - lr * (v + weight_decay * theta)
template <typename T>
void sgd_momentum_step(std::span<T> theta, std::span<const T> grad, std::span<T> velocity, double lr,
                       double momentum, double weight_decay) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = static_cast<T>(momentum * velocity[i] + grad[i]);
    theta[i] = static_cast<T>(theta[i] - lr * (velocity[i] + weight_decay * theta[i]));
  }
}

/// Which (subject, dose) pairs a run trains on.
struct DoseRegime {
  enum class Kind { kAllDosesUniform, kSingleDose };
  Kind kind = Kind::kAllDosesUniform;
  Dose dose{};

  static DoseRegime all() { return {}; }
  static DoseRegime single(Dose d) { return {Kind::kSingleDose, d}; }
  /// "all" or "dose=<d>".
  static DoseRegime parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const DoseRegime&, const DoseRegime&) = default;
};

struct TrainConfig {
  double lr_base = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 20;
  int batch_size = 16;
  double gamma = 0.85;
  DoseRegime regime;
  loss::LossConfig loss;
  std::uint64_t seed = 0;
  int patch_size = 0;           // square training crops; 0 trains on whole slices
  int patches_per_slice = 1;    // visits of every training slice per epoch
  std::size_t max_subjects = 0; // 0 uses every training subject

  void validate() const;
  /// Stable key = value rendering; the digest is its FNV-1a hash.
  std::string canonical() const;
  std::uint64_t digest() const;
};

struct SampleRef {
  std::size_t subject = 0;  // index into the training subject list
  Dose dose;
  int row = 0, col = 0;     // crop origin
};

using Batch = std::vector<SampleRef>;

struct SamplerOptions {
  std::size_t batch_size = 16;
  int patch_size = 0;
  int patches_per_slice = 1;
  std::uint32_t slice_height = 128;
  std::uint32_t slice_width = 128;
  std::size_t max_subjects = 0;
};

/// Deterministic epoch generator over the training split. One epoch visits
/// every training slice `patches_per_slice` times in shuffled order; under the
/// all-doses regime each visit draws its dose uniformly from the manifest levels.
class BatchSampler {
public:
  BatchSampler(const DatasetManifest& manifest, DoseRegime regime, std::uint64_t seed, SamplerOptions opts);

  std::vector<Batch> next_epoch();
  std::size_t samples_per_epoch() const noexcept { return subjects_.size() * opts_.patches_per_slice; }
  std::size_t steps_per_epoch() const noexcept {
    return (samples_per_epoch() + opts_.batch_size - 1) / opts_.batch_size;
  }
  const std::vector<std::string>& subjects() const noexcept { return subjects_; }

  std::string rng_state() const;
  void set_rng_state(const std::string& state);

private:
  std::vector<std::string> subjects_;
  std::vector<Dose> doses_;
  DoseRegime regime_;
  SamplerOptions opts_;
  Rng rng_;
};

BatchSampler make_sampler(const DatasetManifest& manifest, DoseRegime regime, std::uint64_t seed,
                          SamplerOptions opts = {});

struct EpochLoss {
  int epoch = 0;  // 1-based
  double mean_total = 0;
  double mean_mae = 0;
  double mean_ssim_loss = 0;
  double lr = 0;  // learning rate of the epoch's last step

  friend bool operator==(const EpochLoss&, const EpochLoss&) = default;
};

struct Checkpoint {
  nn::ModelSpec model_spec;
  TrainConfig train_config;
  std::uint64_t model_seed = 0;
  int epoch = 0;  // completed epochs
  std::vector<nn::Parameter> parameters;  // values only
  std::vector<nn::Parameter> buffers;
  std::vector<nn::Parameter> momentum;    // one velocity array per parameter, same names
  std::string rng_state;
  std::vector<EpochLoss> trace;

  /// Rebuilds the network and loads the stored values.
  nn::Model model() const;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

void write_loss_trace(const std::filesystem::path& path, std::span<const EpochLoss> trace);
std::vector<EpochLoss> read_loss_trace(const std::filesystem::path& path);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + loss_trace.csv
  int checkpoint_every = 1;                      // epochs; 0 keeps only the final checkpoint
  const Checkpoint* resume = nullptr;
  std::ostream* log = nullptr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLoss> trace;
};

/// Runs epochs x steps_per_epoch SGD steps on the dataset at `dataset_root`.
/// Throws NumericError (with step, lr and loss components) on a non-finite loss.
TrainResult train(const nn::ModelSpec& spec, const TrainConfig& cfg, const std::filesystem::path& dataset_root,
                  const TrainOptions& opts = {});

/// Whole-image inference with batch size 1. Sizes that are not multiples of the
/// network stride are reflect-padded and cropped back, unless padding is disabled.
RasterF32 denoise(const nn::Model& model, const RasterF32& x, std::optional<Dose> dose = std::nullopt,
                  bool allow_padding = true);
RasterF32 denoise(const Checkpoint& ckpt, const RasterF32& x, std::optional<Dose> dose = std::nullopt,
                  bool allow_padding = true);

}  // namespace crossdose::train
