#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossdose/dose.hpp"
#include "crossdose/layers.hpp"
#include "crossdose/raster.hpp"
#include "crossdose/tensor.hpp"

namespace crossdose::nn {

enum class Variant { kResidual, kDirect, kDoseEmbedded };

const char* to_string(Variant v) noexcept;
Variant parse_variant(const std::string& text);

struct ModelSpec {
  Variant variant = Variant::kResidual;
  int depth = 3;            // encoder levels, including the bottleneck
  int base_channels = 16;   // doubled at every level
  double internal_leaky_slope = 0.01;
  double head_leaky_slope = 0.01;
  bool batch_norm = true;

  int input_channels() const noexcept { return variant == Variant::kDoseEmbedded ? 2 : 1; }
  /// Spatial sizes must be divisible by this.
  int size_multiple() const noexcept { return 1 << (depth - 1); }
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Normalized log-dose in [0, 1] for the six standard levels:
/// (log10 d - log10 0.01) / (log10 0.50 - log10 0.01).
float encode_dose(Dose d);

/// Per-sample activations recorded by a training forward pass.
struct Tape {
  struct Unit {
    Tensor input;
    BatchNorm2d::Cache bn;
    Tensor output;
  };
  std::vector<Unit> units;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::pair<int, int>> pool_input_hw;
  Tensor head_input;
  Tensor backbone_output;
  Tensor head_preactivation;  // residual variant only
};

/// U-Net denoiser: `depth` encoder levels of two 3x3 conv + norm + LeakyReLU,
/// 2x2 max-pool between levels, a mirrored decoder (nearest x2 upsample + conv,
/// skip concatenation, two convs) and a final 1x1 conv to one channel.
///
/// The residual variant returns LeakyReLU_0.01(f(x) + x); the direct and
/// dose-embedded variants return f(x) itself.
class Model {
public:
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }

  /// Inference (running BN statistics). `dose_codes` holds one encode_dose()
  /// value per sample and must be given iff the variant is dose-embedded.
  Tensor infer(const Tensor& x, std::span<const float> dose_codes = {}) const;

  /// Training pass: batch statistics, running statistics updated, activations recorded.
  Tensor forward_train(const Tensor& x, std::span<const float> dose_codes, Tape& tape);

  /// Accumulates dL/dtheta given dL/d(output) of the last forward_train.
  void backward(const Tape& tape, const Tensor& grad_output);

  /// Backbone output f(x) before the residual head; residual variant only.
  Tensor predict_noise(const Tensor& x) const;

  /// Convenience single-image inference.
  RasterF32 denoise(const RasterF32& x, std::optional<Dose> dose = std::nullopt) const;

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  /// BatchNorm running statistics.
  std::vector<Parameter>& buffers() noexcept { return buffers_; }
  const std::vector<Parameter>& buffers() const noexcept { return buffers_; }

  void zero_grad();
  std::size_t parameter_count() const;
  /// Layer table with per-layer and total parameter counts.
  std::string describe() const;

private:
  struct Unit {
    std::string name;
    Conv2d conv;
    std::optional<BatchNorm2d> bn;
  };

  Model() = default;
  std::size_t add_param(const std::string& name, std::vector<std::uint32_t> shape);
  std::size_t add_buffer(const std::string& name, std::size_t n, float fill);
  Unit make_unit(const std::string& name, int in_ch, int out_ch, std::uint64_t& stream);

  Tensor prepare_input(const Tensor& x, std::span<const float> dose_codes) const;
  Tensor unit_eval(const Unit& u, const Tensor& x) const;
  Tensor backbone_eval(const Tensor& x) const;

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
  std::vector<Unit> encoder_;   // 2 per level
  std::vector<Unit> decoder_;   // 3 per decoder level (up, conv1, conv2), deepest first
  Conv2d head_;
};

}  // namespace crossdose::nn
