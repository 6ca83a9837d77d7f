#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossdose/tensor.hpp"

namespace crossdose::nn {

/// Named parameter with its gradient accumulator.
struct Parameter {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> value;
  std::vector<float> grad;
};

/// Square "same" convolution (stride 1, zero padding k/2) with bias.
struct Conv2d {
  int in_channels = 0, out_channels = 0, kernel = 3;
  std::size_t weight = 0, bias = 0;  // indices into the parameter table

  Tensor forward(const std::vector<Parameter>& params, const Tensor& x) const;
  /// Accumulates weight/bias gradients; returns dL/dx when need_input_grad.
  Tensor backward(std::vector<Parameter>& params, const Tensor& x, const Tensor& grad_out,
                  bool need_input_grad) const;
};

/// Per-channel batch normalization; running statistics live in the buffer table.
struct BatchNorm2d {
  int channels = 0;
  std::size_t gamma = 0, beta = 0;
  std::size_t running_mean = 0, running_var = 0;
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

  struct Cache {
    Tensor xhat;
    std::vector<float> inv_std;
  };

  Tensor forward_train(std::vector<Parameter>& params, std::vector<Parameter>& buffers, const Tensor& x,
                       Cache& cache) const;
  Tensor forward_eval(const std::vector<Parameter>& params, const std::vector<Parameter>& buffers,
                      const Tensor& x) const;
  Tensor backward(std::vector<Parameter>& params, const Cache& cache, const Tensor& grad_out) const;
};

void leaky_relu_inplace(Tensor& t, float slope);
/// grad *= (activation >= 0 ? 1 : slope); the sign of the output equals the sign of the input.
void leaky_relu_backward_inplace(Tensor& grad, const Tensor& activation, float slope);

Tensor max_pool2(const Tensor& x, std::vector<std::uint32_t>* argmax);
Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, int h, int w);

Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_nearest2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int first_channels, Tensor& ga, Tensor& gb);

}  // namespace crossdose::nn
