#include "crossdose/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "crossdose/error.hpp"
#include "crossdose/rng.hpp"

namespace crossdose::nn {
namespace {

std::size_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::kResidual: return "residual";
    case Variant::kDirect: return "direct";
    case Variant::kDoseEmbedded: return "dose_embedded";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  if (text == "residual") return Variant::kResidual;
  if (text == "direct") return Variant::kDirect;
  if (text == "dose_embedded" || text == "dose-embedded") return Variant::kDoseEmbedded;
  throw ValidationError("unknown model variant '" + text + "' (expected residual|direct|dose_embedded)");
}

void ModelSpec::validate() const {
  if (depth < 2) throw ValidationError("model depth must be >= 2");
  if (depth > 8) throw ValidationError("model depth must be <= 8");
  if (base_channels < 8) throw ValidationError("base_channels must be >= 8");
  if (!(internal_leaky_slope >= 0) || internal_leaky_slope >= 1) {
    throw ValidationError("internal LeakyReLU slope must lie in [0, 1)");
  }
  if (variant == Variant::kResidual && head_leaky_slope != 0.01) {
    throw ValidationError("the residual head slope is fixed at 0.01");
  }
}

float encode_dose(Dose d) {
  const double lo = std::log10(0.01), hi = std::log10(0.50);
  return static_cast<float>((std::log10(d.fraction()) - lo) / (hi - lo));
}

std::size_t Model::add_param(const std::string& name, std::vector<std::uint32_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  params_.push_back(Parameter{name, std::move(shape), std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)});
  return params_.size() - 1;
}

std::size_t Model::add_buffer(const std::string& name, std::size_t n, float fill) {
  buffers_.push_back(Parameter{name, {static_cast<std::uint32_t>(n)}, std::vector<float>(n, fill), {}});
  return buffers_.size() - 1;
}

Model::Unit Model::make_unit(const std::string& name, int in_ch, int out_ch, std::uint64_t& stream) {
  Unit u;
  u.name = name;
  u.conv.in_channels = in_ch;
  u.conv.out_channels = out_ch;
  u.conv.kernel = 3;
  u.conv.weight = add_param(name + ".conv.weight", {static_cast<std::uint32_t>(out_ch),
                                                    static_cast<std::uint32_t>(in_ch), 3u, 3u});
  u.conv.bias = add_param(name + ".conv.bias", {static_cast<std::uint32_t>(out_ch)});
  Rng rng(derive_seed(seed_, name, stream++));
  const double slope = spec_.internal_leaky_slope;
  const double stddev = std::sqrt(2.0 / (1.0 + slope * slope)) / std::sqrt(9.0 * in_ch);
  std::normal_distribution<double> normal(0.0, stddev);
  for (float& w : params_[u.conv.weight].value) w = static_cast<float>(normal(rng));
  if (spec_.batch_norm) {
    BatchNorm2d bn;
    bn.channels = out_ch;
    bn.gamma = add_param(name + ".bn.gamma", {static_cast<std::uint32_t>(out_ch)});
    std::fill(params_[bn.gamma].value.begin(), params_[bn.gamma].value.end(), 1.0f);
    bn.beta = add_param(name + ".bn.beta", {static_cast<std::uint32_t>(out_ch)});
    bn.running_mean = add_buffer(name + ".bn.running_mean", static_cast<std::size_t>(out_ch), 0.0f);
    bn.running_var = add_buffer(name + ".bn.running_var", static_cast<std::size_t>(out_ch), 1.0f);
    u.bn = bn;
  }
  return u;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.seed_ = seed;
  std::uint64_t stream = 0;
  int in_ch = spec.input_channels();
  for (int l = 0; l < spec.depth; ++l) {
    const int ch = spec.base_channels << l;
    const std::string level = "enc" + std::to_string(l);
    m.encoder_.push_back(m.make_unit(level + ".0", in_ch, ch, stream));
    m.encoder_.push_back(m.make_unit(level + ".1", ch, ch, stream));
    in_ch = ch;
  }
  for (int l = spec.depth - 2; l >= 0; --l) {
    const int ch = spec.base_channels << l;
    const std::string level = "dec" + std::to_string(l);
    m.decoder_.push_back(m.make_unit(level + ".up", ch * 2, ch, stream));
    m.decoder_.push_back(m.make_unit(level + ".0", ch * 2, ch, stream));
    m.decoder_.push_back(m.make_unit(level + ".1", ch, ch, stream));
  }
  // Zero-initialized 1x1 head: the residual variant starts as the identity map.
  m.head_.in_channels = spec.base_channels;
  m.head_.out_channels = 1;
  m.head_.kernel = 1;
  m.head_.weight = m.add_param("head.weight", {1u, static_cast<std::uint32_t>(spec.base_channels), 1u, 1u});
  m.head_.bias = m.add_param("head.bias", {1u});
  return m;
}

Tensor Model::prepare_input(const Tensor& x, std::span<const float> dose_codes) const {
  if (x.c != 1) throw ValidationError("model input must have exactly one image channel");
  const int m = spec_.size_multiple();
  if (x.h % m != 0 || x.w % m != 0) {
    throw ValidationError("input size " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                          " is not divisible by " + std::to_string(m));
  }
  for (float v : x.data) {
    if (!std::isfinite(v)) throw ValidationError("model input contains non-finite values");
  }
  if (spec_.variant != Variant::kDoseEmbedded) {
    if (!dose_codes.empty()) throw UsageError(std::string("variant '") + to_string(spec_.variant) +
                                              "' takes no dose input");
    return x;
  }
  if (dose_codes.size() != static_cast<std::size_t>(x.n)) {
    throw UsageError("dose_embedded variant requires one dose code per sample");
  }
  Tensor in(x.n, 2, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    std::copy(x.channel(i, 0), x.channel(i, 0) + x.plane(), in.channel(i, 0));
    std::fill(in.channel(i, 1), in.channel(i, 1) + in.plane(), dose_codes[i]);
  }
  return in;
}

Tensor Model::unit_eval(const Unit& u, const Tensor& x) const {
  Tensor y = u.conv.forward(params_, x);
  if (u.bn) y = u.bn->forward_eval(params_, buffers_, y);
  leaky_relu_inplace(y, static_cast<float>(spec_.internal_leaky_slope));
  return y;
}

Tensor Model::backbone_eval(const Tensor& in) const {
  const int depth = spec_.depth;
  std::vector<Tensor> skips;
  Tensor h = in;
  for (int l = 0; l < depth; ++l) {
    h = unit_eval(encoder_[2 * l], h);
    h = unit_eval(encoder_[2 * l + 1], h);
    if (l < depth - 1) {
      skips.push_back(h);
      h = max_pool2(h, nullptr);
    }
  }
  for (int j = 0; j < depth - 1; ++j) {
    const int l = depth - 2 - j;
    Tensor u = unit_eval(decoder_[3 * j], upsample_nearest2(h));
    h = unit_eval(decoder_[3 * j + 1], concat_channels(u, skips[l]));
    h = unit_eval(decoder_[3 * j + 2], h);
  }
  return head_.forward(params_, h);
}

Tensor Model::infer(const Tensor& x, std::span<const float> dose_codes) const {
  Tensor f = backbone_eval(prepare_input(x, dose_codes));
  if (spec_.variant != Variant::kResidual) return f;
  for (std::size_t i = 0; i < f.size(); ++i) f.data[i] += x.data[i];
  leaky_relu_inplace(f, static_cast<float>(spec_.head_leaky_slope));
  return f;
}

Tensor Model::predict_noise(const Tensor& x) const {
  if (spec_.variant != Variant::kResidual) {
    throw UsageError("predict_noise is only defined for the residual variant");
  }
  return backbone_eval(prepare_input(x, {}));
}

Tensor Model::forward_train(const Tensor& x, std::span<const float> dose_codes, Tape& tape) {
  const Tensor in = prepare_input(x, dose_codes);
  const int depth = spec_.depth;
  const auto slope = static_cast<float>(spec_.internal_leaky_slope);
  tape.units.clear();
  tape.units.reserve(encoder_.size() + decoder_.size());
  tape.pool_argmax.assign(static_cast<std::size_t>(depth - 1), {});
  tape.pool_input_hw.assign(static_cast<std::size_t>(depth - 1), {});

  auto run = [&](const Unit& u, const Tensor& input) {
    Tape::Unit& cache = tape.units.emplace_back();
    cache.input = input;
    Tensor y = u.conv.forward(params_, input);
    if (u.bn) y = u.bn->forward_train(params_, buffers_, y, cache.bn);
    leaky_relu_inplace(y, slope);
    cache.output = y;
    return y;
  };

  std::vector<Tensor> skips;
  Tensor h = in;
  for (int l = 0; l < depth; ++l) {
    h = run(encoder_[2 * l], h);
    h = run(encoder_[2 * l + 1], h);
    if (l < depth - 1) {
      skips.push_back(h);
      tape.pool_input_hw[l] = {h.h, h.w};
      h = max_pool2(h, &tape.pool_argmax[l]);
    }
  }
  for (int j = 0; j < depth - 1; ++j) {
    const int l = depth - 2 - j;
    Tensor u = run(decoder_[3 * j], upsample_nearest2(h));
    h = run(decoder_[3 * j + 1], concat_channels(u, skips[l]));
    h = run(decoder_[3 * j + 2], h);
  }
  tape.head_input = h;
  Tensor f = head_.forward(params_, h);
  tape.backbone_output = f;
  if (spec_.variant != Variant::kResidual) return f;
  for (std::size_t i = 0; i < f.size(); ++i) f.data[i] += x.data[i];
  tape.head_preactivation = f;
  leaky_relu_inplace(f, static_cast<float>(spec_.head_leaky_slope));
  return f;
}

void Model::backward(const Tape& tape, const Tensor& grad_output) {
  const int depth = spec_.depth;
  const auto slope = static_cast<float>(spec_.internal_leaky_slope);
  const std::size_t dec_base = encoder_.size();

  auto unit_back = [&](const Unit& u, std::size_t idx, Tensor g, bool need_dx) {
    const Tape::Unit& cache = tape.units.at(idx);
    leaky_relu_backward_inplace(g, cache.output, slope);
    if (u.bn) g = u.bn->backward(params_, cache.bn, g);
    return u.conv.backward(params_, cache.input, g, need_dx);
  };

  Tensor g = grad_output;
  if (spec_.variant == Variant::kResidual) {
    leaky_relu_backward_inplace(g, tape.head_preactivation, static_cast<float>(spec_.head_leaky_slope));
  }
  g = head_.backward(params_, tape.head_input, g, true);

  std::vector<Tensor> skip_grads(static_cast<std::size_t>(depth - 1));
  for (int j = depth - 2; j >= 0; --j) {
    const int l = depth - 2 - j;
    g = unit_back(decoder_[3 * j + 2], dec_base + 3 * j + 2, g, true);
    g = unit_back(decoder_[3 * j + 1], dec_base + 3 * j + 1, g, true);
    Tensor g_up;
    split_channels(g, decoder_[3 * j].conv.out_channels, g_up, skip_grads[l]);
    g = unit_back(decoder_[3 * j], dec_base + 3 * j, g_up, true);
    g = upsample_nearest2_backward(g);
  }
  for (int l = depth - 1; l >= 0; --l) {
    if (l < depth - 1) {
      const auto [ph, pw] = tape.pool_input_hw[l];
      g = max_pool2_backward(g, tape.pool_argmax[l], ph, pw);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += skip_grads[l].data[i];
    }
    g = unit_back(encoder_[2 * l + 1], 2 * l + 1, g, true);
    g = unit_back(encoder_[2 * l], 2 * l, g, l > 0);
  }
}

RasterF32 Model::denoise(const RasterF32& x, std::optional<Dose> dose) const {
  x.validate();
  const int m = spec_.size_multiple();
  const auto h = static_cast<int>(x.height), w = static_cast<int>(x.width);
  const int ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
  Tensor in(1, 1, ph, pw);
  for (int r = 0; r < ph; ++r) {
    for (int c = 0; c < pw; ++c) {
      in.data[static_cast<std::size_t>(r) * pw + c] = x.at(static_cast<std::uint32_t>(reflect(r, h)),
                                                             static_cast<std::uint32_t>(reflect(c, w)));
    }
  }
  std::vector<float> codes;
  if (dose) codes.push_back(encode_dose(*dose));
  if (spec_.variant == Variant::kDoseEmbedded && !dose) {
    throw UsageError("dose_embedded variant requires a dose argument");
  }
  if (spec_.variant != Variant::kDoseEmbedded) codes.clear();
  const Tensor out = infer(in, codes);
  RasterF32 result(x.height, x.width);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) result.at(r, c) = out.data[static_cast<std::size_t>(r) * pw + c];
  }
  return result;
}

void Model::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::string Model::describe() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-22s %10s\n", "layer", "op", "params");
  os << "model variant=" << to_string(spec_.variant) << " depth=" << spec_.depth
     << " base_channels=" << spec_.base_channels << " batch_norm=" << (spec_.batch_norm ? "on" : "off") << "\n";
  os << line;
  auto count = [&](const Unit& u) {
    std::size_t n = params_[u.conv.weight].value.size() + params_[u.conv.bias].value.size();
    if (u.bn) n += params_[u.bn->gamma].value.size() + params_[u.bn->beta].value.size();
    return n;
  };
  auto row = [&](const Unit& u) {
    char op[64];
    std::snprintf(op, sizeof op, "conv3x3 %d->%d%s", u.conv.in_channels, u.conv.out_channels,
                  u.bn ? "+bn" : "");
    std::snprintf(line, sizeof line, "%-12s %-22s %10zu\n", u.name.c_str(), op, count(u));
    os << line;
  };
  for (const auto& u : encoder_) row(u);
  for (const auto& u : decoder_) row(u);
  char op[64];
  std::snprintf(op, sizeof op, "conv1x1 %d->1", head_.in_channels);
  std::snprintf(line, sizeof line, "%-12s %-22s %10zu\n", "head", op,
                params_[head_.weight].value.size() + params_[head_.bias].value.size());
  os << line;
  os << "total parameters: " << parameter_count() << "\n";
  if (spec_.variant == Variant::kResidual) os << "output: LeakyReLU_0.01(f(x) + x)\n";
  else os << "output: f(x)\n";
  return os.str();
}

}  // namespace crossdose::nn
