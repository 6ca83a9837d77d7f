#include "crossdose/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "crossdose/error.hpp"

namespace fs = std::filesystem;

namespace crossdose::train {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& field) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(field, "not a number: '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& field) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(field, "not an integer: '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// "section.key" -> value
using Meta = std::map<std::string, std::string>;

Meta read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("checkpoint metadata not found: " + path.string());
  Meta meta;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("meta", "bad section header at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("meta", "expected key = value at line " + std::to_string(lineno));
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    meta[key] = trim(line.substr(eq + 1));
  }
  return meta;
}

const std::string& need(const Meta& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError(key, "missing from checkpoint metadata");
  return it->second;
}

void write_blob_dir(const fs::path& dir, const std::vector<nn::Parameter>& items) {
  fs::create_directories(dir);
  for (const auto& p : items) rasterio::write_tensor(dir / (p.name + ".ptn"), p.shape, p.value);
}

void read_blob_dir(const fs::path& dir, std::vector<nn::Parameter>& items) {
  for (auto& p : items) {
    const fs::path file = dir / (p.name + ".ptn");
    if (!fs::exists(file)) throw MissingPrerequisite("checkpoint array missing: " + file.string());
    rasterio::TensorF32 t = rasterio::read_tensor(file);
    if (t.shape != p.shape) throw FormatError(p.name, "stored shape does not match the model");
    p.value = std::move(t.data);
  }
}

std::vector<nn::Parameter> values_only(const std::vector<nn::Parameter>& src) {
  std::vector<nn::Parameter> out;
  out.reserve(src.size());
  for (const auto& p : src) out.push_back(nn::Parameter{p.name, p.shape, p.value, {}});
  return out;
}

void load_values(std::vector<nn::Parameter>& dst, const std::vector<nn::Parameter>& src, const char* what) {
  if (dst.size() != src.size()) throw ValidationError(std::string("checkpoint ") + what + " count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].value.size() != src[i].value.size()) {
      throw ValidationError(std::string("checkpoint ") + what + " '" + src[i].name + "' does not match the model");
    }
    dst[i].value = src[i].value;
  }
}

struct SubjectData {
  RasterF32 reference;
  std::map<int, RasterF32> low_dose;  // by dose percent
};

void copy_crop(const RasterF32& src, int row, int col, int size_h, int size_w, float* dst) {
  for (int r = 0; r < size_h; ++r) {
    const float* s = src.data.data() + static_cast<std::size_t>(row + r) * src.width + col;
    std::copy(s, s + size_w, dst + static_cast<std::size_t>(r) * size_w);
  }
}

}  // namespace

double lr_at(std::int64_t n_iter, std::int64_t total, double lr_base, double gamma) {
  if (total <= 0) throw ValidationError("lr_at: total iterations must be positive");
  if (n_iter < 0 || n_iter > total) {
    throw ValidationError("lr_at: iteration " + std::to_string(n_iter) + " outside [0, " + std::to_string(total) + "]");
  }
  return lr_base * std::pow(1.0 - static_cast<double>(n_iter) / static_cast<double>(total), gamma);
}

DoseRegime DoseRegime::parse(const std::string& text) {
  const std::string t = trim(text);
  if (t == "all" || t == "all_doses_uniform") return all();
  for (const char* prefix : {"dose=", "single_dose=", "single:"}) {
    const std::string pre(prefix);
    if (t.rfind(pre, 0) != 0) continue;
    const Dose d = Dose::parse(t.substr(pre.size()));
    if (!is_standard_dose(d)) {
      throw ValidationError("dose " + d.label() + " is not one of the standard levels 0.01, 0.02, 0.05, 0.10, 0.25, 0.50");
    }
    return single(d);
  }
  throw ValidationError("unknown dose regime '" + text + "' (expected all | dose=<d>)");
}

std::string DoseRegime::to_string() const {
  return kind == Kind::kAllDosesUniform ? "all" : "dose=" + dose.label();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(gamma > 0)) throw ValidationError("gamma must be > 0");
  if (!(lr_base > 0)) throw ValidationError("lr_base must be > 0");
  if (!(momentum >= 0) || momentum >= 1) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ValidationError("weight_decay must be >= 0");
  if (patch_size < 0) throw ValidationError("patch_size must be >= 0");
  if (patches_per_slice < 1) throw ValidationError("patches_per_slice must be >= 1");
  loss.validate();
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "lr_base = " << fmt_double(lr_base) << "\n"
     << "momentum = " << fmt_double(momentum) << "\n"
     << "weight_decay = " << fmt_double(weight_decay) << "\n"
     << "epochs = " << epochs << "\n"
     << "batch_size = " << batch_size << "\n"
     << "gamma = " << fmt_double(gamma) << "\n"
     << "regime = " << regime.to_string() << "\n"
     << "lambda = " << fmt_double(loss.lambda) << "\n"
     << "ssim_window = " << (loss.ssim.window == metrics::WindowKind::kGaussian ? "gaussian" : "uniform") << "\n"
     << "ssim_window_size = " << loss.ssim.window_size << "\n"
     << "ssim_sigma = " << fmt_double(loss.ssim.gaussian_sigma) << "\n"
     << "ssim_k1 = " << fmt_double(loss.ssim.k1) << "\n"
     << "ssim_k2 = " << fmt_double(loss.ssim.k2) << "\n"
     << "ssim_range = " << fmt_double(loss.ssim.dynamic_range) << "\n"
     << "seed = " << seed << "\n"
     << "patch_size = " << patch_size << "\n"
     << "patches_per_slice = " << patches_per_slice << "\n"
     << "max_subjects = " << max_subjects << "\n";
  return os.str();
}

std::uint64_t TrainConfig::digest() const { return stable_hash(canonical()); }

BatchSampler::BatchSampler(const DatasetManifest& manifest, DoseRegime regime, std::uint64_t seed,
                           SamplerOptions opts)
    : regime_(regime), opts_(opts), rng_(seed) {
  if (opts_.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (opts_.patches_per_slice < 1) throw ValidationError("patches_per_slice must be >= 1");
  if (opts_.patch_size > 0 && (static_cast<std::uint32_t>(opts_.patch_size) > opts_.slice_height ||
                               static_cast<std::uint32_t>(opts_.patch_size) > opts_.slice_width)) {
    throw ValidationError("patch size " + std::to_string(opts_.patch_size) + " exceeds the slice size");
  }
  subjects_ = manifest.subjects(Split::kTrain);
  if (opts_.max_subjects > 0 && subjects_.size() > opts_.max_subjects) subjects_.resize(opts_.max_subjects);
  if (subjects_.empty()) throw ValidationError("manifest has no training subjects");
  if (regime_.kind == DoseRegime::Kind::kSingleDose) {
    if (std::find(manifest.dose_levels.begin(), manifest.dose_levels.end(), regime_.dose) ==
        manifest.dose_levels.end()) {
      throw ValidationError("requested dose " + regime_.dose.label() + " is not in the dataset");
    }
    doses_ = {regime_.dose};
  } else {
    doses_ = manifest.dose_levels;
    if (doses_.empty()) throw ValidationError("manifest lists no dose levels");
  }
}

std::vector<Batch> BatchSampler::next_epoch() {
  std::vector<std::size_t> order;
  order.reserve(samples_per_epoch());
  for (std::size_t s = 0; s < subjects_.size(); ++s) {
    for (int k = 0; k < opts_.patches_per_slice; ++k) order.push_back(s);
  }
  // Fisher-Yates with an explicit index draw: std::shuffle is not specified portably.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng_)]);
  }
  std::uniform_int_distribution<std::size_t> dose_pick(0, doses_.size() - 1);
  const int ps = opts_.patch_size;
  std::vector<Batch> batches;
  Batch current;
  for (std::size_t s : order) {
    SampleRef ref;
    ref.subject = s;
    ref.dose = doses_.size() == 1 ? doses_[0] : doses_[dose_pick(rng_)];
    if (ps > 0) {
      std::uniform_int_distribution<int> row(0, static_cast<int>(opts_.slice_height) - ps);
      std::uniform_int_distribution<int> col(0, static_cast<int>(opts_.slice_width) - ps);
      ref.row = row(rng_);
      ref.col = col(rng_);
    }
    current.push_back(ref);
    if (current.size() == opts_.batch_size) batches.push_back(std::move(current)), current.clear();
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::string BatchSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void BatchSampler::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw FormatError("rng_state", "cannot restore sampler state");
}

BatchSampler make_sampler(const DatasetManifest& manifest, DoseRegime regime, std::uint64_t seed,
                          SamplerOptions opts) {
  return BatchSampler(manifest, regime, seed, opts);
}

nn::Model Checkpoint::model() const {
  nn::Model m = nn::Model::build(model_spec, model_seed);
  load_values(m.parameters(), parameters, "parameter");
  load_values(m.buffers(), buffers, "buffer");
  return m;
}

void write_loss_trace(const fs::path& path, std::span<const EpochLoss> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,total,mae,ssim_loss,lr\n";
  char line[160];
  for (const auto& e : trace) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.mean_total, e.mean_mae,
                  e.mean_ssim_loss, e.lr);
    out << line;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EpochLoss> read_loss_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("loss trace not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "epoch,total,mae,ssim_loss,lr") throw FormatError("loss_trace", "unexpected header");
  std::vector<EpochLoss> trace;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    EpochLoss e;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &e.epoch, &e.mean_total, &e.mean_mae, &e.mean_ssim_loss,
                    &e.lr) != 5) {
      throw FormatError("loss_trace", "malformed row '" + line + "'");
    }
    trace.push_back(e);
  }
  return trace;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  const auto& s = ckpt.model_spec;
  std::ofstream out(dir / "meta.txt", std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint metadata in " + dir.string());
  out << "format = crossdose-checkpoint-1\n"
      << "epoch = " << ckpt.epoch << "\n"
      << "model_seed = " << ckpt.model_seed << "\n"
      << "config_digest = " << ckpt.train_config.digest() << "\n"
      << "\n[model]\n"
      << "variant = " << nn::to_string(s.variant) << "\n"
      << "depth = " << s.depth << "\n"
      << "base_channels = " << s.base_channels << "\n"
      << "internal_leaky_slope = " << fmt_double(s.internal_leaky_slope) << "\n"
      << "head_leaky_slope = " << fmt_double(s.head_leaky_slope) << "\n"
      << "batch_norm = " << (s.batch_norm ? 1 : 0) << "\n"
      << "\n[train]\n"
      << ckpt.train_config.canonical() << "\n[rng]\n"
      << "state = " << ckpt.rng_state << "\n";
  out.close();
  if (!out) throw IoError("write failed: " + (dir / "meta.txt").string());
  write_blob_dir(dir / "parameters", ckpt.parameters);
  write_blob_dir(dir / "buffers", ckpt.buffers);
  write_blob_dir(dir / "momentum", ckpt.momentum);
  write_loss_trace(dir / "loss_trace.csv", ckpt.trace);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingPrerequisite("checkpoint directory not found: " + dir.string());
  const Meta m = read_meta(dir / "meta.txt");
  if (need(m, "format") != "crossdose-checkpoint-1") throw FormatError("format", "unsupported checkpoint format");
  Checkpoint c;
  c.epoch = static_cast<int>(parse_u64(need(m, "epoch"), "epoch"));
  c.model_seed = parse_u64(need(m, "model_seed"), "model_seed");

  auto& s = c.model_spec;
  s.variant = nn::parse_variant(need(m, "model.variant"));
  s.depth = static_cast<int>(parse_u64(need(m, "model.depth"), "model.depth"));
  s.base_channels = static_cast<int>(parse_u64(need(m, "model.base_channels"), "model.base_channels"));
  s.internal_leaky_slope = parse_double(need(m, "model.internal_leaky_slope"), "model.internal_leaky_slope");
  s.head_leaky_slope = parse_double(need(m, "model.head_leaky_slope"), "model.head_leaky_slope");
  s.batch_norm = need(m, "model.batch_norm") == "1";
  s.validate();

  auto& t = c.train_config;
  auto num = [&](const char* k) { return parse_double(need(m, std::string("train.") + k), std::string("train.") + k); };
  auto uint = [&](const char* k) { return parse_u64(need(m, std::string("train.") + k), std::string("train.") + k); };
  t.lr_base = num("lr_base");
  t.momentum = num("momentum");
  t.weight_decay = num("weight_decay");
  t.epochs = static_cast<int>(uint("epochs"));
  t.batch_size = static_cast<int>(uint("batch_size"));
  t.gamma = num("gamma");
  t.regime = DoseRegime::parse(need(m, "train.regime"));
  t.loss.lambda = num("lambda");
  t.loss.ssim.window =
      need(m, "train.ssim_window") == "gaussian" ? metrics::WindowKind::kGaussian : metrics::WindowKind::kUniform;
  t.loss.ssim.window_size = static_cast<int>(uint("ssim_window_size"));
  t.loss.ssim.gaussian_sigma = num("ssim_sigma");
  t.loss.ssim.k1 = num("ssim_k1");
  t.loss.ssim.k2 = num("ssim_k2");
  t.loss.ssim.dynamic_range = num("ssim_range");
  t.seed = uint("seed");
  t.patch_size = static_cast<int>(uint("patch_size"));
  t.patches_per_slice = static_cast<int>(uint("patches_per_slice"));
  t.max_subjects = uint("max_subjects");
  t.validate();
  if (parse_u64(need(m, "config_digest"), "config_digest") != t.digest()) {
    throw FormatError("config_digest", "training configuration does not match its digest");
  }
  c.rng_state = need(m, "rng.state");

  // The parameter and buffer layout follows from the spec.
  const nn::Model skeleton = nn::Model::build(s, c.model_seed);
  c.parameters = values_only(skeleton.parameters());
  c.buffers = values_only(skeleton.buffers());
  c.momentum = values_only(skeleton.parameters());
  read_blob_dir(dir / "parameters", c.parameters);
  read_blob_dir(dir / "buffers", c.buffers);
  read_blob_dir(dir / "momentum", c.momentum);
  c.trace = read_loss_trace(dir / "loss_trace.csv");
  return c;
}

TrainResult train(const nn::ModelSpec& spec, const TrainConfig& cfg, const fs::path& dataset_root,
                  const TrainOptions& opts) {
  spec.validate();
  cfg.validate();
  const DatasetManifest manifest = rasterio::scan_dataset(dataset_root);

  // Slice size from the first training reference.
  const auto train_ids = manifest.subjects(Split::kTrain);
  if (train_ids.empty()) throw ValidationError("dataset has no training subjects");
  const RasterF32 probe = rasterio::read_raster(rasterio::reference_path(dataset_root, train_ids.front()));

  SamplerOptions so;
  so.batch_size = static_cast<std::size_t>(cfg.batch_size);
  so.patch_size = cfg.patch_size;
  so.patches_per_slice = cfg.patches_per_slice;
  so.slice_height = probe.height;
  so.slice_width = probe.width;
  so.max_subjects = cfg.max_subjects;
  BatchSampler sampler(manifest, cfg.regime, derive_seed(cfg.seed, "sampler"), so);

  const int crop_h = cfg.patch_size > 0 ? cfg.patch_size : static_cast<int>(probe.height);
  const int crop_w = cfg.patch_size > 0 ? cfg.patch_size : static_cast<int>(probe.width);
  if (crop_h % spec.size_multiple() != 0 || crop_w % spec.size_multiple() != 0) {
    throw ValidationError("training size " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                          " is not divisible by " + std::to_string(spec.size_multiple()));
  }

  std::vector<SubjectData> data(sampler.subjects().size());
  const std::vector<Dose> doses =
      cfg.regime.kind == DoseRegime::Kind::kSingleDose ? std::vector<Dose>{cfg.regime.dose} : manifest.dose_levels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string& id = sampler.subjects()[i];
    data[i].reference = rasterio::read_raster(rasterio::reference_path(dataset_root, id));
    if (!data[i].reference.same_shape(probe)) throw ValidationError("subject " + id + " has a different slice size");
    for (Dose d : doses) {
      RasterF32 x = rasterio::read_raster(rasterio::dose_path(dataset_root, id, d));
      require_same_shape(x, data[i].reference, "training pair");
      data[i].low_dose.emplace(d.percent(), std::move(x));
    }
  }

  const std::uint64_t model_seed = derive_seed(cfg.seed, "model");
  nn::Model model = nn::Model::build(spec, model_seed);
  std::vector<std::vector<float>> velocity;
  for (const auto& p : model.parameters()) velocity.emplace_back(p.value.size(), 0.0f);
  std::vector<EpochLoss> trace;
  int start_epoch = 0;

  if (opts.resume) {
    const Checkpoint& r = *opts.resume;
    if (!(r.model_spec == spec)) throw ValidationError("resume checkpoint has a different model spec");
    if (r.train_config.digest() != cfg.digest()) throw ValidationError("resume checkpoint has a different config");
    if (r.model_seed != model_seed) throw ValidationError("resume checkpoint has a different model seed");
    load_values(model.parameters(), r.parameters, "parameter");
    load_values(model.buffers(), r.buffers, "buffer");
    if (r.momentum.size() != velocity.size()) throw ValidationError("checkpoint momentum count mismatch");
    for (std::size_t i = 0; i < velocity.size(); ++i) {
      if (r.momentum[i].value.size() != velocity[i].size()) throw ValidationError("checkpoint momentum size mismatch");
      velocity[i] = r.momentum[i].value;
    }
    sampler.set_rng_state(r.rng_state);
    trace = r.trace;
    start_epoch = r.epoch;
    if (start_epoch > cfg.epochs) throw ValidationError("resume checkpoint is past the configured epochs");
  }

  auto snapshot = [&](int epoch) {
    Checkpoint c;
    c.model_spec = spec;
    c.train_config = cfg;
    c.model_seed = model_seed;
    c.epoch = epoch;
    c.parameters = values_only(model.parameters());
    c.buffers = values_only(model.buffers());
    c.momentum = values_only(model.parameters());
    for (std::size_t i = 0; i < velocity.size(); ++i) c.momentum[i].value = velocity[i];
    c.rng_state = sampler.rng_state();
    c.trace = trace;
    return c;
  };

  const auto steps_per_epoch = static_cast<std::int64_t>(sampler.steps_per_epoch());
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
  const bool dose_input = spec.variant == nn::Variant::kDoseEmbedded;
  const std::size_t plane = static_cast<std::size_t>(crop_h) * crop_w;

  nn::Tape tape;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const std::vector<Batch> batches = sampler.next_epoch();
    double sum_total = 0, sum_mae = 0, sum_ssim = 0, last_lr = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      const std::int64_t step = static_cast<std::int64_t>(epoch) * steps_per_epoch + static_cast<std::int64_t>(b);
      const double lr = lr_at(step, total_steps, cfg.lr_base, cfg.gamma);
      last_lr = lr;

      const int n = static_cast<int>(batch.size());
      nn::Tensor x(n, 1, crop_h, crop_w);
      std::vector<double> target(static_cast<std::size_t>(n) * plane);
      std::vector<float> codes;
      std::vector<float> tmp(plane);
      for (int i = 0; i < n; ++i) {
        const SampleRef& ref = batch[static_cast<std::size_t>(i)];
        const SubjectData& sd = data[ref.subject];
        copy_crop(sd.low_dose.at(ref.dose.percent()), ref.row, ref.col, crop_h, crop_w, x.sample(i));
        copy_crop(sd.reference, ref.row, ref.col, crop_h, crop_w, tmp.data());
        std::copy(tmp.begin(), tmp.end(), target.begin() + static_cast<std::ptrdiff_t>(i * plane));
        if (dose_input) codes.push_back(nn::encode_dose(ref.dose));
      }

      model.zero_grad();
      nn::Tensor out = model.forward_train(x, codes, tape);
      std::vector<double> pred(out.data.begin(), out.data.end());
      std::vector<double> grad(pred.size());
      const loss::LossValue lv = loss::total_loss(pred, target, {static_cast<std::size_t>(n),
                                                                 static_cast<std::size_t>(crop_h),
                                                                 static_cast<std::size_t>(crop_w)},
                                                  cfg.loss, grad);
      if (!std::isfinite(lv.total) || !std::isfinite(lv.mae) || !std::isfinite(lv.ssim_loss)) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "non-finite loss at step %lld (epoch %d, lr %.6g): total=%g mae=%g ssim_loss=%g",
                      static_cast<long long>(step), epoch + 1, lr, lv.total, lv.mae, lv.ssim_loss);
        throw NumericError(msg);
      }
      for (std::size_t i = 0; i < grad.size(); ++i) out.data[i] = static_cast<float>(grad[i]);
      model.backward(tape, out);

      auto& params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        sgd_momentum_step<float>(params[p].value, params[p].grad, velocity[p], lr, cfg.momentum, cfg.weight_decay);
      }
      sum_total += lv.total;
      sum_mae += lv.mae;
      sum_ssim += lv.ssim_loss;
    }
    const double k = static_cast<double>(batches.size());
    trace.push_back(EpochLoss{epoch + 1, sum_total / k, sum_mae / k, sum_ssim / k, last_lr});
    if (opts.log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %3d/%d  loss %.6f  mae %.6f  ssim_loss %.6f  lr %.3e\n", epoch + 1,
                    cfg.epochs, trace.back().mean_total, trace.back().mean_mae, trace.back().mean_ssim_loss, last_lr);
      *opts.log << line << std::flush;
    }
    if (opts.out_dir && opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d", epoch + 1);
      save_checkpoint(*opts.out_dir / name, snapshot(epoch + 1));
    }
  }

  TrainResult result{snapshot(cfg.epochs), trace};
  if (opts.out_dir) {
    save_checkpoint(*opts.out_dir / "final", result.checkpoint);
    write_loss_trace(*opts.out_dir / "loss_trace.csv", trace);
  }
  return result;
}

RasterF32 denoise(const nn::Model& model, const RasterF32& x, std::optional<Dose> dose, bool allow_padding) {
  const int m = model.spec().size_multiple();
  if (!allow_padding && (x.height % m != 0 || x.width % m != 0)) {
    throw ValidationError("image size " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                          " is not divisible by " + std::to_string(m) + " and padding is disabled");
  }
  return model.denoise(x, dose);
}

RasterF32 denoise(const Checkpoint& ckpt, const RasterF32& x, std::optional<Dose> dose, bool allow_padding) {
  return denoise(ckpt.model(), x, dose, allow_padding);
}

}  // namespace crossdose::train
