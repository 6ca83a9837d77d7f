// crossdose: dataset generation, noise analysis, training, evaluation and reporting.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossdose/dataset.hpp"
#include "crossdose/error.hpp"
#include "crossdose/evalbench.hpp"
#include "crossdose/noisestats.hpp"
#include "crossdose/phantom.hpp"
#include "crossdose/toy.hpp"
#include "crossdose/trainer.hpp"

namespace fs = std::filesystem;
using namespace crossdose;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

struct GenerateArgs {
  std::size_t subjects = 24;
  std::size_t n_train = 18;
  std::uint32_t size = 128;
  double counts_per_suv = 50.0;
  double suv_clip = 16.0;
  std::string doses = "0.01,0.02,0.05,0.10,0.25,0.50";
  std::string kind = "random";
};

struct NoiseArgs {
  double hot_threshold = 4.0;
  std::size_t bins = 64;
};

struct TrainArgs {
  std::string variant = "residual";
  std::string regime = "all";
  std::string name;
  int epochs = 20;
  int batch = 16;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double gamma = 0.85;
  double lambda = 0.5;
  int patch_size = 0;
  int patches_per_slice = 1;
  std::size_t subjects = 0;
  int depth = 3;
  int base_channels = 16;
  int checkpoint_every = 1;
  std::string resume;
};

struct EvalArgs {
  std::string baseline = "individual";
  std::string figure_dose = "0.01";
};

struct ReportArgs {
  std::size_t toy_samples = 100000;
  double toy_ratio = 10.0;
};

std::vector<Dose> parse_doses(const std::string& text) {
  std::vector<Dose> out;
  std::string item;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (!item.empty()) out.push_back(Dose::parse(item));
      item.clear();
    } else if (text[i] != ' ') {
      item += text[i];
    }
  }
  if (out.empty()) throw ValidationError("no dose levels given");
  return out;
}

fs::path data_dir(const fs::path& out) { return out / "data"; }
fs::path runs_dir(const fs::path& out) { return out / "runs"; }
fs::path results_dir(const fs::path& out) { return out / "results"; }

void require_dataset(const fs::path& out) {
  if (!fs::exists(data_dir(out) / rasterio::kManifestFile)) {
    throw MissingPrerequisite("no dataset at " + data_dir(out).string() + " (run `crossdose generate` first)");
  }
}

int cmd_generate(const fs::path& out, std::uint64_t seed, const GenerateArgs& a) {
  if (a.subjects < 1) throw ValidationError("--subjects must be >= 1");
  phantom::BuildConfig bc;
  bc.seed = seed;
  bc.counts_per_suv = a.counts_per_suv;
  bc.suv_clip_max = a.suv_clip;
  bc.doses = parse_doses(a.doses);
  // Keep at least one test subject when the requested split does not fit.
  bc.n_train = a.n_train < a.subjects ? a.n_train : (a.subjects > 1 ? a.subjects * 3 / 4 : 1);
  if (bc.n_train == 0) bc.n_train = 1;
  std::vector<phantom::PhantomSpec> specs;
  for (std::size_t i = 0; i < a.subjects; ++i) {
    const std::uint64_t s = derive_seed(seed, "phantom", i);
    if (a.kind == "random") specs.push_back(phantom::random_phantom_spec(a.size, s));
    else if (a.kind == "hot_lesion") specs.push_back(phantom::hot_lesion_phantom_spec(a.size, s));
    else throw ValidationError("unknown phantom kind '" + a.kind + "' (expected random|hot_lesion)");
    specs.back().suv_clip_max = a.suv_clip;
  }
  const DatasetManifest m = phantom::build_dataset(specs, bc, data_dir(out));
  std::cout << "dataset: " << data_dir(out).string() << "\n"
            << "  subjects: " << m.subject_ids.size() << " (" << m.count(Split::kTrain) << " train, "
            << m.count(Split::kTest) << " test)\n"
            << "  doses:";
  for (Dose d : m.dose_levels) std::cout << ' ' << d.label();
  std::cout << "\n  files: " << m.subject_ids.size() * (m.dose_levels.size() + 1) << " rasters of " << a.size << "x"
            << a.size << "\n";
  return 0;
}

int cmd_analyze_noise(const fs::path& out, const NoiseArgs& a) {
  require_dataset(out);
  const fs::path root = data_dir(out);
  const DatasetManifest m = rasterio::scan_dataset(root);
  const fs::path dir = out / "noise";
  fs::create_directories(dir / "histograms");
  std::ofstream csv(dir / "noise_report.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (dir / "noise_report.csv").string());
  csv << "subject,dose,region,n_pixels,q05,q95,skewness,zero_variance,frac_negative,max_ld,max_fd\n";
  std::map<int, std::vector<double>> pooled_all, pooled_hot;
  char line[256];
  for (const auto& id : m.subject_ids) {
    const RasterF32 y = rasterio::read_raster(rasterio::reference_path(root, id));
    std::vector<std::uint8_t> hot(y.data.size());
    for (std::size_t i = 0; i < hot.size(); ++i) hot[i] = y.data[i] >= a.hot_threshold;
    const bool any_hot = std::any_of(hot.begin(), hot.end(), [](std::uint8_t v) { return v != 0; });
    for (Dose d : m.dose_levels) {
      const LowDoseImage x{rasterio::read_raster(rasterio::dose_path(root, id, d)), d};
      auto emit = [&](const char* region, const noisestats::NoiseReport& r) {
        std::snprintf(line, sizeof line, "%s,%s,%s,%zu,%.9g,%.9g,%.9g,%d,%.9g,%.9g,%.9g\n", id.c_str(),
                      d.label().c_str(), region, r.n_pixels, r.q05, r.q95, r.skewness, r.zero_variance ? 1 : 0,
                      r.frac_negative, r.max_ld, r.max_fd);
        csv << line;
      };
      emit("all", noisestats::analyze_noise(y, x));
      auto all = noisestats::residual_values(y, x.image);
      pooled_all[d.percent()].insert(pooled_all[d.percent()].end(), all.begin(), all.end());
      if (any_hot) {
        emit("hot", noisestats::analyze_noise(y, x, hot));
        auto h = noisestats::residual_values(y, x.image, hot);
        pooled_hot[d.percent()].insert(pooled_hot[d.percent()].end(), h.begin(), h.end());
      }
    }
  }
  auto write_hists = [&](const std::map<int, std::vector<double>>& pooled, const char* region) {
    for (const auto& [pct, values] : pooled) {
      if (values.empty()) continue;
      const std::string stem = std::string(region) + "_" + Dose(pct).file_stem();
      auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      noisestats::write_histogram_csv(dir / "histograms" / (stem + "_full.csv"),
                                      noisestats::histogram(values, a.bins, *lo, *hi));
      const auto tails = noisestats::tail_histograms(values, a.bins);
      noisestats::write_histogram_csv(dir / "histograms" / (stem + "_bottom5.csv"), tails.lower);
      noisestats::write_histogram_csv(dir / "histograms" / (stem + "_top5.csv"), tails.upper);
    }
  };
  write_hists(pooled_all, "all");
  write_hists(pooled_hot, "hot");
  std::cout << "noise report: " << (dir / "noise_report.csv").string() << " ("
            << m.subject_ids.size() * m.dose_levels.size() << " whole-image rows)\n";
  return 0;
}

nn::ModelSpec model_spec_from(const TrainArgs& a) {
  nn::ModelSpec s;
  s.variant = nn::parse_variant(a.variant);
  s.depth = a.depth;
  s.base_channels = a.base_channels;
  s.validate();
  return s;
}

int cmd_train(const fs::path& out, std::uint64_t seed, const TrainArgs& a) {
  require_dataset(out);
  const nn::ModelSpec spec = model_spec_from(a);
  train::TrainConfig c;
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.lr_base = a.lr;
  c.momentum = a.momentum;
  c.weight_decay = a.weight_decay;
  c.gamma = a.gamma;
  c.loss.lambda = a.lambda;
  c.regime = train::DoseRegime::parse(a.regime);
  c.seed = seed;
  c.patch_size = a.patch_size;
  c.patches_per_slice = a.patches_per_slice;
  c.max_subjects = a.subjects;
  c.validate();

  std::string name = a.name;
  if (name.empty()) {
    name = a.variant + "-" + (c.regime.kind == train::DoseRegime::Kind::kSingleDose ? c.regime.dose.file_stem() : "all");
  }
  const fs::path dir = runs_dir(out) / name;
  train::TrainOptions opts;
  opts.out_dir = dir;
  opts.checkpoint_every = a.checkpoint_every;
  opts.log = &std::cout;
  train::Checkpoint resume;
  if (!a.resume.empty()) {
    resume = train::load_checkpoint(a.resume);
    opts.resume = &resume;
  }
  std::cout << "training " << name << ": variant=" << nn::to_string(spec.variant) << " regime=" << c.regime.to_string()
            << " epochs=" << c.epochs << " batch=" << c.batch_size << "\n";
  const auto result = train::train(spec, c, data_dir(out), opts);
  std::cout << "checkpoint: " << (dir / "final").string() << "\n"
            << "loss trace: " << (dir / "loss_trace.csv").string() << " (" << result.trace.size() << " epochs)\n";
  return 0;
}

int cmd_evaluate(const fs::path& out, const EvalArgs& a) {
  require_dataset(out);
  const fs::path root = data_dir(out);
  const auto methods = eval::methods_from_runs(runs_dir(out));
  eval::EvalOptions opts;
  opts.baseline = a.baseline;
  const eval::BenchmarkResult r = eval::evaluate(methods, root, opts);
  const fs::path res = results_dir(out);
  fs::create_directories(res / "figures");
  eval::write_records_csv(res / "records.csv", r.records);
  eval::write_aggregates_csv(res / "aggregates.csv", r.aggregates);
  eval::write_significance_csv(res / "significance.csv", r.significance);
  {
    std::ofstream t(res / "table.txt", std::ios::binary);
    t << eval::render_table(r);
  }
  // Difference maps for the first test subject and MIPs over the test stack.
  const Dose fd = Dose::parse(a.figure_dose);
  const DatasetManifest m = rasterio::read_manifest(root);
  const auto test = m.subjects(Split::kTest);
  std::vector<RasterF32> refs, lows;
  for (const auto& id : test) {
    refs.push_back(rasterio::read_raster(rasterio::reference_path(root, id)));
    lows.push_back(rasterio::read_raster(rasterio::dose_path(root, id, fd)));
  }
  rasterio::write_raster(res / "figures" / "mip_reference.ptr", eval::mip(refs));
  rasterio::write_raster(res / "figures" / ("mip_LDPET_" + fd.file_stem() + ".ptr"), eval::mip(lows));
  rasterio::write_raster(res / "figures" / ("diff_LDPET_" + test.front() + "_" + fd.file_stem() + ".ptr"),
                         eval::difference_map(lows.front(), refs.front()));
  for (const auto& method : methods) {
    if (!method.covers(fd)) continue;
    std::vector<RasterF32> est;
    for (const auto& x : lows) est.push_back(method.denoise(x, fd));
    rasterio::write_raster(res / "figures" / ("mip_" + method.name + "_" + fd.file_stem() + ".ptr"), eval::mip(est));
    rasterio::write_raster(res / "figures" / ("diff_" + method.name + "_" + test.front() + "_" + fd.file_stem() + ".ptr"),
                           eval::difference_map(est.front(), refs.front()));
  }
  std::cout << eval::render_table(r) << "results: " << res.string() << " (" << r.records.size() << " records)\n";
  return 0;
}

int cmd_report(const fs::path& out, const std::string& baseline, std::uint64_t seed, const ReportArgs& a) {
  const fs::path res = results_dir(out);
  if (!fs::exists(res / "records.csv")) {
    throw MissingPrerequisite("no evaluation results in " + res.string() + ": run evaluate first");
  }
  eval::BenchmarkResult r;
  r.records = eval::read_records_csv(res / "records.csv");
  eval::finalize(r, baseline);

  std::ostringstream os;
  os << eval::render_table(r) << "\nper-subject standard deviation (n-1)\n";
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %6s %4s %10s %10s %10s\n", "method", "dose", "n", "psnr_std", "ssim_std",
                "rmse_std");
  os << line;
  for (const auto& s : r.aggregates) {
    std::snprintf(line, sizeof line, "%-16s %6s %4zu %10.4f %10.5f %10.5f\n", s.method.c_str(), s.dose.label().c_str(),
                  s.n, s.std_psnr, s.std_ssim, s.std_rmse);
    os << line;
  }

  toy::ToyProblem tp;
  tp.clean_values = {1.0, 4.0, 8.0};
  tp.noise_scales = {0.2, 0.2 * a.toy_ratio};
  tp.n_samples = a.toy_samples;
  tp.seed = seed;
  const toy::GapResult gap = toy::averaging_gap(tp);
  toy::write_gap_csv(res / "averaging_gap.csv", gap);
  std::snprintf(line, sizeof line,
                "\naveraging effect (1-D toy, MSE, noise scales %.3g and %.3g): gap %.5f, standard error %.5f, "
                "ratio %.2f\n",
                tp.noise_scales[0], tp.noise_scales[1], gap.gap, gap.standard_error, gap.gap / gap.standard_error);
  os << line;
  std::ofstream f(res / "report.txt", std::ios::binary);
  f << os.str();
  std::cout << os.str() << "report: " << (res / "report.txt").string() << "\n";
  return 0;
}

int cmd_describe(const TrainArgs& a) {
  const nn::Model m = nn::Model::build(model_spec_from(a), 0);
  std::cout << m.describe();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossdose: residual-noise learning for cross-dose PET denoising on synthetic phantoms"};
  app.set_config("--config", "", "INI config file; [section] per subcommand, keys mirror the long flags");
  app.require_subcommand(1);
  std::string out = "experiment";
  std::uint64_t seed = 0;
  app.add_option("--out", out, "Output root; data/, runs/, noise/ and results/ live under it")->capture_default_str();
  app.add_option("--seed", seed, "Master seed")->capture_default_str();

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "Synthesize phantoms and Poisson-thinned low-dose copies");
  gen->add_option("--subjects", g.subjects, "Number of phantoms")->capture_default_str();
  gen->add_option("--train", g.n_train, "Phantoms in the training split")->capture_default_str();
  gen->add_option("--size", g.size, "Slice size in pixels")->capture_default_str();
  gen->add_option("--counts-per-suv", g.counts_per_suv, "Expected full-dose counts per SUV per pixel")
      ->capture_default_str();
  gen->add_option("--suv-clip", g.suv_clip, "Upper SUV clip of the reference")->capture_default_str();
  gen->add_option("--doses", g.doses, "Comma-separated dose fractions")->capture_default_str();
  gen->add_option("--kind", g.kind, "Phantom family: random|hot_lesion")->capture_default_str();

  NoiseArgs na;
  auto* noise = app.add_subcommand("analyze-noise", "Residual statistics and histograms per subject and dose");
  noise->add_option("--hot-threshold", na.hot_threshold, "Reference SUV defining the hot region")
      ->capture_default_str();
  noise->add_option("--bins", na.bins, "Histogram bins")->capture_default_str();

  TrainArgs ta;
  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--variant", ta.variant, "residual|direct|dose_embedded")->capture_default_str();
    sub->add_option("--depth", ta.depth, "Encoder levels")->capture_default_str();
    sub->add_option("--base-channels", ta.base_channels, "Channels at the first level")->capture_default_str();
  };
  auto* tr = app.add_subcommand("train", "Train one model variant");
  add_model_flags(tr);
  tr->add_option("--regime", ta.regime, "all | dose=<d>")->capture_default_str();
  tr->add_option("--name", ta.name, "Run directory name (default <variant>-<regime>)");
  tr->add_option("--epochs", ta.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
  tr->add_option("--lr", ta.lr, "Base learning rate")->capture_default_str();
  tr->add_option("--momentum", ta.momentum, "SGD momentum")->capture_default_str();
  tr->add_option("--weight-decay", ta.weight_decay, "Decoupled weight decay")->capture_default_str();
  tr->add_option("--gamma", ta.gamma, "Polynomial decay exponent")->capture_default_str();
  tr->add_option("--lambda", ta.lambda, "SSIM loss weight")->capture_default_str();
  tr->add_option("--patch-size", ta.patch_size, "Square crop size; 0 trains on whole slices")->capture_default_str();
  tr->add_option("--patches-per-slice", ta.patches_per_slice, "Visits of each training slice per epoch")
      ->capture_default_str();
  tr->add_option("--subjects", ta.subjects, "Use only the first N training subjects; 0 = all")->capture_default_str();
  tr->add_option("--checkpoint-every", ta.checkpoint_every, "Epochs between checkpoints; 0 = final only")
      ->capture_default_str();
  tr->add_option("--resume", ta.resume, "Checkpoint directory to resume from");

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score every trained run on the test split");
  ev->add_option("--baseline", ea.baseline, "Reference method for significance markers")->capture_default_str();
  ev->add_option("--figure-dose", ea.figure_dose, "Dose used for difference maps and MIPs")->capture_default_str();

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Render the results table, per-subject spread and the averaging toy");
  rep->add_option("--baseline", ea.baseline, "Reference method for significance markers")->capture_default_str();
  rep->add_option("--toy-samples", ra.toy_samples, "Samples in the averaging-effect toy")->capture_default_str();
  rep->add_option("--toy-ratio", ra.toy_ratio, "Noise-scale ratio in the averaging-effect toy")->capture_default_str();

  auto* desc = app.add_subcommand("describe", "Print the network layer table and parameter count");
  add_model_flags(desc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const fs::path root(out);
    if (gen->parsed()) return cmd_generate(root, seed, g);
    if (noise->parsed()) return cmd_analyze_noise(root, na);
    if (tr->parsed()) return cmd_train(root, seed, ta);
    if (ev->parsed()) return cmd_evaluate(root, ea);
    if (rep->parsed()) return cmd_report(root, ea.baseline, seed, ra);
    if (desc->parsed()) return cmd_describe(ta);
  } catch (const MissingPrerequisite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValidationError& e) {  // includes UsageError
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
