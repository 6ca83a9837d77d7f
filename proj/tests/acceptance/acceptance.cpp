// Acceptance runner: prints one PASS/FAIL line per criterion.
//
//   acceptance                 every criterion (the desk experiment takes about half an hour on one core)
//   acceptance --only 2,3,4    a subset
//   acceptance --fast          criteria 2-7 and 10
//   acceptance --desk          criteria 8 and 9

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossdose/error.hpp"
#include "crossdose/evalbench.hpp"
#include "crossdose/loss.hpp"
#include "crossdose/metrics.hpp"
#include "crossdose/noisestats.hpp"
#include "crossdose/phantom.hpp"
#include "crossdose/raster.hpp"
#include "crossdose/rng.hpp"
#include "crossdose/toy.hpp"
#include "crossdose/trainer.hpp"

namespace fs = std::filesystem;
using namespace crossdose;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

fs::path fresh_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Options {
  fs::path work = "acceptance_work";
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> desk_seeds{1, 2, 3};
  int epochs = 20;
  std::uint32_t size = 128;
  std::size_t subjects = 24;
  std::size_t n_train = 18;
  int patch = 64;
  int patches_per_slice = 8;
};

// 1 -----------------------------------------------------------------------

Outcome clinical_numbers(const Options&) {
  return {false,
          "clinical Bern/Ruijin scanner data is not available; substituted by criteria 2-10 "
          "(e.g. 34.580 dB PSNR at 1% cannot be checked)"};
}

// 2 -----------------------------------------------------------------------

Outcome gradient_oracle(const Options& o) {
  const auto t0 = Clock::now();
  loss::LossConfig cfg;  // MAE + 0.5 (1 - SSIM), 11x11 uniform window
  const loss::BatchShape shape{1, 16, 16};
  const double eps = 1e-3;
  Rng rng(derive_seed(o.seed, "gradient"));
  std::uniform_real_distribution<double> u(0.0, 8.0);
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (int pair = 0; pair < 20; ++pair) {
    std::vector<double> p(256), t(256), g(256);
    for (auto& v : p) v = u(rng);
    for (auto& v : t) v = u(rng);
    loss::total_loss(p, t, shape, cfg, g);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (std::abs(p[i] - t[i]) <= eps) {  // the stencil would straddle the MAE kink
        ++skipped;
        continue;
      }
      const double keep = p[i];
      p[i] = keep + eps;
      const double up = loss::total_loss(p, t, shape, cfg).total;
      p[i] = keep - eps;
      const double dn = loss::total_loss(p, t, shape, cfg).total;
      p[i] = keep;
      const double fd = (up - dn) / (2 * eps);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(std::abs(fd), std::abs(g[i])));
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-4 && secs < 60;
  return {pass, "20 pairs 16x16, " + std::to_string(checked) + " pixels (" + std::to_string(skipped) +
                    " kink pixels skipped), max rel err " + fmt("%.3g", worst) + " (< 1e-4), " + fmt("%.2f", secs) +
                    " s (< 60)"};
}

// 3 -----------------------------------------------------------------------

Outcome ssim_suite(const Options& o) {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(o.seed, "ssim"));
  std::uniform_real_distribution<float> u(0.0f, 16.0f);
  std::uniform_int_distribution<std::uint32_t> side(11, 48);
  double worst_id = 0, worst_sym = 0, worst_bound = 0;
  for (int k = 0; k < 50; ++k) {
    const std::uint32_t h = side(rng), w = side(rng);
    RasterF32 a(h, w), b(h, w);
    for (auto& v : a.data) v = u(rng);
    for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = k % 2 ? u(rng) : a.data[i] + 0.3f * (u(rng) - 8.0f);
    worst_id = std::max(worst_id, std::abs(metrics::ssim(a, a) - 1.0));
    worst_sym = std::max(worst_sym, std::abs(metrics::ssim(a, b) - metrics::ssim(b, a)));
    worst_bound = std::max(worst_bound, std::abs(metrics::ssim(a, b)));
  }
  // Constant images: only the luminance term differs from 1.
  const double c1 = (0.01 * 16) * (0.01 * 16);
  const double closed = (2 * 1.0 * 2.0 + c1) / (1.0 + 4.0 + c1);
  const double got = metrics::ssim(RasterF32(16, 16, 1.0f), RasterF32(16, 16, 2.0f));
  const double secs = seconds_since(t0);
  const bool pass = worst_id <= 1e-6 && worst_sym <= 1e-6 && worst_bound <= 1.0 && std::abs(got - 0.80102) <= 1e-4 &&
                    std::abs(got - closed) <= 1e-9 && secs < 30;
  return {pass, "50 pairs: |ssim(a,a)-1| " + fmt("%.2g", worst_id) + ", asymmetry " + fmt("%.2g", worst_sym) +
                    ", max |ssim| " + fmt("%.4f", worst_bound) + "; constant (1,2,L=16) " + fmt("%.6f", got) +
                    " vs 0.80102 (1e-4), closed form " + fmt("%.6f", closed) + ", " + fmt("%.2f", secs) + " s"};
}

// 4 -----------------------------------------------------------------------

Outcome poisson_simulator(const Options& o) {
  const auto t0 = Clock::now();
  const double v = 4.0, kappa = 100.0;
  const RasterF32 y(250, 400, static_cast<float>(v));  // 1e5 pixels
  const double n = static_cast<double>(y.size());
  std::map<int, double> var;
  bool means_ok = true;
  std::string detail;
  for (Dose d : {Dose(1), Dose(50)}) {
    phantom::DoseSimConfig sc;
    sc.dose = d;
    sc.counts_per_suv = kappa;
    sc.seed = derive_seed(o.seed, "poisson", d.percent());
    const auto x = phantom::simulate_low_dose(y, sc).image;
    double s = 0, s2 = 0;
    for (float e : x.data) s += e;
    const double mean = s / n;
    for (float e : x.data) s2 += (e - mean) * (e - mean);
    var[d.percent()] = s2 / (n - 1);
    const double sigma = std::sqrt(v / (d.fraction() * kappa) / n);
    const double z = (mean - v) / sigma;
    means_ok = means_ok && std::abs(z) <= 4.0;
    detail += "d=" + d.label() + " mean " + fmt("%.5f", mean) + " (z " + fmt("%+.2f", z) + "); ";
  }
  const double ratio = var[1] / var[50];
  const double secs = seconds_since(t0);
  const bool pass = means_ok && std::abs(ratio / 50.0 - 1.0) <= 0.10 && secs < 60;
  return {pass, detail + "variance ratio " + fmt("%.2f", ratio) + " (50 +-10%), " + fmt("%.2f", secs) + " s"};
}

// 5 -----------------------------------------------------------------------

Outcome residual_asymmetry(const Options& o) {
  const auto t0 = Clock::now();
  int overshoot = 0, negative_skew = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto spec = phantom::hot_lesion_phantom_spec(128, derive_seed(o.seed, "hot_lesion", i));
    const auto y = phantom::synthesize_reference(spec);
    phantom::DoseSimConfig sc;
    sc.dose = Dose(1);
    sc.counts_per_suv = 50.0;
    sc.seed = derive_seed(o.seed, "hot_lesion_dose", i);
    const auto x = phantom::simulate_low_dose(y, sc);
    const auto m = phantom::lesion_mask(spec);
    std::vector<std::uint8_t> mask(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) mask[k] = m.data[k] != 0.0f;
    const auto rep = noisestats::analyze_noise(y, x, mask);
    overshoot += rep.max_ld > rep.max_fd;
    negative_skew += rep.skewness < 0;
  }
  const double secs = seconds_since(t0);
  const bool pass = overshoot >= 95 && negative_skew >= 90 && secs < 120;
  return {pass, "100 phantoms at d=0.01: max(LDPET) > max(reference) in " + std::to_string(overshoot) +
                    " (>= 95), lesion skewness < 0 in " + std::to_string(negative_skew) + " (>= 90), " +
                    fmt("%.1f", secs) + " s (< 120)"};
}

// 6 -----------------------------------------------------------------------

Outcome lr_schedule(const Options&) {
  const std::int64_t m = 1998;  // 1000 samples at n = 0, 2, ..., M
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::int64_t k = 0; k < 1000; ++k) {
    const double lr = train::lr_at(2 * k, m);
    monotone = monotone && lr < prev;
    prev = lr;
  }
  const double start = train::lr_at(0, m), end = train::lr_at(m, m), mid = train::lr_at(m / 2, m);
  const bool pass = start == 0.01 && end == 0.0 && std::abs(mid - 5.5479e-3) <= 1e-7 && monotone;
  return {pass, "lr(0) " + fmt("%g", start) + ", lr(M) " + fmt("%g", end) + ", lr(M/2) " + fmt("%.7e", mid) +
                    " (5.5479e-3 +-1e-7), strictly decreasing over 1000 points: " + (monotone ? "yes" : "no")};
}

// 7 -----------------------------------------------------------------------

Outcome averaging_toy(const Options& o) {
  const auto t0 = Clock::now();
  toy::ToyProblem tp;
  tp.clean_values = {1.0, 4.0, 8.0};
  tp.loss_kind = toy::LossKind::kMse;
  tp.n_samples = 100000;
  tp.seed = o.seed;
  tp.noise_scales = {0.2, 2.0};
  const auto mixed = toy::averaging_gap(tp);
  tp.noise_scales = {0.2, 0.2};
  const auto equal = toy::averaging_gap(tp);
  const double secs = seconds_since(t0);
  const bool pass = mixed.gap > 5 * mixed.standard_error && equal.gap < 3 * equal.standard_error && secs < 60;
  return {pass, "ratio 10: gap " + fmt("%.4f", mixed.gap) + " = " + fmt("%.1f", mixed.gap / mixed.standard_error) +
                    " SE (> 5); equal scales: gap " + fmt("%.4f", equal.gap) + " = " +
                    fmt("%.2f", equal.gap / equal.standard_error) + " SE (< 3); " + fmt("%.1f", secs) + " s"};
}

// 8 and 9 -------------------------------------------------------------------

struct SeedRun {
  fs::path dir;
  eval::BenchmarkResult result;
  double seconds = 0;
};

train::TrainConfig desk_config(const Options& o, std::uint64_t seed, train::DoseRegime regime) {
  train::TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = 16;
  c.patch_size = o.patch;
  c.patches_per_slice = o.patches_per_slice;
  c.seed = seed;
  c.regime = regime;
  return c;
}

// Same layout as the command-line tool: data/, runs/<name>/, results/.
SeedRun run_seed(const Options& o, std::uint64_t seed, const fs::path& dir) {
  const auto t0 = Clock::now();
  fresh_dir(dir);
  phantom::BuildConfig bc;
  bc.seed = seed;
  bc.n_train = o.n_train;
  std::vector<phantom::PhantomSpec> specs;
  for (std::size_t i = 0; i < o.subjects; ++i) specs.push_back(phantom::random_phantom_spec(o.size, derive_seed(seed, "phantom", i)));
  phantom::build_dataset(specs, bc, dir / "data");

  struct Job {
    std::string name;
    nn::Variant variant;
    train::DoseRegime regime;
  };
  std::vector<Job> jobs{{"residual-all", nn::Variant::kResidual, train::DoseRegime::all()},
                        {"direct-all", nn::Variant::kDirect, train::DoseRegime::all()},
                        {"dose_embedded-all", nn::Variant::kDoseEmbedded, train::DoseRegime::all()}};
  for (Dose d : {Dose(1), Dose(5), Dose(10), Dose(25)})
    jobs.push_back({"direct-" + d.file_stem(), nn::Variant::kDirect, train::DoseRegime::single(d)});
  for (const auto& j : jobs) {
    const auto tj = Clock::now();
    nn::ModelSpec spec;
    spec.variant = j.variant;
    train::TrainOptions opts;
    opts.out_dir = dir / "runs" / j.name;
    opts.checkpoint_every = 0;
    const auto r = train::train(spec, desk_config(o, seed, j.regime), dir / "data", opts);
    std::cout << "  seed " << seed << " " << j.name << ": final loss " << fmt("%.5f", r.trace.back().mean_total)
              << ", " << fmt("%.0f", seconds_since(tj)) << " s" << std::endl;
  }

  SeedRun run;
  run.dir = dir;
  const auto methods = eval::methods_from_runs(dir / "runs");
  run.result = eval::evaluate(methods, dir / "data");
  fs::create_directories(dir / "results");
  eval::write_records_csv(dir / "results" / "records.csv", run.result.records);
  eval::write_aggregates_csv(dir / "results" / "aggregates.csv", run.result.aggregates);
  eval::write_significance_csv(dir / "results" / "significance.csv", run.result.significance);
  std::ofstream(dir / "results" / "table.txt") << eval::render_table(run.result);
  run.seconds = seconds_since(t0);
  return run;
}

const eval::Aggregate* find(const eval::BenchmarkResult& r, const std::string& method, Dose d) {
  for (const auto& a : r.aggregates)
    if (a.method == method && a.dose == d) return &a;
  return nullptr;
}

struct DeskState {
  std::map<std::uint64_t, SeedRun> runs;
};

Outcome desk_ordering(const Options& o, DeskState& st) {
  const auto t0 = Clock::now();
  int a_ok = 0, b_ok = 0, c_ok = 0, d_ok = 0;
  std::ostringstream os;
  for (std::uint64_t seed : o.desk_seeds) {
    std::cout << "  desk experiment, seed " << seed << std::endl;
    auto& run = st.runs[seed] = run_seed(o, seed, o.work / ("seed_" + std::to_string(seed)));
    const auto& r = run.result;
    bool a = true, b = true, c = true, d = true;
    double worst_a = std::numeric_limits<double>::infinity();
    double worst_d = 0;
    for (Dose dose : kStandardDoses) {
      const auto* res = find(r, "residual-all", dose);
      const auto* dir = find(r, "direct-all", dose);
      const auto* ld = find(r, eval::kLdpet, dose);
      if (!res || !dir || !ld) throw Error("missing aggregate for dose " + dose.label());
      worst_a = std::min(worst_a, res->mean_psnr - dir->mean_psnr);
      a = a && res->mean_psnr >= dir->mean_psnr + 0.5;
      b = b && res->mean_ssim > dir->mean_ssim;
      if (dose <= Dose(10)) c = c && res->mean_psnr > ld->mean_psnr;
      if (dose == Dose(10) || dose == Dose(25)) {
        const auto* ind = find(r, "individual", dose);
        if (!ind) throw Error("missing individual aggregate for dose " + dose.label());
        const double ratio = res->std_psnr / ind->std_psnr;
        worst_d = std::max(worst_d, ratio);
        d = d && res->std_psnr <= 1.5 * ind->std_psnr;
      }
    }
    a_ok += a;
    b_ok += b;
    c_ok += c;
    d_ok += d;
    std::cout << eval::render_table(r);
    os << " seed " << seed << ": a=" << (a ? "y" : "n") << " (min dPSNR " << fmt("%+.2f", worst_a) << " dB) b="
       << (b ? "y" : "n") << " c=" << (c ? "y" : "n") << " d=" << (d ? "y" : "n") << " (max std ratio "
       << fmt("%.2f", worst_d) << ");";
  }
  const int need = static_cast<int>((2 * o.desk_seeds.size() + 2) / 3);  // 2 of 3
  const bool pass = a_ok >= need && b_ok >= need && c_ok >= need && d_ok >= need;
  const double mins = seconds_since(t0) / 60;
  os << " seeds passing a/b/c/d: " << a_ok << "/" << b_ok << "/" << c_ok << "/" << d_ok << " (need " << need << " of "
     << o.desk_seeds.size() << "); " << fmt("%.1f", mins) << " min (target < 45)";
  return {pass, os.str()};
}

Outcome determinism(const Options& o, DeskState& st) {
  const std::uint64_t seed = o.desk_seeds.front();
  if (!st.runs.count(seed)) st.runs[seed] = run_seed(o, seed, o.work / ("seed_" + std::to_string(seed)));
  std::cout << "  rerunning seed " << seed << std::endl;
  const auto again = run_seed(o, seed, o.work / ("rerun_" + std::to_string(seed)));
  const auto& first = st.runs[seed];
  std::vector<fs::path> files{fs::path("results") / "records.csv"};
  for (const auto& e : fs::directory_iterator(first.dir / "runs"))
    files.push_back(fs::path("runs") / e.path().filename() / "loss_trace.csv");
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (fs::exists(first.dir / f) && slurp(first.dir / f) == slurp(again.dir / f)) ++same;
    else differing += " " + f.string();
  }
  const bool pass = same == files.size();
  return {pass, "seed " + std::to_string(seed) + " twice: " + std::to_string(same) + "/" + std::to_string(files.size()) +
                    " files byte-identical (records.csv and every loss_trace.csv)" +
                    (differing.empty() ? "" : "; differ:" + differing)};
}

// 10 ----------------------------------------------------------------------

template <typename E, typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome round_trips(const Options& o) {
  const fs::path dir = fresh_dir(o.work / "roundtrip");
  Rng rng(derive_seed(o.seed, "roundtrip"));
  std::uniform_int_distribution<std::uint32_t> side(1, 64);
  std::uniform_int_distribution<std::uint32_t> bits;
  int rasters_ok = 0;
  for (int k = 0; k < 100; ++k) {
    RasterF32 r(side(rng), side(rng));
    for (auto& v : r.data) {
      // Arbitrary finite bit patterns, including subnormals and -0.
      float f;
      do {
        const std::uint32_t b = bits(rng);
        std::memcpy(&f, &b, 4);
      } while (!std::isfinite(f));
      v = f;
    }
    const fs::path p = dir / ("r" + std::to_string(k) + ".ptr");
    rasterio::write_raster(p, r);
    const auto back = rasterio::read_raster(p);
    rasters_ok += back.height == r.height && back.width == r.width && same_bits(back.data, r.data);
  }

  // A briefly trained checkpoint: parameters, BN buffers, momentum and sampler state.
  std::vector<phantom::PhantomSpec> specs;
  for (std::size_t i = 0; i < 4; ++i) specs.push_back(phantom::random_phantom_spec(32, derive_seed(o.seed, "phantom", i)));
  phantom::BuildConfig bc;
  bc.seed = o.seed;
  bc.n_train = 3;
  phantom::build_dataset(specs, bc, dir / "data");
  nn::ModelSpec spec;
  spec.depth = 2;
  spec.base_channels = 8;
  train::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = o.seed;
  train::TrainOptions opts;
  opts.out_dir = dir / "run";
  opts.checkpoint_every = 0;
  const auto trained = train::train(spec, tc, dir / "data", opts).checkpoint;
  const auto loaded = train::load_checkpoint(dir / "run" / "final");
  auto same_list = [](const std::vector<nn::Parameter>& a, const std::vector<nn::Parameter>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].name != b[i].name || !same_bits(a[i].value, b[i].value)) return false;
    return true;
  };
  bool ckpt_ok = same_list(trained.parameters, loaded.parameters) && same_list(trained.buffers, loaded.buffers) &&
                 same_list(trained.momentum, loaded.momentum) && trained.rng_state == loaded.rng_state &&
                 trained.trace == loaded.trace && trained.model_seed == loaded.model_seed &&
                 trained.epoch == loaded.epoch && trained.model_spec == loaded.model_spec &&
                 trained.train_config.digest() == loaded.train_config.digest();
  train::save_checkpoint(dir / "resaved", loaded);
  for (const auto& e : fs::recursive_directory_iterator(dir / "run" / "final")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "run" / "final");
    ckpt_ok = ckpt_ok && slurp(e.path()) == slurp(dir / "resaved" / rel);
  }

  // Damaged inputs and the error class each must raise.
  const std::string good = slurp(dir / "r0.ptr");
  std::map<std::string, bool> errors;
  std::string bad = good;
  bad[0] = 'X';
  dump(dir / "magic.ptr", bad);
  errors["bad magic -> FormatError"] = throws<FormatError>([&] { rasterio::read_raster(dir / "magic.ptr"); });
  dump(dir / "short.ptr", good.substr(0, good.size() - 1));
  errors["truncated -> FormatError"] = throws<FormatError>([&] { rasterio::read_raster(dir / "short.ptr"); });
  bad = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + rasterio::kRasterHeaderBytes, &nan, 4);
  dump(dir / "nan.ptr", bad);
  errors["NaN payload -> FormatError"] = throws<FormatError>([&] { rasterio::read_raster(dir / "nan.ptr"); });
  errors["missing raster -> IoError"] = throws<IoError>([&] { rasterio::read_raster(dir / "absent.ptr"); });
  errors["missing checkpoint -> MissingPrerequisite"] =
      throws<MissingPrerequisite>([&] { train::load_checkpoint(dir / "no_such_run"); });
  {
    std::string meta = slurp(dir / "resaved" / "meta.txt");
    const auto pos = meta.find("lr_base = ");
    meta.replace(pos, 10, "lr_base = 9");
    dump(dir / "resaved" / "meta.txt", meta);
    errors["tampered meta -> FormatError"] = throws<FormatError>([&] { train::load_checkpoint(dir / "resaved"); });
  }
  {
    fs::copy(dir / "run" / "final", dir / "cut", fs::copy_options::recursive);
    const fs::path any = fs::directory_iterator(dir / "cut" / "parameters")->path();
    const std::string bytes = slurp(any);
    dump(any, bytes.substr(0, bytes.size() - 3));
    errors["truncated weights -> FormatError"] = throws<FormatError>([&] { train::load_checkpoint(dir / "cut"); });
  }
  std::string failed;
  for (const auto& [what, ok] : errors)
    if (!ok) failed += " [" + what + "]";
  const bool pass = rasters_ok == 100 && ckpt_ok && failed.empty();
  return {pass, std::to_string(rasters_ok) + "/100 rasters bitwise, checkpoint " + (ckpt_ok ? "bitwise" : "MISMATCH") +
                    ", " + std::to_string(errors.size()) + " damaged-input cases" +
                    (failed.empty() ? " raise their error class" : ", wrong class:" + failed)};
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const int v = std::stoi(tok);
    if (v < 1 || v > 10) throw ValidationError("criterion " + tok + " does not exist (1-10)");
    out.insert(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossdose acceptance criteria"};
  Options o;
  bool fast = false, desk = false;
  std::string only;
  std::string work = o.work.string();
  app.add_flag("--fast", fast, "Criteria 2-7 and 10");
  app.add_flag("--desk", desk, "Criteria 8 and 9 (desk-scale training)");
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--seed", o.seed, "Seed of the property criteria")->capture_default_str();
  app.add_option("--desk-seeds", o.desk_seeds, "Seeds of the desk experiment")->capture_default_str();
  app.add_option("--epochs", o.epochs, "Desk training epochs")->capture_default_str();
  app.add_option("--size", o.size, "Desk phantom size")->capture_default_str();
  app.add_option("--subjects", o.subjects, "Desk phantoms")->capture_default_str();
  app.add_option("--train", o.n_train, "Desk training subjects")->capture_default_str();
  app.add_option("--patch-size", o.patch, "Desk training crop size")->capture_default_str();
  app.add_option("--patches-per-slice", o.patches_per_slice, "Desk crops per slice and epoch")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  o.work = work;
  if (o.desk_seeds.empty()) {
    std::cerr << "--desk-seeds needs at least one seed\n";
    return 2;
  }

  std::set<int> selected;
  try {
    if (!only.empty()) selected = parse_only(only);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (fast) selected.insert({2, 3, 4, 5, 6, 7, 10});
  if (desk) selected.insert({8, 9});
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  fs::create_directories(o.work);
  DeskState desk_state;
  const std::map<int, std::function<Outcome()>> criteria{
      {1, [&] { return clinical_numbers(o); }},
      {2, [&] { return gradient_oracle(o); }},
      {3, [&] { return ssim_suite(o); }},
      {4, [&] { return poisson_simulator(o); }},
      {5, [&] { return residual_asymmetry(o); }},
      {6, [&] { return lr_schedule(o); }},
      {7, [&] { return averaging_toy(o); }},
      {8, [&] { return desk_ordering(o, desk_state); }},
      {9, [&] { return determinism(o, desk_state); }},
      {10, [&] { return round_trips(o); }},
  };
  std::vector<std::string> lines;
  int failures = 0;
  for (int id : selected) {
    Outcome r;
    try {
      r = criteria.at(id)();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    failures += !r.pass;
    lines.push_back("criterion " + std::to_string(id) + ": " + (r.pass ? "PASS" : "FAIL") + "  " + r.detail);
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l.substr(0, l.find("  ")) << "\n";
  return failures == 0 ? 0 : 1;
}
