#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crossdose/dataset.hpp"
#include "crossdose/metrics.hpp"
#include "crossdose/trainer.hpp"

namespace crossdose::eval {

inline constexpr const char* kLdpet = "LDPET";

enum class Metric { kPsnr, kSsim, kRmse };
const char* to_string(Metric m) noexcept;
Metric parse_metric(const std::string& text);
double metric_value(const metrics::MetricsRecord& r, Metric m);

/// A denoising method under evaluation. `doses` lists the levels it covers;
/// empty means every level.
struct Method {
  std::string name;
  std::function<RasterF32(const RasterF32& x, Dose d)> denoise;
  std::vector<Dose> doses;

  bool covers(Dose d) const;
};

/// Wraps a trained checkpoint. Dose-embedded models receive the true dose.
Method method_from_checkpoint(const std::string& name, const train::Checkpoint& ckpt);

/// Combines single-dose checkpoints into one method that dispatches on dose.
Method individual_method(const std::string& name, std::span<const train::Checkpoint> per_dose);

/// Loads every run directory under `runs_dir` (a run holds `final/meta.txt`).
/// Single-dose runs are merged into the "individual" method; every other run
/// becomes a method named after its directory. Order: individual, direct,
/// dose-embedded, residual, then anything else by name.
std::vector<Method> methods_from_runs(const std::filesystem::path& runs_dir);

struct Aggregate {
  std::string method;
  Dose dose;
  std::size_t n = 0;
  double mean_psnr = 0, std_psnr = 0;
  double mean_ssim = 0, std_ssim = 0;
  double mean_rmse = 0, std_rmse = 0;
};

struct SignificanceRow {
  std::string method;
  std::string baseline;
  Dose dose;
  Metric metric = Metric::kPsnr;
  double p_value = 1;
  std::string marker;
  std::size_t n = 0;
  bool exact = true;
  std::string note;
};

struct BenchmarkResult {
  std::vector<metrics::MetricsRecord> records;
  std::vector<Aggregate> aggregates;
  std::vector<SignificanceRow> significance;
};

struct EvalOptions {
  double dynamic_range = 16.0;
  metrics::SsimParams ssim;
  std::string baseline = "individual";  // significance reference, skipped when absent
};

/// Scores every test subject x dose x method, plus the raw low-dose row.
BenchmarkResult evaluate(std::span<const Method> methods, const std::filesystem::path& dataset_root,
                         const EvalOptions& opts = {});

/// Per (method, dose) mean and sample std over subjects, in first-appearance order.
std::vector<Aggregate> aggregate(std::span<const metrics::MetricsRecord> records);

/// The std columns of aggregate(); throws ValidationError for fewer than two subjects.
std::vector<Aggregate> per_subject_std(const BenchmarkResult& result);

/// Wilcoxon signed-rank p-value per dose, pairing records by subject.
std::vector<SignificanceRow> paired_significance(const BenchmarkResult& result, const std::string& method_a,
                                                 const std::string& baseline, Metric metric);

/// est - reference.
RasterF32 difference_map(const RasterF32& est, const RasterF32& reference);
/// Pixelwise maximum over a stack of equally sized slices.
RasterF32 mip(std::span<const RasterF32> stack);

void write_records_csv(const std::filesystem::path& path, std::span<const metrics::MetricsRecord> records);
std::vector<metrics::MetricsRecord> read_records_csv(const std::filesystem::path& path);
void write_aggregates_csv(const std::filesystem::path& path, std::span<const Aggregate> rows);
void write_significance_csv(const std::filesystem::path& path, std::span<const SignificanceRow> rows);

/// Text grid: one block per metric, rows = methods (LDPET first), columns = doses,
/// cells "mean ± std" with significance markers; the best mean per column is bracketed.
std::string render_table(const BenchmarkResult& result);

/// Recomputes aggregates and significance for every method against `baseline`.
void finalize(BenchmarkResult& result, const std::string& baseline);

}  // namespace crossdose::eval
