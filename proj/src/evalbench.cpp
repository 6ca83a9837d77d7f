#include "crossdose/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "crossdose/error.hpp"
#include "crossdose/parallel.hpp"
#include "crossdose/stats.hpp"

namespace fs = std::filesystem;

namespace crossdose::eval {
namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double parse_value(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  if (s == "nan") return NAN;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("records", "not a number: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("records", "not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Mean and sample std that treat an all-equal column (including +inf) as std 0.
std::pair<double, double> mean_std(const std::vector<double>& v) {
  const bool all_equal = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  if (all_equal) return {v.front(), v.size() >= 2 ? 0.0 : NAN};
  const double m = stats::mean(v);
  if (!std::isfinite(m)) return {m, NAN};
  return {m, v.size() >= 2 ? stats::sample_std(v) : NAN};
}

int method_rank(const std::string& name, const train::Checkpoint* ckpt) {
  if (name == "individual") return 0;
  if (!ckpt) return 4;
  switch (ckpt->model_spec.variant) {
    case nn::Variant::kDirect: return 1;
    case nn::Variant::kDoseEmbedded: return 2;
    case nn::Variant::kResidual: return 3;
  }
  return 4;
}

}  // namespace

const char* to_string(Metric m) noexcept {
  switch (m) {
    case Metric::kPsnr: return "psnr";
    case Metric::kSsim: return "ssim";
    case Metric::kRmse: return "rmse";
  }
  return "?";
}

Metric parse_metric(const std::string& text) {
  if (text == "psnr") return Metric::kPsnr;
  if (text == "ssim") return Metric::kSsim;
  if (text == "rmse") return Metric::kRmse;
  throw ValidationError("unknown metric '" + text + "'");
}

double metric_value(const metrics::MetricsRecord& r, Metric m) {
  switch (m) {
    case Metric::kPsnr: return r.psnr;
    case Metric::kSsim: return r.ssim;
    case Metric::kRmse: return r.rmse;
  }
  return NAN;
}

bool Method::covers(Dose d) const { return doses.empty() || std::find(doses.begin(), doses.end(), d) != doses.end(); }

Method method_from_checkpoint(const std::string& name, const train::Checkpoint& ckpt) {
  auto model = std::make_shared<const nn::Model>(ckpt.model());
  Method m;
  m.name = name;
  const bool dose_input = ckpt.model_spec.variant == nn::Variant::kDoseEmbedded;
  m.denoise = [model, dose_input](const RasterF32& x, Dose d) {
    return train::denoise(*model, x, dose_input ? std::optional<Dose>(d) : std::nullopt);
  };
  if (ckpt.train_config.regime.kind == train::DoseRegime::Kind::kSingleDose) m.doses = {ckpt.train_config.regime.dose};
  return m;
}

Method individual_method(const std::string& name, std::span<const train::Checkpoint> per_dose) {
  std::map<int, std::shared_ptr<const nn::Model>> models;
  std::map<int, bool> dose_input;
  Method m;
  m.name = name;
  for (const auto& c : per_dose) {
    if (c.train_config.regime.kind != train::DoseRegime::Kind::kSingleDose) {
      throw ValidationError(std::string("checkpoint of variant '") + nn::to_string(c.model_spec.variant) +
                            "' was trained on all doses and cannot be part of an individual-model method");
    }
    const Dose d = c.train_config.regime.dose;
    if (models.count(d.percent())) throw ValidationError("two individual checkpoints for dose " + d.label());
    models[d.percent()] = std::make_shared<const nn::Model>(c.model());
    dose_input[d.percent()] = c.model_spec.variant == nn::Variant::kDoseEmbedded;
    m.doses.push_back(d);
  }
  std::sort(m.doses.begin(), m.doses.end());
  m.denoise = [models, dose_input](const RasterF32& x, Dose d) {
    auto it = models.find(d.percent());
    if (it == models.end()) throw ValidationError("no individual model for dose " + d.label());
    return train::denoise(*it->second, x, dose_input.at(d.percent()) ? std::optional<Dose>(d) : std::nullopt);
  };
  return m;
}

std::vector<Method> methods_from_runs(const fs::path& runs_dir) {
  if (!fs::is_directory(runs_dir)) {
    throw MissingPrerequisite("no training runs at " + runs_dir.string() + " (run `crossdose train` first)");
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(runs_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "final" / "meta.txt")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw MissingPrerequisite("no finished training runs under " + runs_dir.string() + " (run `crossdose train` first)");
  }
  std::vector<train::Checkpoint> individual;
  std::vector<std::pair<std::string, train::Checkpoint>> others;
  for (const auto& d : dirs) {
    train::Checkpoint c = train::load_checkpoint(d / "final");
    if (c.train_config.regime.kind == train::DoseRegime::Kind::kSingleDose) individual.push_back(std::move(c));
    else others.emplace_back(d.filename().string(), std::move(c));
  }
  std::stable_sort(others.begin(), others.end(), [](const auto& a, const auto& b) {
    return method_rank(a.first, &a.second) < method_rank(b.first, &b.second);
  });
  std::vector<Method> out;
  if (!individual.empty()) out.push_back(individual_method("individual", individual));
  for (const auto& [name, c] : others) out.push_back(method_from_checkpoint(name, c));
  return out;
}

BenchmarkResult evaluate(std::span<const Method> methods, const fs::path& dataset_root, const EvalOptions& opts) {
  const DatasetManifest manifest = rasterio::scan_dataset(dataset_root);
  const auto subjects = manifest.subjects(Split::kTest);
  if (subjects.empty()) throw ValidationError("dataset has no test subjects");
  for (const auto& m : methods) {
    if (m.name == kLdpet) throw ValidationError("method name 'LDPET' is reserved for the raw low-dose row");
    if (!m.denoise) throw ValidationError("method '" + m.name + "' has no denoiser");
  }
  opts.ssim.validate();

  struct Cell {
    std::size_t method;  // 0 = LDPET, k = methods[k - 1]
    std::size_t subject;
    Dose dose;
  };
  std::vector<Cell> cells;
  for (std::size_t k = 0; k <= methods.size(); ++k) {
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      for (Dose d : manifest.dose_levels) {
        if (k == 0 || methods[k - 1].covers(d)) cells.push_back({k, s, d});
      }
    }
  }

  std::vector<metrics::MetricsRecord> records(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const Cell& c = cells[i];
    const std::string& id = subjects[c.subject];
    const RasterF32 y = rasterio::read_raster(rasterio::reference_path(dataset_root, id));
    const RasterF32 x = rasterio::read_raster(rasterio::dose_path(dataset_root, id, c.dose));
    const RasterF32 est = c.method == 0 ? x : methods[c.method - 1].denoise(x, c.dose);
    require_same_shape(est, y, "evaluate");
    metrics::MetricsRecord& r = records[i];
    r.subject_id = id;
    r.dose = c.dose;
    r.method = c.method == 0 ? kLdpet : methods[c.method - 1].name;
    r.rmse = metrics::rmse(y, est);
    r.psnr = metrics::psnr_from_rmse(r.rmse, opts.dynamic_range);
    r.ssim = metrics::ssim(y, est, opts.ssim);
  });

  BenchmarkResult result;
  result.records = std::move(records);
  finalize(result, opts.baseline);
  return result;
}

std::vector<Aggregate> aggregate(std::span<const metrics::MetricsRecord> records) {
  std::vector<std::pair<std::string, Dose>> keys;
  std::map<std::pair<std::string, int>, std::vector<const metrics::MetricsRecord*>> groups;
  for (const auto& r : records) {
    auto key = std::make_pair(r.method, r.dose.percent());
    if (!groups.count(key)) keys.emplace_back(r.method, r.dose);
    groups[key].push_back(&r);
  }
  std::vector<Aggregate> out;
  for (const auto& [method, dose] : keys) {
    const auto& g = groups[{method, dose.percent()}];
    std::vector<double> p, s, e;
    for (const auto* r : g) {
      p.push_back(r->psnr);
      s.push_back(r->ssim);
      e.push_back(r->rmse);
    }
    Aggregate a;
    a.method = method;
    a.dose = dose;
    a.n = g.size();
    std::tie(a.mean_psnr, a.std_psnr) = mean_std(p);
    std::tie(a.mean_ssim, a.std_ssim) = mean_std(s);
    std::tie(a.mean_rmse, a.std_rmse) = mean_std(e);
    out.push_back(a);
  }
  return out;
}

std::vector<Aggregate> per_subject_std(const BenchmarkResult& result) {
  auto rows = aggregate(result.records);
  for (const auto& a : rows) {
    if (a.n < 2) {
      throw ValidationError("per-subject std of '" + a.method + "' at dose " + a.dose.label() +
                            " needs at least two subjects");
    }
  }
  return rows;
}

std::vector<SignificanceRow> paired_significance(const BenchmarkResult& result, const std::string& method_a,
                                                 const std::string& baseline, Metric metric) {
  std::map<int, std::map<std::string, double>> a_vals, b_vals;
  for (const auto& r : result.records) {
    if (r.method == method_a) a_vals[r.dose.percent()][r.subject_id] = metric_value(r, metric);
    if (r.method == baseline) b_vals[r.dose.percent()][r.subject_id] = metric_value(r, metric);
  }
  std::vector<SignificanceRow> out;
  for (const auto& [dose, av] : a_vals) {
    auto bit = b_vals.find(dose);
    if (bit == b_vals.end()) continue;
    std::vector<double> xa, xb;
    for (const auto& [subject, v] : av) {
      auto it = bit->second.find(subject);
      if (it == bit->second.end()) {
        throw ValidationError("subject " + subject + " missing from baseline '" + baseline + "'");
      }
      xa.push_back(v);
      xb.push_back(it->second);
    }
    if (xa.size() != bit->second.size()) {
      throw ValidationError("methods '" + method_a + "' and '" + baseline + "' cover different subjects");
    }
    SignificanceRow row;
    row.method = method_a;
    row.baseline = baseline;
    row.dose = Dose(dose);
    row.metric = metric;
    row.n = xa.size();
    // Infinite PSNR pairs (identical images) compare equal and drop out of the test.
    for (std::size_t i = 0; i < xa.size(); ++i) {
      if (std::isinf(xa[i]) && xa[i] == xb[i]) xa[i] = xb[i] = 0;
    }
    const auto w = stats::wilcoxon_signed_rank(xa, xb);
    row.p_value = w.p_value;
    row.exact = w.exact;
    row.marker = stats::significance_marker(w.p_value);
    if (xa.size() < 5) row.note = "exact test with fewer than 5 subjects";
    else if (w.n_used < xa.size()) row.note = std::to_string(xa.size() - w.n_used) + " tied pairs dropped";
    out.push_back(row);
  }
  return out;
}

void finalize(BenchmarkResult& result, const std::string& baseline) {
  result.aggregates = aggregate(result.records);
  result.significance.clear();
  std::vector<std::string> names;
  for (const auto& a : result.aggregates) {
    if (std::find(names.begin(), names.end(), a.method) == names.end()) names.push_back(a.method);
  }
  if (std::find(names.begin(), names.end(), baseline) == names.end()) return;
  for (const auto& name : names) {
    if (name == baseline) continue;
    for (Metric m : {Metric::kPsnr, Metric::kSsim, Metric::kRmse}) {
      auto rows = paired_significance(result, name, baseline, m);
      result.significance.insert(result.significance.end(), rows.begin(), rows.end());
    }
  }
}

RasterF32 difference_map(const RasterF32& est, const RasterF32& reference) {
  require_same_shape(est, reference, "difference_map");
  RasterF32 out(est.height, est.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = est.data[i] - reference.data[i];
  return out;
}

RasterF32 mip(std::span<const RasterF32> stack) {
  if (stack.empty()) throw ValidationError("mip of an empty stack");
  RasterF32 out = stack.front();
  for (std::size_t k = 1; k < stack.size(); ++k) {
    require_same_shape(stack[k], out, "mip");
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], stack[k].data[i]);
  }
  return out;
}

void write_records_csv(const fs::path& path, std::span<const metrics::MetricsRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject,dose,method,psnr,ssim,rmse\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.dose.label() << ',' << r.method << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ','
        << fmt(r.rmse) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<metrics::MetricsRecord> read_records_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("no records at " + path.string() + " (run `crossdose evaluate` first)");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "subject,dose,method,psnr,ssim,rmse") throw FormatError("records", "unexpected header '" + line + "'");
  std::vector<metrics::MetricsRecord> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw FormatError("records", "expected 6 columns in '" + line + "'");
    metrics::MetricsRecord r;
    r.subject_id = f[0];
    r.dose = Dose::parse(f[1]);
    r.method = f[2];
    r.psnr = parse_value(f[3]);
    r.ssim = parse_value(f[4]);
    r.rmse = parse_value(f[5]);
    out.push_back(r);
  }
  return out;
}

void write_aggregates_csv(const fs::path& path, std::span<const Aggregate> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,dose,n,mean_psnr,std_psnr,mean_ssim,std_ssim,mean_rmse,std_rmse\n";
  for (const auto& a : rows) {
    out << a.method << ',' << a.dose.label() << ',' << a.n << ',' << fmt(a.mean_psnr) << ',' << fmt(a.std_psnr) << ','
        << fmt(a.mean_ssim) << ',' << fmt(a.std_ssim) << ',' << fmt(a.mean_rmse) << ',' << fmt(a.std_rmse) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_significance_csv(const fs::path& path, std::span<const SignificanceRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,baseline,dose,metric,n,p_value,marker,exact,note\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.baseline << ',' << r.dose.label() << ',' << to_string(r.metric) << ',' << r.n << ','
        << fmt(r.p_value) << ',' << r.marker << ',' << (r.exact ? 1 : 0) << ',' << r.note << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::string render_table(const BenchmarkResult& result) {
  std::vector<std::string> methods;
  std::vector<Dose> doses;
  for (const auto& a : result.aggregates) {
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
    if (std::find(doses.begin(), doses.end(), a.dose) == doses.end()) doses.push_back(a.dose);
  }
  std::sort(doses.begin(), doses.end());
  auto find_agg = [&](const std::string& m, Dose d) -> const Aggregate* {
    for (const auto& a : result.aggregates) {
      if (a.method == m && a.dose == d) return &a;
    }
    return nullptr;
  };
  auto find_marker = [&](const std::string& m, Dose d, Metric metric) -> std::string {
    for (const auto& s : result.significance) {
      if (s.method == m && s.dose == d && s.metric == metric) return s.marker;
    }
    return "";
  };

  std::ostringstream os;
  std::size_t name_w = 8;
  for (const auto& m : methods) name_w = std::max(name_w, m.size());
  constexpr int kCell = 20;
  for (Metric metric : {Metric::kPsnr, Metric::kSsim, Metric::kRmse}) {
    const bool higher_better = metric != Metric::kRmse;
    const char* unit = metric == Metric::kPsnr ? "PSNR (dB)" : metric == Metric::kSsim ? "SSIM" : "RMSE (SUV)";
    os << unit << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), "method");
    os << buf;
    for (Dose d : doses) {
      std::snprintf(buf, sizeof buf, " %*s", kCell, (std::to_string(d.percent()) + "%").c_str());
      os << buf;
    }
    os << "\n";
    for (const auto& m : methods) {
      std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), m.c_str());
      os << buf;
      for (Dose d : doses) {
        const Aggregate* a = find_agg(m, d);
        std::string cell = "-";
        if (a) {
          const double mean = metric == Metric::kPsnr ? a->mean_psnr : metric == Metric::kSsim ? a->mean_ssim : a->mean_rmse;
          const double sd = metric == Metric::kPsnr ? a->std_psnr : metric == Metric::kSsim ? a->std_ssim : a->std_rmse;
          bool best = true;
          for (const auto& other : methods) {
            const Aggregate* o = find_agg(other, d);
            if (!o || o == a) continue;
            const double ov = metric == Metric::kPsnr ? o->mean_psnr : metric == Metric::kSsim ? o->mean_ssim : o->mean_rmse;
            if (higher_better ? ov > mean : ov < mean) best = false;
          }
          char v[48];
          if (metric == Metric::kPsnr) std::snprintf(v, sizeof v, "%.3f±%.3f", mean, sd);
          else std::snprintf(v, sizeof v, "%.4f±%.4f", mean, sd);
          cell = std::string(v) + find_marker(m, d, metric);
          if (best) cell = "[" + cell + "]";
        }
        // "±" and "†" are multi-byte: pad by display width.
        std::size_t width = 0;
        for (unsigned char ch : cell) width += (ch & 0xC0) != 0x80;
        os << ' ' << std::string(width < kCell ? kCell - width : 0, ' ') << cell;
      }
      os << "\n";
    }
    os << "\n";
  }
  os << "markers: † p < 0.005, * p < 0.05 (two-sided Wilcoxon signed-rank, paired by subject";
  if (!result.significance.empty()) os << ", vs " << result.significance.front().baseline;
  os << "); [ ] best mean per column\n";
  return os.str();
}

}  // namespace crossdose::eval
