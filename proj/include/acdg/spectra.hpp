// ===== Synthetic multi-condition spectrum generation, SNR, dataset I/O =====
//
// Clean spectra are sums of Lorentzian peaks over a shared polynomial
// background; acquisition noise is shot-like plus Gaussian read noise, scaled
// by integration time. All generation is a pure function of (seed, config)
// with per-sample RNG streams.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdg/common.hpp"
#include "acdg/rng.hpp"

namespace acdg {

// ===== Axis =====

struct Axis {
  double start = 280.0;
  double step = 2.0;
  int length = 954;

  double wavenumber(int i) const { return start + step * i; }
  double span() const { return step * (length - 1); }

  void validate() const {
    check_config(step > 0.0, "axis step must be positive");
    check_config(length >= 2, "axis length must be at least 2");
  }

  // Default axis keeps the 280..2186 range at every length.
  static Axis make_default(int length = 954) {
    check_config(length >= 2, "axis length must be at least 2");
    return Axis{280.0, 1906.0 / (length - 1), length};
  }

  // Inclusive index range covered by [lo, hi] cm^-1; empty band is an error.
  std::pair<int, int> band_indices(double lo, double hi) const {
    check_config(lo <= hi, "band bounds out of order");
    int i0 = static_cast<int>(std::ceil((lo - start) / step - 1e-9));
    int i1 = static_cast<int>(std::floor((hi - start) / step + 1e-9));
    i0 = std::max(i0, 0);
    i1 = std::min(i1, length - 1);
    check_config(i0 <= i1, "band covers no axis points");
    return {i0, i1};
  }
};

constexpr double kNoiseBandLo = 1800.0;
constexpr double kNoiseBandHi = 1900.0;

struct Bands {
  std::pair<double, double> signal{280.0, 1750.0};
  std::pair<double, double> noise{kNoiseBandLo, kNoiseBandHi};
};

// ===== Profiles and spectra =====

struct Peak {
  double center = 0.0;
  double width = 1.0;
  double amplitude = 0.0;
};

struct StrainProfile {
  int strain_id = 0;
  std::vector<Peak> peaks;
  // Polynomial in u = 1 - (x - start)/span, so coefficients weight the
  // left (low-wavenumber) edge and the background decays toward the
  // designated noise band.
  std::vector<double> baseline;
};

struct Spectrum {
  std::vector<double> intensities;
  int strain_label = 0;
  double condition_s = 0.0;
  long long sample_id = 0;
};

struct DomainDataset {
  Axis axis;
  std::vector<Spectrum> spectra;
  std::vector<double> conditions;
  int class_count = 0;
};

struct TaskSplit {
  double source_condition = 0.0;
  double train_fraction = 0.0;
  std::vector<Spectrum> train;
  std::vector<Spectrum> intra_test;
  std::map<double, std::vector<Spectrum>> inter_test;
};

inline std::vector<double> default_conditions() { return {0.01, 0.1, 1.0, 10.0, 15.0}; }

// ===== Profile generation =====

namespace detail {
constexpr std::uint64_t kSharedStream = 0x5348415245ULL;
constexpr std::uint64_t kStrainStreamBase = 0x53545241494EULL;
}  // namespace detail

inline std::vector<StrainProfile> make_profiles(std::uint64_t seed, int n_strains,
                                                const Axis& axis) {
  axis.validate();
  check_config(n_strains >= 2, "need at least 2 strains");

  // Signature peaks sit on an even grid over [400, 1600]; jitter is capped so
  // any two signatures stay more than 4.5 axis steps apart.
  const double grid_lo = 400.0, grid_hi = 1600.0;
  const double spacing = (grid_hi - grid_lo) / n_strains;
  const double slack = (spacing - 4.5 * axis.step) / 2.0;
  check_config(slack > 0.0, "too many strains for this axis resolution");
  const double jitter = std::min(0.2 * spacing, slack);

  // Background rises toward the low-wavenumber edge (u near 1) and is nearly
  // flat and faint inside the noise band (u near 0.18), keeping clean spectra
  // quiet there.
  Rng shared(mix_seed(seed, detail::kSharedStream));
  std::vector<double> base_coeffs = {shared.uniform(0.0008, 0.0016), 0.0,
                                     shared.uniform(0.015, 0.030),
                                     shared.uniform(0.020, 0.050)};
  std::vector<Peak> shared_peaks;
  for (int i = 0; i < 2; ++i)
    shared_peaks.push_back(Peak{shared.uniform(450.0, 1500.0), shared.uniform(8.0, 20.0),
                                shared.uniform(0.30, 0.50)});

  std::vector<StrainProfile> profiles;
  profiles.reserve(n_strains);
  for (int s = 0; s < n_strains; ++s) {
    Rng rng(mix_seed(seed, detail::kStrainStreamBase + static_cast<std::uint64_t>(s)));
    StrainProfile p;
    p.strain_id = s;
    p.baseline = base_coeffs;
    p.peaks.push_back(Peak{grid_lo + spacing * (s + 0.5) + rng.uniform(-jitter, jitter),
                           rng.uniform(8.0, 20.0), rng.uniform(0.70, 1.00)});
    const int minor = 3;
    for (int m = 0; m < minor; ++m)
      p.peaks.push_back(Peak{rng.uniform(350.0, 1550.0), rng.uniform(8.0, 20.0),
                             rng.uniform(0.25, 0.70)});
    p.peaks.insert(p.peaks.end(), shared_peaks.begin(), shared_peaks.end());
    profiles.push_back(std::move(p));
  }
  return profiles;
}

// Tight span of all peak supports (center +/- 3 width), clipped to the axis
// and kept clear of the noise band.
inline Bands bands_for(const std::vector<StrainProfile>& profiles, const Axis& axis) {
  check_config(!profiles.empty(), "no profiles");
  double lo = 1e300, hi = -1e300;
  for (const auto& p : profiles)
    for (const auto& pk : p.peaks) {
      lo = std::min(lo, pk.center - 3.0 * pk.width);
      hi = std::max(hi, pk.center + 3.0 * pk.width);
    }
  Bands b;
  b.signal.first = std::max(lo, axis.start);
  b.signal.second = std::min({hi, axis.wavenumber(axis.length - 1), kNoiseBandLo - axis.step});
  check_config(b.signal.first < b.signal.second, "degenerate signal band");
  return b;
}

// ===== Clean synthesis =====

namespace detail {
// Lorentzian line with a smooth compact-support taper: exact within 6 widths,
// cosine rolloff to zero by 8 widths. Kills the 1/r^2 tail so peaks cannot
// leak into the designated noise band.
inline double peak_value(const Peak& pk, double x) {
  const double r = std::abs(x - pk.center) / pk.width;
  if (r >= 8.0) return 0.0;
  double window = 1.0;
  if (r > 6.0) {
    const double c = std::cos(3.14159265358979323846 * (r - 6.0) / 4.0);
    window = c * c;
  }
  return pk.amplitude / (1.0 + r * r) * window;
}
}  // namespace detail

inline Spectrum synthesize_clean(const StrainProfile& profile, const Axis& axis) {
  axis.validate();
  Spectrum s;
  s.strain_label = profile.strain_id;
  s.condition_s = 0.0;
  s.intensities.assign(axis.length, 0.0);
  const double span = axis.span();
  double peak = 0.0;
  for (int i = 0; i < axis.length; ++i) {
    const double x = axis.wavenumber(i);
    double v = 0.0;
    for (const auto& pk : profile.peaks) v += detail::peak_value(pk, x);
    const double u = 1.0 - (x - axis.start) / span;
    double up = 1.0;
    for (double c : profile.baseline) {
      v += c * up;
      up *= u;
    }
    v = std::max(v, 0.0);
    s.intensities[i] = v;
    peak = std::max(peak, v);
  }
  if (peak > 0.0)
    for (auto& v : s.intensities) v /= peak;
  return s;
}

// ===== Acquisition noise =====

// Photon-counting model. A unit-intensity point collects flux photons per
// second, so exposures of t seconds see Poisson-like shot noise with relative
// magnitude 1/sqrt(t * flux * v); kappa is a dark-count floor in photons and
// read_sigma a detector floor in rescaled intensity units, which caps the
// attainable SNR at long exposures.
struct AcquisitionNoise {
  double kappa = 0.5;
  double read_sigma = 0.01;
  double flux = 200.0;
};

inline Spectrum apply_acquisition(const Spectrum& clean, double t, Rng& rng,
                                  const AcquisitionNoise& noise = {}) {
  check_config(t > 0.0, "acquisition time must be positive");
  check_config(noise.flux > 0.0, "photon flux must be positive");
  Spectrum out = clean;
  out.condition_s = t;
  const double scale = t * noise.flux;
  for (auto& v : out.intensities) {
    const double counts = scale * v;
    const double shot = std::sqrt(std::max(counts + noise.kappa, 0.0)) * rng.normal();
    const double read = noise.read_sigma * rng.normal();
    v = (counts + shot) / scale + read;
  }
  return out;
}

// ===== SNR =====

inline double compute_snr(const std::vector<double>& intensities, const Axis& axis,
                          std::pair<double, double> signal_band,
                          std::pair<double, double> noise_band) {
  check_dim(static_cast<int>(intensities.size()) == axis.length,
            "spectrum length does not match axis");
  const auto [s0, s1] = axis.band_indices(signal_band.first, signal_band.second);
  const auto [n0, n1] = axis.band_indices(noise_band.first, noise_band.second);
  check_config(s1 < n0 || n1 < s0, "signal and noise bands overlap");
  double sp = 0.0, np = 0.0;
  for (int i = s0; i <= s1; ++i) sp += intensities[i] * intensities[i];
  for (int i = n0; i <= n1; ++i) np += intensities[i] * intensities[i];
  sp /= (s1 - s0 + 1);
  np /= (n1 - n0 + 1);
  return 10.0 * std::log10(sp / std::max(np, kPowerEps));
}

inline double compute_snr(const Spectrum& s, const Axis& axis, const Bands& bands) {
  return compute_snr(s.intensities, axis, bands.signal, bands.noise);
}

// ===== Dataset construction =====

inline DomainDataset build_dataset(const std::vector<StrainProfile>& profiles,
                                   const Axis& axis, const std::vector<double>& conditions,
                                   int per_cell, std::uint64_t seed,
                                   const AcquisitionNoise& noise = {}) {
  axis.validate();
  check_config(!profiles.empty(), "no profiles");
  check_config(per_cell >= 1, "per_cell must be at least 1");
  check_config(!conditions.empty(), "conditions list is empty");
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    check_config(conditions[i] > 0.0, "acquisition times must be positive");
    for (std::size_t j = i + 1; j < conditions.size(); ++j)
      check_config(conditions[i] != conditions[j], "duplicate acquisition time");
  }

  DomainDataset ds;
  ds.axis = axis;
  ds.conditions = conditions;
  ds.class_count = static_cast<int>(profiles.size());
  ds.spectra.reserve(profiles.size() * conditions.size() * per_cell);

  std::vector<Spectrum> cleans;
  cleans.reserve(profiles.size());
  for (const auto& p : profiles) cleans.push_back(synthesize_clean(p, axis));

  long long sample_id = 0;
  for (std::size_t s = 0; s < profiles.size(); ++s)
    for (std::size_t c = 0; c < conditions.size(); ++c)
      for (int r = 0; r < per_cell; ++r) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(sample_id)));
        Spectrum sp = apply_acquisition(cleans[s], conditions[c], rng, noise);
        sp.sample_id = sample_id++;
        ds.spectra.push_back(std::move(sp));
      }
  return ds;
}

// ===== Task split =====

inline TaskSplit split_task(const DomainDataset& ds, double source_condition,
                            double train_fraction, std::uint64_t seed) {
  check_config(std::find(ds.conditions.begin(), ds.conditions.end(), source_condition) !=
                   ds.conditions.end(),
               "source condition not present in dataset");
  check_config(train_fraction > 0.0 && train_fraction <= 1.0,
               "train fraction must lie in (0, 1]");

  TaskSplit split;
  split.source_condition = source_condition;
  split.train_fraction = train_fraction;

  std::vector<std::vector<int>> by_class(ds.class_count);
  for (int i = 0; i < static_cast<int>(ds.spectra.size()); ++i) {
    const auto& s = ds.spectra[i];
    if (s.condition_s == source_condition)
      by_class[s.strain_label].push_back(i);
    else
      split.inter_test[s.condition_s].push_back(s);
  }

  // Largest-remainder stratification: per-class train counts differ by <= 1
  // on balanced datasets and always sum to round(fraction * n_source).
  long long n_source = 0;
  for (const auto& idx : by_class) n_source += static_cast<long long>(idx.size());
  check_config(n_source > 0, "source condition has no spectra");
  const long long total_train = std::llround(train_fraction * static_cast<double>(n_source));

  std::vector<long long> take(ds.class_count);
  std::vector<std::pair<double, int>> rema;
  long long assigned = 0;
  for (int c = 0; c < ds.class_count; ++c) {
    const double exact = train_fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<long long>(std::floor(exact + 1e-9));
    assigned += take[c];
    rema.push_back({exact - static_cast<double>(take[c]), c});
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t k = 0; assigned < total_train && k < rema.size(); ++k, ++assigned)
    ++take[rema[k].second];

  Rng rng(mix_seed(seed, 0x53504C4954ULL));
  for (int c = 0; c < ds.class_count; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx.begin(), idx.end());
    take[c] = std::min<long long>(take[c], static_cast<long long>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (static_cast<long long>(k) < take[c])
        split.train.push_back(ds.spectra[idx[k]]);
      else
        split.intra_test.push_back(ds.spectra[idx[k]]);
    }
  }
  return split;
}

// ===== Normalization =====

inline std::vector<double> normalize_minmax(const std::vector<double>& v) {
  check_config(!v.empty(), "empty spectrum");
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  const double range = *mx - *mn;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *mn) / range;
  return out;
}

inline Spectrum normalize_minmax(const Spectrum& s) {
  Spectrum out = s;
  out.intensities = normalize_minmax(s.intensities);
  return out;
}

// ===== I/O =====

namespace detail {
inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace detail

inline void save_axis_json(const Axis& axis, const std::string& path) {
  nlohmann::ordered_json j;
  j["start"] = axis.start;
  j["step"] = axis.step;
  j["length"] = axis.length;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write axis sidecar: " + path);
  f << j.dump(2) << "\n";
}

inline Axis load_axis_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read axis sidecar: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw SchemaError("axis sidecar is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || j.size() != 3 || !j.contains("start") || !j.contains("step") ||
      !j.contains("length"))
    throw SchemaError("axis sidecar must contain exactly start, step, length");
  if (!j["start"].is_number() || !j["step"].is_number() || !j["length"].is_number_integer())
    throw SchemaError("axis sidecar fields have wrong types");
  Axis axis{j["start"].get<double>(), j["step"].get<double>(), j["length"].get<int>()};
  try {
    axis.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("axis sidecar invalid: ") + e.what());
  }
  return axis;
}

inline void save_bands_json(const Bands& bands, const std::string& path) {
  nlohmann::ordered_json j;
  j["signal"] = {bands.signal.first, bands.signal.second};
  j["noise"] = {bands.noise.first, bands.noise.second};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write bands sidecar: " + path);
  f << j.dump(2) << "\n";
}

inline Bands load_bands_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read bands sidecar: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw SchemaError("bands sidecar is not valid JSON: " + std::string(e.what()));
  }
  auto read_pair = [&](const char* key) -> std::pair<double, double> {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
      throw SchemaError(std::string("bands sidecar missing pair: ") + key);
    return {j[key][0].get<double>(), j[key][1].get<double>()};
  };
  Bands b;
  b.signal = read_pair("signal");
  b.noise = read_pair("noise");
  return b;
}

inline void save_dataset_csv(const DomainDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write dataset: " + path);
  f << "sample_id,strain_label,condition_s";
  for (int i = 0; i < ds.axis.length; ++i) f << ",i" << i;
  f << "\n";
  for (const auto& s : ds.spectra) {
    check_dim(static_cast<int>(s.intensities.size()) == ds.axis.length,
              "spectrum length does not match axis");
    f << s.sample_id << "," << s.strain_label << "," << detail::fmt_real(s.condition_s);
    for (double v : s.intensities) f << "," << detail::fmt_real(v);
    f << "\n";
  }
  if (!f) throw IoError("short write: " + path);
}

inline DomainDataset load_dataset_csv(const std::string& path, const Axis& axis) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read dataset: " + path);
  axis.validate();

  std::string line;
  if (!std::getline(f, line)) throw SchemaError("dataset has no header: " + path);
  {
    std::string expect = "sample_id,strain_label,condition_s";
    for (int i = 0; i < axis.length; ++i) expect += ",i" + std::to_string(i);
    if (line != expect)
      throw SchemaError("dataset header does not match axis length " +
                        std::to_string(axis.length));
  }

  DomainDataset ds;
  ds.axis = axis;
  int max_label = -1;
  std::vector<double> seen_conditions;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    Spectrum s;
    s.intensities.reserve(axis.length);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    int field = 0;
    while (p <= end) {
      const char* q = std::find(p, end, ',');
      if (field == 0) {
        auto r = std::from_chars(p, q, s.sample_id);
        if (r.ec != std::errc() || r.ptr != q) throw SchemaError("bad sample_id");
      } else if (field == 1) {
        auto r = std::from_chars(p, q, s.strain_label);
        if (r.ec != std::errc() || r.ptr != q) throw SchemaError("bad strain_label");
      } else {
        double v = 0.0;
        auto r = std::from_chars(p, q, v);
        if (r.ec != std::errc() || r.ptr != q)
          throw SchemaError("bad real at line " + std::to_string(line_no));
        if (!std::isfinite(v)) throw SchemaError("non-finite value");
        if (field == 2)
          s.condition_s = v;
        else
          s.intensities.push_back(v);
      }
      ++field;
      if (q == end) break;
      p = q + 1;
    }
    if (static_cast<int>(s.intensities.size()) != axis.length)
      throw SchemaError("row length does not match axis at line " + std::to_string(line_no));
    if (s.strain_label < 0) throw SchemaError("negative strain label");
    max_label = std::max(max_label, s.strain_label);
    if (std::find(seen_conditions.begin(), seen_conditions.end(), s.condition_s) ==
        seen_conditions.end())
      seen_conditions.push_back(s.condition_s);
    ds.spectra.push_back(std::move(s));
  }
  if (ds.spectra.empty()) throw SchemaError("dataset has no rows: " + path);
  std::sort(seen_conditions.begin(), seen_conditions.end());
  ds.conditions = seen_conditions;
  ds.class_count = max_label + 1;
  return ds;
}

}  // namespace acdg
