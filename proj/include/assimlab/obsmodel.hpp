#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "assimlab/binary_io.hpp"
#include "assimlab/lorenz96.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/tensor.hpp"

namespace assimlab::obs {

/// Observations y_t over rows t = 0..T. Unobserved entries hold exact zeros;
/// `mask` holds 1.0 where observed and 0.0 elsewhere.
struct ObservationSet {
  Tensor values;
  Tensor mask;
  double noise_std = 1.0;
  double coverage = 0.25;
  std::uint64_t seed = 0;

  std::size_t rows() const { return values.dim(0); }
  std::size_t n() const { return values.dim(1); }
};

struct AssimDataset {
  l96::Trajectory truth;  // evaluation only
  ObservationSet observations;
  std::size_t split = 0;  // first validation row
};

inline std::size_t observed_per_step(std::size_t n, double coverage) {
  return static_cast<std::size_t>(std::llround(coverage * static_cast<double>(n)));
}

/// Per row, a fresh uniformly random subset of exactly round(coverage * n) variables.
inline Tensor make_mask(std::size_t n, std::size_t steps, double coverage, std::uint64_t seed) {
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw ContractError("make_mask: coverage must lie in (0, 1], got " + std::to_string(coverage));
  }
  const std::size_t k = observed_per_step(n, coverage);
  if (k == 0) throw ContractError("make_mask: degenerate coverage, round(coverage * n) = 0");
  Tensor mask(Shape{steps + 1, n});
  CounterRng rng(seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t t = 0; t <= steps; ++t) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(n - j));
      std::swap(idx[j], idx[pick]);
      mask(t, idx[j]) = 1.0;
    }
  }
  return mask;
}

/// values = mask * (truth + noise_std * N(0, 1)), zero elsewhere.
inline ObservationSet observe(const l96::Trajectory& truth, const Tensor& mask, double noise_std,
                              std::uint64_t seed) {
  require_same_shape(truth.states, mask, "observe");
  ObservationSet o;
  o.values = Tensor(mask.shape());
  o.mask = mask;
  o.noise_std = noise_std;
  o.seed = seed;
  CounterRng rng(seed);
  std::size_t observed = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double z = rng.normal();  // drawn for every cell so streams do not depend on the mask
    if (mask[i] != 0.0) {
      o.values[i] = truth.states[i] + noise_std * z;
      ++observed;
    }
  }
  o.coverage = static_cast<double>(observed) / static_cast<double>(mask.size());
  return o;
}

/// Entry (t, i) copies the observation of variable i closest in time; ties go to the earlier time.
inline Tensor nearest_init(const ObservationSet& o) {
  const std::size_t rows = o.rows(), n = o.n();
  Tensor out(Shape{rows, n});
  std::vector<std::ptrdiff_t> prev(rows), next(rows);
  for (std::size_t i = 0; i < n; ++i) {
    std::ptrdiff_t last = -1;
    for (std::size_t t = 0; t < rows; ++t) {
      if (o.mask(t, i) != 0.0) last = static_cast<std::ptrdiff_t>(t);
      prev[t] = last;
    }
    if (last < 0) throw NumericalError("nearest_init: variable " + std::to_string(i) + " is never observed");
    std::ptrdiff_t upcoming = -1;
    for (std::size_t t = rows; t-- > 0;) {
      if (o.mask(t, i) != 0.0) upcoming = static_cast<std::ptrdiff_t>(t);
      next[t] = upcoming;
    }
    for (std::size_t t = 0; t < rows; ++t) {
      const auto tt = static_cast<std::ptrdiff_t>(t);
      std::ptrdiff_t src;
      if (prev[t] < 0) src = next[t];
      else if (next[t] < 0) src = prev[t];
      else src = (tt - prev[t] <= next[t] - tt) ? prev[t] : next[t];
      out(t, i) = o.values(static_cast<std::size_t>(src), i);
    }
  }
  return out;
}

struct DatasetSpec {
  l96::Lorenz96Config dynamics;
  std::size_t steps = 10000;
  double coverage = 0.25;
  double noise_std = 1.0;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Truth trajectory plus observations; mask and noise use independent streams of `seed`.
inline AssimDataset make_dataset(const DatasetSpec& spec) {
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
    throw ConfigError("make_dataset: val_fraction must lie in (0, 1)");
  }
  AssimDataset ds;
  ds.truth = l96::simulate(spec.dynamics, std::nullopt, spec.steps, derive_seed(spec.seed, "trajectory"));
  const Tensor mask = make_mask(spec.dynamics.n, spec.steps, spec.coverage, derive_seed(spec.seed, "mask"));
  ds.observations = observe(ds.truth, mask, spec.noise_std, derive_seed(spec.seed, "noise"));
  ds.observations.coverage = spec.coverage;
  ds.observations.seed = spec.seed;
  const std::size_t rows = spec.steps + 1;
  ds.split = rows - static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(rows)));
  if (ds.split == 0 || ds.split >= spec.steps) throw ConfigError("make_dataset: split falls outside (0, T)");
  return ds;
}

// ---------------------------------------------------------------------------
// Files

inline constexpr std::uint32_t kTrajectoryVersion = 1;
inline constexpr std::uint32_t kObservationVersion = 1;

inline std::vector<unsigned char> encode_trajectory(const l96::Trajectory& tr) {
  io::ByteWriter w;
  w.magic("L96T");
  w.u32(kTrajectoryVersion);
  w.u64(tr.n());
  w.u64(tr.steps());
  w.f64(tr.config.dt);
  w.f64(tr.config.forcing);
  w.u64(tr.seed);
  w.f64s(tr.states.data());
  return w.buffer();
}

inline l96::Trajectory decode_trajectory(std::vector<unsigned char> bytes) {
  io::ByteReader r(std::move(bytes), "trajectory file");
  r.expect_magic("L96T");
  r.expect_version(kTrajectoryVersion);
  l96::Trajectory tr;
  const std::uint64_t n = r.u64();
  const std::uint64_t steps = r.u64();
  tr.config.n = n;
  tr.config.dt = r.f64();
  tr.config.forcing = r.f64();
  tr.seed = r.u64();
  if (n == 0 || (steps + 1) * n * 8 != r.remaining()) {
    throw FormatError(r.remaining() < (steps + 1) * n * 8 ? FormatError::Code::Truncated
                                                          : FormatError::Code::ShapeMismatch,
                      "trajectory file: payload does not match header dimensions");
  }
  tr.states = Tensor(Shape{steps + 1, n});
  r.f64s(tr.states.data());
  return tr;
}

inline void save_trajectory(const l96::Trajectory& tr, const std::filesystem::path& path) {
  io::write_file(path, encode_trajectory(tr));
}
inline l96::Trajectory load_trajectory(const std::filesystem::path& path) {
  return decode_trajectory(io::read_file(path));
}

inline std::vector<unsigned char> encode_observations(const ObservationSet& o) {
  io::ByteWriter w;
  w.magic("L96O");
  w.u32(kObservationVersion);
  w.u64(o.n());
  w.u64(o.rows() - 1);
  w.f64(o.noise_std);
  w.f64(o.coverage);
  w.u64(o.seed);
  w.f64s(o.values.data());
  std::vector<unsigned char> bits((o.mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < o.mask.size(); ++i) {
    if (o.mask[i] != 0.0) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  }
  w.bytes(bits.data(), bits.size());
  return w.buffer();
}

inline ObservationSet decode_observations(std::vector<unsigned char> bytes) {
  io::ByteReader r(std::move(bytes), "observation file");
  r.expect_magic("L96O");
  r.expect_version(kObservationVersion);
  ObservationSet o;
  const std::uint64_t n = r.u64();
  const std::uint64_t steps = r.u64();
  o.noise_std = r.f64();
  o.coverage = r.f64();
  o.seed = r.u64();
  const std::size_t cells = (steps + 1) * n;
  const std::size_t need = cells * 8 + (cells + 7) / 8;
  if (n == 0 || need != r.remaining()) {
    throw FormatError(r.remaining() < need ? FormatError::Code::Truncated : FormatError::Code::ShapeMismatch,
                      "observation file: payload does not match header dimensions");
  }
  o.values = Tensor(Shape{steps + 1, n});
  r.f64s(o.values.data());
  std::vector<unsigned char> bits((cells + 7) / 8);
  r.bytes(bits.data(), bits.size());
  o.mask = Tensor(Shape{steps + 1, n});
  for (std::size_t i = 0; i < cells; ++i) o.mask[i] = (bits[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
  return o;
}

inline void save_observations(const ObservationSet& o, const std::filesystem::path& path) {
  io::write_file(path, encode_observations(o));
}
inline ObservationSet load_observations(const std::filesystem::path& path) {
  return decode_observations(io::read_file(path));
}

}  // namespace assimlab::obs
