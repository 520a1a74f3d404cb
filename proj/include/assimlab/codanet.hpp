#pragma once

// State-estimation network: maps a (2w+1, n) window of zero-filled observations
// and its mask to a diagonal Gaussian (mu, sigma) over the state at the window
// center. Fully convolutional over the periodic spatial axis.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "assimlab/autodiff.hpp"
#include "assimlab/binary_io.hpp"
#include "assimlab/obsmodel.hpp"
#include "assimlab/rng.hpp"

namespace assimlab::net {

enum class OutputMode { Deterministic, Gaussian };

inline std::string to_string(OutputMode m) { return m == OutputMode::Gaussian ? "gaussian" : "deterministic"; }
inline OutputMode output_mode_from_string(const std::string& s) {
  if (s == "gaussian") return OutputMode::Gaussian;
  if (s == "deterministic") return OutputMode::Deterministic;
  throw ConfigError("unknown output mode '" + s + "'");
}

struct NetworkConfig {
  std::size_t window_half_width = 32;
  std::size_t hidden_channels = 64;
  std::size_t depth = 4;
  std::size_t kernel_width = 5;
  double dropout_rate = 0.0;
  OutputMode output_mode = OutputMode::Gaussian;
  double sigma_floor = 1e-3;
  double input_scale = 0.25;   // multiplies observation values on input
  double output_scale = 4.0;   // multiplies the raw mean channel

  std::size_t window_length() const { return 2 * window_half_width + 1; }
  std::size_t input_channels() const { return 2 * window_length(); }

  void validate() const {
    if (depth < 1) throw ConfigError("network: depth must be >= 1");
    if (hidden_channels < 1) throw ConfigError("network: hidden_channels must be >= 1");
    if (kernel_width % 2 == 0) throw ConfigError("network: kernel_width must be odd");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("network: dropout_rate must lie in [0, 1)");
    if (!(sigma_floor > 0.0)) throw ConfigError("network: sigma_floor must be > 0");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Per-cell diagonal Gaussian; tensors are (n) or (B, n).
struct GaussianField {
  Tensor mu;
  Tensor sigma;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline std::vector<std::pair<std::string, Shape>> parameter_shapes(const NetworkConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t cin = cfg.input_channels();
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = "conv" + std::to_string(l);
    out.emplace_back(p + ".weight", Shape{cfg.hidden_channels, cin, cfg.kernel_width});
    out.emplace_back(p + ".bias", Shape{cfg.hidden_channels});
    cin = cfg.hidden_channels;
  }
  out.emplace_back("head.weight", Shape{2, cfg.hidden_channels, 1});
  out.emplace_back("head.bias", Shape{2});
  return out;
}

/// Uniform fan-in initialization; the sigma head bias starts at softplus^-1(1).
inline std::vector<NamedTensor> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng rng(derive_seed(seed, "net.init"));
  std::vector<NamedTensor> params;
  for (auto& [name, shape] : parameter_shapes(cfg)) {
    Tensor t(shape);
    const bool is_bias = shape.size() == 1;
    const std::size_t fan_in = is_bias ? params.back().value.size() / params.back().value.dim(0)
                                       : shape[1] * shape[2];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data()) v = bound * (2.0 * rng.uniform() - 1.0);
    if (name == "head.bias") {
      t[0] = 0.0;
      t[1] = std::log(std::expm1(1.0));
    }
    params.push_back({name, std::move(t)});
  }
  return params;
}

/// Inverted-dropout keep mask: entries are 0 with probability p, else 1/(1-p).
inline Tensor dropout_mask(const Shape& shape, double p, std::uint64_t seed) {
  Tensor m(shape);
  CounterRng rng(derive_seed(seed, "net.dropout"));
  const double keep = 1.0 / (1.0 - p);
  for (double& v : m.data()) v = rng.uniform() < p ? 0.0 : keep;
  return m;
}

struct ForwardVars {
  ad::Var mu;
  ad::Var sigma;
};

/// Differentiable forward over a batch input of shape (B, 2(2w+1), n).
/// Dropout on the head input is applied only when a seed is given and p > 0.
inline ForwardVars forward(ad::Graph& g, std::span<const ad::Var> params, ad::Var input, const NetworkConfig& cfg,
                           std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  const Shape& s = input.shape();
  if (s.size() != 3 || s[1] != cfg.input_channels()) {
    throw ContractError("network forward: input " + shape_str(s) + " does not match " +
                        std::to_string(cfg.input_channels()) + " channels");
  }
  if (params.size() != 2 * cfg.depth + 2) throw ContractError("network forward: wrong parameter count");
  const std::size_t B = s[0], n = s[2];
  ad::Var h = input;
  std::string layer;
  try {
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      layer = "conv" + std::to_string(l);
      h = ad::tanh(ad::conv1d_circular(h, params[2 * l], params[2 * l + 1]));
    }
    if (dropout_seed && cfg.dropout_rate > 0.0) {
      h = h * g.constant(dropout_mask(h.shape(), cfg.dropout_rate, *dropout_seed));
    }
    layer = "head";
    ad::Var head = ad::conv1d_circular(h, params[2 * cfg.depth], params[2 * cfg.depth + 1]);
    ForwardVars out;
    out.mu = ad::reshape(ad::slice(head, 1, 0, 1), Shape{B, n}) * cfg.output_scale;
    if (cfg.output_mode == OutputMode::Gaussian) {
      out.sigma = ad::softplus(ad::reshape(ad::slice(head, 1, 1, 2), Shape{B, n})) + cfg.sigma_floor;
    } else {
      out.sigma = g.constant(Tensor(Shape{B, n}, 1.0));
    }
    return out;
  } catch (const DifferentiationError& e) {
    throw NumericalError("network forward: layer " + layer + ": " + e.what());
  }
}

/// Network input for windows centered at the given rows: (B, 2(2w+1), n).
inline Tensor make_input(const obs::ObservationSet& o, std::span<const std::size_t> centers,
                         const NetworkConfig& cfg) {
  const std::size_t w = cfg.window_half_width, L = cfg.window_length(), n = o.n();
  Tensor in(Shape{centers.size(), 2 * L, n});
  for (std::size_t b = 0; b < centers.size(); ++b) {
    const std::size_t c = centers[b];
    if (c < w || c + w >= o.rows()) {
      throw ContractError("window centered at " + std::to_string(c) + " exceeds observation rows " +
                          std::to_string(o.rows()));
    }
    for (std::size_t j = 0; j < L; ++j) {
      const std::size_t r = c - w + j;
      double* vdst = in.data().data() + (b * 2 * L + j) * n;
      double* mdst = in.data().data() + (b * 2 * L + L + j) * n;
      for (std::size_t i = 0; i < n; ++i) {
        vdst[i] = o.values(r, i) * o.mask(r, i) * cfg.input_scale;
        mdst[i] = o.mask(r, i);
      }
    }
  }
  return in;
}

namespace detail {
inline GaussianField eval_batch(std::span<const NamedTensor> params, const Tensor& input, const NetworkConfig& cfg,
                                std::optional<std::uint64_t> dropout_seed) {
  ad::Graph g;
  std::vector<ad::Var> pv;
  for (const auto& p : params) pv.push_back(g.constant(p.value));
  ForwardVars f = forward(g, pv, g.constant(input), cfg, dropout_seed);
  return {f.mu.value(), f.sigma.value()};
}
}  // namespace detail

/// Single-window forward: values and mask are (2w+1, n); returns (n) tensors.
inline GaussianField forward(const Tensor& window_values, const Tensor& window_mask, std::span<const NamedTensor> params,
                             const NetworkConfig& cfg, std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  require_same_shape(window_values, window_mask, "network forward window");
  if (window_values.rank() != 2 || window_values.dim(0) != cfg.window_length()) {
    throw ContractError("network forward: window " + shape_str(window_values.shape()) + " expects " +
                        std::to_string(cfg.window_length()) + " rows");
  }
  obs::ObservationSet o;
  o.values = window_values;
  o.mask = window_mask;
  const std::size_t center = cfg.window_half_width;
  GaussianField f = detail::eval_batch(params, make_input(o, std::span(&center, 1), cfg), cfg, dropout_seed);
  const std::size_t n = window_values.dim(1);
  return {f.mu.reshaped(Shape{n}), f.sigma.reshaped(Shape{n})};
}

/// Batched inference at many centers, evaluated in chunks; returns (B, n) tensors.
/// The dropout seed, when given, is offset per chunk.
inline GaussianField predict(const obs::ObservationSet& o, std::span<const std::size_t> centers,
                             std::span<const NamedTensor> params, const NetworkConfig& cfg,
                             std::optional<std::uint64_t> dropout_seed = std::nullopt, std::size_t chunk = 256) {
  const std::size_t n = o.n();
  GaussianField out{Tensor(Shape{centers.size(), n}), Tensor(Shape{centers.size(), n})};
  for (std::size_t a = 0; a < centers.size(); a += chunk) {
    const std::size_t b = std::min(centers.size(), a + chunk);
    std::optional<std::uint64_t> seed;
    if (dropout_seed) seed = derive_seed(*dropout_seed, "net.predict.chunk", a);
    GaussianField f = detail::eval_batch(params, make_input(o, centers.subspan(a, b - a), cfg), cfg, seed);
    std::copy(f.mu.data().begin(), f.mu.data().end(), out.mu.data().begin() + a * n);
    std::copy(f.sigma.data().begin(), f.sigma.data().end(), out.sigma.data().begin() + a * n);
  }
  return out;
}

/// Reparameterized draw mu + sigma * z, z ~ N(0, I) from `seed`.
inline Tensor sample(const GaussianField& field, std::uint64_t seed) {
  require_same_shape(field.mu, field.sigma, "sample");
  CounterRng rng(seed);
  Tensor x(field.mu.shape());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = field.mu[i] + field.sigma[i] * rng.normal();
  return x;
}

inline Tensor standard_normal(const Shape& shape, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor z(shape);
  for (double& v : z.data()) v = rng.normal();
  return z;
}

/// Differentiable reparameterization with z held constant.
inline ad::Var sample(ad::Var mu, ad::Var sigma, const Tensor& z) {
  return mu + sigma * mu.graph().constant(z);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkConfig config;
  std::vector<NamedTensor> params;
  std::map<std::string, std::string> metadata;  // training info: lambda, horizon, seed, dataset, epoch

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> t;
    for (const auto& p : params) t.push_back(p.value);
    return t;
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not a non-negative integer: '" + s + "'");
  return v;
}

inline std::map<std::string, std::string> config_to_metadata(const NetworkConfig& c) {
  return {{"net.window_half_width", std::to_string(c.window_half_width)},
          {"net.hidden_channels", std::to_string(c.hidden_channels)},
          {"net.depth", std::to_string(c.depth)},
          {"net.kernel_width", std::to_string(c.kernel_width)},
          {"net.dropout_rate", format_double(c.dropout_rate)},
          {"net.output_mode", to_string(c.output_mode)},
          {"net.sigma_floor", format_double(c.sigma_floor)},
          {"net.input_scale", format_double(c.input_scale)},
          {"net.output_scale", format_double(c.output_scale)}};
}

inline NetworkConfig config_from_metadata(std::map<std::string, std::string>& md) {
  auto take = [&](const char* key) {
    auto it = md.find(key);
    if (it == md.end()) throw FormatError(FormatError::Code::Corrupt, std::string("checkpoint: missing ") + key);
    std::string v = it->second;
    md.erase(it);
    return v;
  };
  NetworkConfig c;
  try {
    c.window_half_width = parse_size(take("net.window_half_width"));
    c.hidden_channels = parse_size(take("net.hidden_channels"));
    c.depth = parse_size(take("net.depth"));
    c.kernel_width = parse_size(take("net.kernel_width"));
    c.dropout_rate = parse_double(take("net.dropout_rate"));
    c.output_mode = output_mode_from_string(take("net.output_mode"));
    c.sigma_floor = parse_double(take("net.sigma_floor"));
    c.input_scale = parse_double(take("net.input_scale"));
    c.output_scale = parse_double(take("net.output_scale"));
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Code::Corrupt, std::string("checkpoint metadata: ") + e.what());
  }
  return c;
}

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.magic("CODA");
  w.u32(kCheckpointVersion);
  auto md = config_to_metadata(ck.config);
  for (const auto& [k, v] : ck.metadata) {
    if (k.starts_with("net.")) throw ContractError("checkpoint metadata key '" + k + "' is reserved");
    md[k] = v;
  }
  w.u32(static_cast<std::uint32_t>(md.size()));
  for (const auto& [k, v] : md) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    w.f64s(p.value.data());
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::vector<unsigned char> bytes) {
  io::ByteReader r(std::move(bytes), "checkpoint file");
  r.expect_magic("CODA");
  r.expect_version(kCheckpointVersion);
  Checkpoint ck;
  const std::uint32_t entries = r.u32();
  std::map<std::string, std::string> md;
  for (std::uint32_t i = 0; i < entries; ++i) {
    std::string k = r.str();
    md[k] = r.str();
  }
  ck.config = config_from_metadata(md);
  ck.metadata = std::move(md);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor p;
    p.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(FormatError::Code::Corrupt, "checkpoint: implausible tensor rank");
    Shape s(rank);
    for (auto& d : s) d = r.u64();
    const std::size_t cells = shape_size(s);
    if (cells * 8 > r.remaining()) throw FormatError(FormatError::Code::Truncated, "checkpoint: truncated tensor data");
    p.value = Tensor(s);
    r.f64s(p.value.data());
    ck.params.push_back(std::move(p));
  }
  r.expect_end();
  const auto expected = parameter_shapes(ck.config);
  if (expected.size() != ck.params.size()) {
    throw FormatError(FormatError::Code::ShapeMismatch, "checkpoint: parameter count disagrees with network config");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].first != ck.params[i].name || expected[i].second != ck.params[i].value.shape()) {
      throw FormatError(FormatError::Code::ShapeMismatch, "checkpoint: parameter '" + ck.params[i].name +
                                                              "' disagrees with network config");
    }
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(ck));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace assimlab::net
