#include "bacon/stereonet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "bacon/rng.hpp"

namespace bacon::stereonet {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using CMapR = Eigen::Map<const RMat>;

constexpr double kNormEps = 1e-8;

// Eigen splits elementwise kernels into scalar head, packets and scalar tail
// according to the runtime address, and the scalar and packet exp differ in the
// last bit. Running them on an owned (aligned) scratch array fixes the split,
// so results do not depend on where a buffer happens to live.
template <class F>
void apply_aligned(double* data, std::size_t n, F&& f) {
  constexpr std::size_t kChunk = 4096;
  thread_local Eigen::ArrayXd scratch(kChunk);
  for (std::size_t s = 0; s < n; s += kChunk) {
    const auto m = static_cast<Eigen::Index>(std::min(kChunk, n - s));
    auto head = scratch.head(m);
    head = Eigen::Map<const Eigen::ArrayXd>(data + s, m);
    f(head);
    Eigen::Map<Eigen::ArrayXd>(data + s, m) = head;
  }
}

std::string weight_name(int l) { return "enc." + std::to_string(l) + ".weight"; }
std::string bias_name(int l) { return "enc." + std::to_string(l) + ".bias"; }
const char* kLogScale = "cost.log_scale";

int layer_in(const ArchConfig& a, int l) { return l == 0 ? 3 : a.hidden_channels; }
int layer_out(const ArchConfig& a, int l) { return l == a.encoder_layers - 1 ? a.feature_channels : a.hidden_channels; }

// (C·9) × (H·W) patch matrix of a 3×3 kernel with dilation dl, zero padding.
std::vector<double> im2col(const std::vector<double>& in, int c, int h, int w, int dl) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> col(static_cast<std::size_t>(c) * 9 * hw, 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        const double* src = in.data() + static_cast<std::size_t>(ci) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + (ky - 1) * dl, ox = (kx - 1) * dl;
          if (sy < 0 || sy >= h) continue;
          const int x_lo = std::max(0, -ox), x_hi = std::min(w, w - ox);
          const double* srow = src + static_cast<std::size_t>(sy) * w + ox;
          double* drow = dst + static_cast<std::size_t>(y) * w;
          for (int x = x_lo; x < x_hi; ++x) drow[x] = srow[x];
        }
      }
  return col;
}

std::vector<double> col2im(const std::vector<double>& col, int c, int h, int w, int dl) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(c) * hw, 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        double* dst = out.data() + static_cast<std::size_t>(ci) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + (ky - 1) * dl, ox = (kx - 1) * dl;
          if (sy < 0 || sy >= h) continue;
          const int x_lo = std::max(0, -ox), x_hi = std::min(w, w - ox);
          double* drow = dst + static_cast<std::size_t>(sy) * w + ox;
          const double* srow = src + static_cast<std::size_t>(y) * w;
          for (int x = x_lo; x < x_hi; ++x) drow[x] += srow[x];
        }
      }
  return out;
}

void encode(const ParamSet& p, const Image& img, ForwardCache::Branch& br) {
  const ArchConfig& a = p.arch();
  const int h = img.height(), w = img.width();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> x(img.values().begin(), img.values().end());
  for (auto& v : x) v -= 0.5;
  br.cols.clear();
  br.outputs.clear();
  for (int l = 0; l < a.encoder_layers; ++l) {
    const int cin = layer_in(a, l), cout = layer_out(a, l);
    br.cols.push_back(im2col(l == 0 ? x : br.outputs.back(), cin, h, w, a.dilation(l)));
    const Tensor& wt = p.at(weight_name(l));
    const Tensor& bt = p.at(bias_name(l));
    std::vector<double> out(static_cast<std::size_t>(cout) * hw);
    MapR o(out.data(), cout, static_cast<Eigen::Index>(hw));
    o.noalias() = CMapR(wt.data.data(), cout, cin * 9) *
                  CMapR(br.cols.back().data(), cin * 9, static_cast<Eigen::Index>(hw));
    o.colwise() += Eigen::Map<const Eigen::VectorXd>(bt.data.data(), cout);
    if (l + 1 < a.encoder_layers) {
      apply_aligned(out.data(), out.size(), [](auto z) { z = (z > 0).select(z, z.exp() - 1.0); });
    }
    br.outputs.push_back(std::move(out));
  }
  // Unit-normalized features, pixel-major.
  const int fc = a.feature_channels;
  const std::vector<double>& f = br.outputs.back();
  br.unit.assign(hw * fc, 0.0);
  br.norm.assign(hw, 0.0);
  for (std::size_t i = 0; i < hw; ++i) {
    double s = kNormEps;
    for (int c = 0; c < fc; ++c) s += f[c * hw + i] * f[c * hw + i];
    const double n = std::sqrt(s);
    br.norm[i] = n;
    for (int c = 0; c < fc; ++c) br.unit[i * fc + c] = f[c * hw + i] / n;
  }
}

// Accumulates parameter gradients of one encoder branch given d/d(unit features).
void encode_backward(const ParamSet& p, const ForwardCache::Branch& br, const std::vector<double>& g_unit, int h,
                     int w, ParamSet& grads) {
  const ArchConfig& a = p.arch();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int fc = a.feature_channels;
  std::vector<double> g(static_cast<std::size_t>(fc) * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    const double* u = br.unit.data() + i * fc;
    const double* gu = g_unit.data() + i * fc;
    double dot = 0.0;
    for (int c = 0; c < fc; ++c) dot += u[c] * gu[c];
    for (int c = 0; c < fc; ++c) g[c * hw + i] = (gu[c] - u[c] * dot) / br.norm[i];
  }
  for (int l = a.encoder_layers - 1; l >= 0; --l) {
    const int cin = layer_in(a, l), cout = layer_out(a, l);
    if (l + 1 < a.encoder_layers) {
      const std::vector<double>& out = br.outputs[l];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (out[i] <= 0) g[i] *= out[i] + 1.0;
    }
    CMapR gz(g.data(), cout, static_cast<Eigen::Index>(hw));
    CMapR col(br.cols[l].data(), cin * 9, static_cast<Eigen::Index>(hw));
    Tensor& gw = grads.at(weight_name(l));
    Tensor& gb = grads.at(bias_name(l));
    MapR(gw.data.data(), cout, cin * 9).noalias() += gz * col.transpose();
    for (int c = 0; c < cout; ++c) {
      const double* row = g.data() + static_cast<std::size_t>(c) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += row[i];
      gb.data[c] += acc;
    }
    if (l == 0) break;
    std::vector<double> gcol(static_cast<std::size_t>(cin) * 9 * hw);
    MapR(gcol.data(), cin * 9, static_cast<Eigen::Index>(hw)).noalias() =
        CMapR(p.at(weight_name(l)).data.data(), cout, cin * 9).transpose() * gz;
    g = col2im(gcol, cin, h, w, a.dilation(l));
  }
}

// Contiguous softmax over d logits and its expectation. Sums run in a fixed
// order; Eigen's reductions also peel by address.
void softmax_expectation(const double* logits, int d, double* prob, double& expect) {
  double top = logits[0];
  for (int k = 1; k < d; ++k) top = std::max(top, logits[k]);
  std::copy(logits, logits + d, prob);
  apply_aligned(prob, static_cast<std::size_t>(d), [top](auto p) { p = (p - top).exp(); });
  double z = 0.0;
  for (int k = 0; k < d; ++k) z += prob[k];
  const double inv = 1.0 / z;
  double e = 0.0;
  for (int k = 0; k < d; ++k) {
    prob[k] *= inv;
    e += k * prob[k];
  }
  expect = e;
}

}  // namespace

void ArchConfig::validate() const {
  if (d_max < 1) throw InvalidArgument("d_max must be at least 1");
  if (feature_channels < 1 || hidden_channels < 1) throw InvalidArgument("channel counts must be positive");
  if (encoder_layers < 1 || encoder_layers > 16) throw InvalidArgument("encoder needs 1 to 16 layers");
  if (!(temperature > 0)) throw InvalidArgument("softmax temperature must be positive");
  if (!(init_cost_scale > 0)) throw InvalidArgument("cost scale must be positive");
  if (max_input_height < 1 || max_input_width < 1) throw InvalidArgument("input bounds must be positive");
  if (!dilations.empty() && dilations.size() != static_cast<std::size_t>(encoder_layers))
    throw InvalidArgument("need one dilation per encoder layer");
  for (int d : dilations)
    if (d < 1) throw InvalidArgument("dilations must be positive");
}

nlohmann::json to_json(const ArchConfig& a) {
  return {{"d_max", a.d_max},
          {"feature_channels", a.feature_channels},
          {"hidden_channels", a.hidden_channels},
          {"encoder_layers", a.encoder_layers},
          {"temperature", a.temperature},
          {"init_cost_scale", a.init_cost_scale},
          {"max_input_height", a.max_input_height},
          {"max_input_width", a.max_input_width},
          {"dilations", a.dilations}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.d_max = j.value("d_max", a.d_max);
  a.feature_channels = j.value("feature_channels", a.feature_channels);
  a.hidden_channels = j.value("hidden_channels", a.hidden_channels);
  a.encoder_layers = j.value("encoder_layers", a.encoder_layers);
  a.temperature = j.value("temperature", a.temperature);
  a.init_cost_scale = j.value("init_cost_scale", a.init_cost_scale);
  a.max_input_height = j.value("max_input_height", a.max_input_height);
  a.max_input_width = j.value("max_input_width", a.max_input_width);
  a.dilations = j.value("dilations", a.dilations);
  a.validate();
  return a;
}

void ParamSet::add(const std::string& name, std::vector<int> shape, double fill) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 1) throw InvalidArgument("parameter '" + name + "' has a non-positive dimension");
    n *= static_cast<std::size_t>(s);
  }
  entries_[name] = Tensor{std::move(shape), std::vector<double>(n, fill)};
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& [_, t] : entries_)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ParamSet::compatible(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, t] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || it->second.shape != t.shape) return false;
  }
  return true;
}

void ParamSet::require_compatible(const ParamSet& other, const std::string& what) const {
  for (const auto& [name, t] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) throw ShapeMismatch(what + ": parameter '" + name + "' missing");
    if (it->second.shape != t.shape) throw ShapeMismatch(what + ": parameter '" + name + "' has a different shape");
  }
  for (const auto& [name, _] : other.entries_)
    if (!entries_.contains(name)) throw ShapeMismatch(what + ": unexpected parameter '" + name + "'");
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  for (auto& [_, t] : z.entries_) std::fill(t.data.begin(), t.data.end(), 0.0);
  return z;
}

nlohmann::json to_json(const ParamSet& p) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : p.entries()) tensors[name] = {{"shape", t.shape}, {"data", t.data}};
  return {{"arch", to_json(p.arch())}, {"tensors", tensors}};
}

ParamSet params_from_json(const nlohmann::json& j) {
  ParamSet p(arch_from_json(j.at("arch")));
  for (const auto& [name, t] : j.at("tensors").items()) {
    p.add(name, t.at("shape").get<std::vector<int>>());
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != p.at(name).numel()) throw InvalidArgument("parameter '" + name + "' has wrong element count");
    p.at(name).data = std::move(data);
  }
  const ParamSet ref = init_params(0, p.arch());
  ref.require_compatible(p, "checkpoint parameters");
  return p;
}

std::size_t expected_parameter_count(const ArchConfig& a) {
  std::size_t n = 1;  // cost scale
  for (int l = 0; l < a.encoder_layers; ++l) {
    const std::size_t cin = layer_in(a, l), cout = layer_out(a, l);
    n += cout * cin * 9 + cout;
  }
  return n;
}

ParamSet init_params(std::uint64_t seed, const ArchConfig& arch) {
  arch.validate();
  ParamSet p(arch);
  for (int l = 0; l < arch.encoder_layers; ++l) {
    const int cin = layer_in(arch, l), cout = layer_out(arch, l);
    p.add(weight_name(l), {cout, cin, 3, 3});
    p.add(bias_name(l), {cout});
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(l)}));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * 9)));
    for (auto& v : p.at(weight_name(l)).data) v = dist(rng);
  }
  p.add(kLogScale, {1}, std::log(arch.init_cost_scale));
  return p;
}

DisparityMap soft_argmin(const CostVolume& cost, double temperature) {
  if (cost.depth < 1) throw InvalidArgument("cost volume needs at least one disparity candidate");
  if (!(temperature > 0)) throw InvalidArgument("softmax temperature must be positive");
  const std::size_t hw = static_cast<std::size_t>(cost.height) * cost.width;
  std::vector<double> logits(static_cast<std::size_t>(cost.depth)), prob(logits.size());
  DisparityMap d(cost.height, cost.width);
  for (std::size_t i = 0; i < hw; ++i) {
    for (int k = 0; k < cost.depth; ++k) logits[k] = -cost.data[k * hw + i] / temperature;
    softmax_expectation(logits.data(), cost.depth, prob.data(), d[i]);
  }
  return d;
}

NetOutput forward(const ParamSet& params, const Image& ref, const Image& tgt, ForwardCache* cache,
                  bool keep_cost_volume) {
  const ArchConfig& a = params.arch();
  require_same_shape(ref, tgt, "stereonet::forward");
  if (ref.channels() != 3) throw InvalidArgument("stereonet expects RGB input");
  if (a.d_max >= ref.width()) throw InvalidArgument("d_max must be smaller than the image width");
  if (ref.height() > a.max_input_height || ref.width() > a.max_input_width)
    throw InvalidArgument("input larger than the configured bounds");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const int h = ref.height(), w = ref.width(), d = a.d_max, fc = a.feature_channels;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  c.height = h;
  c.width = w;
  encode(params, ref, c.ref);
  encode(params, tgt, c.tgt);

  const double scale = std::exp(params.at(kLogScale).data[0]) / a.temperature;
  c.logits.assign(static_cast<std::size_t>(d) * hw, 0.0);
  c.prob.assign(c.logits.size(), 0.0);
  RMat sim(w, w);
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    // sim(x, x') = <ur(y, x), ut(y, x')>
    sim.noalias() = CMapR(c.ref.unit.data() + row * fc, w, fc) * CMapR(c.tgt.unit.data() + row * fc, w, fc).transpose();
    for (int x = 0; x < w; ++x) {
      double* l = c.logits.data() + (row + x) * d;
      for (int k = 0; k < d; ++k) l[k] = scale * sim(x, std::max(x - k, 0));
    }
  }
  c.disparity = DisparityMap(h, w);
  for (std::size_t i = 0; i < hw; ++i)
    softmax_expectation(c.logits.data() + i * d, d, c.prob.data() + i * d, c.disparity[i]);

  NetOutput out{c.disparity, std::nullopt};
  if (keep_cost_volume) {
    CostVolume cv(d, h, w);
    for (int k = 0; k < d; ++k)
      for (std::size_t i = 0; i < hw; ++i) cv.data[k * hw + i] = -c.logits[i * d + k] * a.temperature;
    out.cost_volume = std::move(cv);
  }
  return out;
}

ParamSet backward(const ParamSet& params, const ForwardCache& cache, const DisparityMap& grad_disparity) {
  const ArchConfig& a = params.arch();
  const int h = cache.height, w = cache.width, d = a.d_max, fc = a.feature_channels;
  if (grad_disparity.height() != h || grad_disparity.width() != w)
    throw ShapeMismatch("stereonet::backward: gradient shape differs from the cached forward pass");
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  ParamSet grads = params.zeros_like();
  const double scale = std::exp(params.at(kLogScale).data[0]) / a.temperature;

  std::vector<double> g_ur(hw * fc, 0.0), g_ut(hw * fc, 0.0);
  double g_log_scale = 0.0;
  RMat g_sim(w, w);
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    g_sim.setZero();
    for (int x = 0; x < w; ++x) {
      const std::size_t i = row + x;
      const double gd = grad_disparity[i];
      if (gd == 0.0) continue;
      const double di = cache.disparity[i];
      for (int k = 0; k < d; ++k) {
        const double g_logit = cache.prob[i * d + k] * (k - di) * gd;
        g_log_scale += g_logit * cache.logits[i * d + k];
        g_sim(x, std::max(x - k, 0)) += g_logit * scale;
      }
    }
    MapR(g_ur.data() + row * fc, w, fc).noalias() = g_sim * CMapR(cache.tgt.unit.data() + row * fc, w, fc);
    MapR(g_ut.data() + row * fc, w, fc).noalias() = g_sim.transpose() * CMapR(cache.ref.unit.data() + row * fc, w, fc);
  }
  grads.at(kLogScale).data[0] = g_log_scale;
  encode_backward(params, cache.ref, g_ur, h, w, grads);
  encode_backward(params, cache.tgt, g_ut, h, w, grads);
  return grads;
}

}  // namespace bacon::stereonet
