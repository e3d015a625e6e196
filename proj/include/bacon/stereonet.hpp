#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacon/tensor.hpp"

namespace bacon::stereonet {

struct ArchConfig {
  int d_max = 64;
  int feature_channels = 16;
  int hidden_channels = 16;
  int encoder_layers = 4;
  double temperature = 1.0;
  double init_cost_scale = 30.0;  // initial value of exp(cost.log_scale)
  std::vector<int> dilations;     // per encoder layer; empty means 1, 2, 4, ...
  int max_input_height = 1024;
  int max_input_width = 2048;

  int dilation(int layer) const { return dilations.empty() ? 1 << layer : dilations.at(static_cast<std::size_t>(layer)); }
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

nlohmann::json to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  std::size_t numel() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

// Named parameter tensors plus the architecture that produced them.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(ArchConfig arch) : arch_(arch) {}

  const ArchConfig& arch() const { return arch_; }
  void add(const std::string& name, std::vector<int> shape, double fill = 0.0);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

  std::size_t parameter_count() const;
  bool all_finite() const;
  // Same parameter names with the same shapes.
  bool compatible(const ParamSet& other) const;
  // Throws ShapeMismatch naming the first offending parameter.
  void require_compatible(const ParamSet& other, const std::string& what) const;
  // Same layout, all values zero.
  ParamSet zeros_like() const;

  bool operator==(const ParamSet&) const = default;

 private:
  ArchConfig arch_;
  std::map<std::string, Tensor> entries_;
};

nlohmann::json to_json(const ParamSet& p);
ParamSet params_from_json(const nlohmann::json& j);

// Closed-form parameter count of the architecture.
std::size_t expected_parameter_count(const ArchConfig& arch);

ParamSet init_params(std::uint64_t seed, const ArchConfig& arch);

// Matching costs indexed (k, y, x), k = candidate disparity.
struct CostVolume {
  int depth = 0, height = 0, width = 0;
  std::vector<double> data;

  CostVolume() = default;
  CostVolume(int d, int h, int w, double fill = 0.0)
      : depth(d), height(h), width(w), data(static_cast<std::size_t>(d) * h * w, fill) {}
  double& operator()(int k, int y, int x) { return data[(static_cast<std::size_t>(k) * height + y) * width + x]; }
  double operator()(int k, int y, int x) const {
    return data[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
};

// Σ_k k · softmax_k(−cost / T).
DisparityMap soft_argmin(const CostVolume& cost, double temperature);

struct NetOutput {
  DisparityMap disparity;
  std::optional<CostVolume> cost_volume;
};

// Intermediate values kept for the backward pass.
struct ForwardCache {
  struct Branch {
    std::vector<std::vector<double>> cols;     // im2col input per layer
    std::vector<std::vector<double>> outputs;  // activation per layer, C×H×W
    std::vector<double> unit;                  // normalized features, pixel-major H×W×C
    std::vector<double> norm;                  // per-pixel feature norm
  };
  int height = 0, width = 0;
  Branch ref, tgt;
  std::vector<double> prob;    // softmax, (y, x, k)
  std::vector<double> logits;  // before softmax
  DisparityMap disparity;
};

// The pair must be canonical (target camera to the right of the reference).
NetOutput forward(const ParamSet& params, const Image& ref, const Image& tgt, ForwardCache* cache = nullptr,
                  bool keep_cost_volume = false);

// Gradient of Σ grad_disparity ⊙ disparity w.r.t. every parameter.
ParamSet backward(const ParamSet& params, const ForwardCache& cache, const DisparityMap& grad_disparity);

}  // namespace bacon::stereonet
