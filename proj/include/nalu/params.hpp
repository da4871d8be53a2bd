#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nalu/tape.hpp"
#include "nalu/tensor.hpp"

namespace nalu {

// Ordered collection of named learnable tensors.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;

  // Total number of scalar parameters.
  std::size_t count() const;

  // Places every parameter on the tape as a gradient-tracking leaf, in order.
  std::vector<Var> bind(Tape& tape) const;
  std::vector<Tensor> grads(const Tape& tape, const std::vector<Var>& bound) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction; moment buffers are created lazily to match the
// parameter set on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamSet& params, const std::vector<Tensor>& grads);
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace nalu
