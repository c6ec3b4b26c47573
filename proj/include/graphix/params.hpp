#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphix/tensor.hpp"

namespace graphix {

// Named f64 parameter matrices with deterministic initialization. Names are
// unique and shapes are fixed once added; values stay mutable for training.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed, std::string init_tag = "xavier_uniform")
      : seed_(seed), init_tag_(std::move(init_tag)) {}

  Matrix& add(const std::string& name, Matrix m);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  // Replaces the values of an existing parameter; the shape must match.
  void set(const std::string& name, const Matrix& m);

  const std::vector<std::string>& names() const { return order_; }
  std::size_t total_values() const;

  std::uint64_t seed() const { return seed_; }
  const std::string& init_tag() const { return init_tag_; }
  nlohmann::ordered_json& meta() { return meta_; }
  const nlohmann::ordered_json& meta() const { return meta_; }

  // Checkpoint file: a JSON manifest (names, shapes, seed, init scheme,
  // free-form meta) followed by the raw little-endian f64 arrays.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Matrix> params_;
  std::uint64_t seed_ = 0;
  std::string init_tag_ = "xavier_uniform";
  nlohmann::ordered_json meta_ = nlohmann::ordered_json::object();
};

// Max over all parameter entries of |analytic - numeric| / max(1, |numeric|),
// with the numeric side taken as a central difference of f. The analytic map
// must hold one gradient matrix per parameter in the store.
double grad_check(const std::function<double(const ParamStore&)>& f,
                  ParamStore& params,
                  const std::map<std::string, Matrix>& analytic_grads,
                  double epsilon);

}  // namespace graphix
