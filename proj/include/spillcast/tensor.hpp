#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace spillcast::ad {

using Matrix = Eigen::MatrixXd;

// Named trainable tensor: a dense rank-2 value plus a gradient slot of the
// same shape. Rank-1 and rank-0 data use single-column / 1x1 shapes.
struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;

  Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
};

// Ordered collection of model parameters. Insertion order defines the
// checkpoint layout, so construction must be deterministic.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Tensor& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Tensor& add_const(const std::string& name, Eigen::Index rows, Eigen::Index cols, double v);
  Tensor& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                      std::mt19937_64& rng, double scale);
  // Uniform Glorot init: U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
  Tensor& add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                     std::mt19937_64& rng);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  std::vector<Tensor*> all();
  std::vector<const Tensor*> all() const;

  void zero_grad();
  double grad_norm() const;               // global L2 norm over all gradients
  void clip_gradients(double max_norm);   // rescales when grad_norm exceeds max_norm
  void sgd_step(double lr);
  double norm_sum() const;                // sum of per-tensor L2 value norms
  bool values_finite() const;
  bool grads_finite() const;

  // Deep value copy between identically shaped sets.
  std::vector<Matrix> snapshot_values() const;
  void restore_values(const std::vector<Matrix>& values);

  // Checkpoint: text header (meta lines, tensor names and shapes) followed by
  // raw little-endian 64-bit floats, row-major, in header order.
  void save(std::ostream& out, const std::map<std::string, std::string>& meta) const;
  static ParameterSet load(std::istream& in, std::map<std::string, std::string>* meta);
  void save_file(const std::string& path, const std::map<std::string, std::string>& meta) const;
  static ParameterSet load_file(const std::string& path,
                                std::map<std::string, std::string>* meta);

 private:
  std::vector<std::unique_ptr<Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace spillcast::ad
