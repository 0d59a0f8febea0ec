#include "spillcast/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "spillcast/errors.hpp"
#include "spillcast/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace spillcast::ad {

Tensor& ParameterSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (name.empty() || name.find(' ') != std::string::npos ||
      name.find('\n') != std::string::npos) {
    throw ConfigError("parameter name must be non-empty and free of whitespace: '" + name + "'");
  }
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter " + name + ": non-positive shape");
  items_.push_back(std::make_unique<Tensor>(name, rows, cols));
  index_.emplace(name, items_.size() - 1);
  return *items_.back();
}

Tensor& ParameterSet::add_const(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                double v) {
  Tensor& t = add(name, rows, cols);
  t.value.setConstant(v);
  return t;
}

Tensor& ParameterSet::add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                  std::mt19937_64& rng, double scale) {
  Tensor& t = add(name, rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      t.value(r, c) = uniform(rng, -scale, scale);
    }
  }
  return t;
}

Tensor& ParameterSet::add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                 std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return add_uniform(name, rows, cols, rng, a);
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *items_[it->second];
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *items_[it->second];
}

std::vector<Tensor*> ParameterSet::all() {
  std::vector<Tensor*> out;
  out.reserve(items_.size());
  for (auto& t : items_) out.push_back(t.get());
  return out;
}

std::vector<const Tensor*> ParameterSet::all() const {
  std::vector<const Tensor*> out;
  out.reserve(items_.size());
  for (const auto& t : items_) out.push_back(t.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& t : items_) t->grad.setZero();
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& t : items_) sq += t->grad.squaredNorm();
  return std::sqrt(sq);
}

void ParameterSet::clip_gradients(double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_gradients: max_norm must be positive");
  double norm = grad_norm();
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (auto& t : items_) t->grad *= scale;
  }
}

void ParameterSet::sgd_step(double lr) {
  for (auto& t : items_) t->value -= lr * t->grad;
}

double ParameterSet::norm_sum() const {
  double total = 0.0;
  for (const auto& t : items_) total += t->value.norm();
  return total;
}

bool ParameterSet::values_finite() const {
  for (const auto& t : items_) {
    if (!t->value.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::grads_finite() const {
  for (const auto& t : items_) {
    if (!t->grad.allFinite()) return false;
  }
  return true;
}

std::vector<Matrix> ParameterSet::snapshot_values() const {
  std::vector<Matrix> out;
  out.reserve(items_.size());
  for (const auto& t : items_) out.push_back(t->value);
  return out;
}

void ParameterSet::restore_values(const std::vector<Matrix>& values) {
  if (values.size() != items_.size()) {
    throw ShapeError("restore_values: snapshot has " + std::to_string(values.size()) +
                     " tensors, set has " + std::to_string(items_.size()));
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (values[i].rows() != items_[i]->rows() || values[i].cols() != items_[i]->cols()) {
      throw ShapeError("restore_values: shape mismatch for " + items_[i]->name);
    }
    items_[i]->value = values[i];
  }
}

void ParameterSet::save(std::ostream& out, const std::map<std::string, std::string>& meta) const {
  out << "spillcast-checkpoint 1\n";
  for (const auto& [k, v] : meta) {
    if (k.find(' ') != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint meta keys must be word-like, values single-line");
    }
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& t : items_) {
    out << "tensor " << t->name << ' ' << t->rows() << ' ' << t->cols() << '\n';
  }
  out << "end\n";
  for (const auto& t : items_) {
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) {
        double v = t->value(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  if (!out) throw DataError("checkpoint write failed");
}

ParameterSet ParameterSet::load(std::istream& in, std::map<std::string, std::string>* meta) {
  std::string line;
  if (!std::getline(in, line) || line != "spillcast-checkpoint 1") {
    throw DataError("not a checkpoint file (bad magic line)");
  }
  ParameterSet set;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key.empty()) throw DataError("checkpoint: malformed meta line: " + line);
      if (meta) (*meta)[key] = value;
    } else if (tag == "tensor") {
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> name >> rows >> cols)) {
        throw DataError("checkpoint: malformed tensor line: " + line);
      }
      set.add(name, rows, cols);
    } else {
      throw DataError("checkpoint: unexpected header line: " + line);
    }
  }
  if (!saw_end) throw DataError("checkpoint: truncated header (missing 'end')");
  for (auto& t : set.items_) {
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) {
          throw DataError("checkpoint: truncated payload in tensor " + t->name);
        }
        t->value(r, c) = v;
      }
    }
  }
  return set;
}

void ParameterSet::save_file(const std::string& path,
                             const std::map<std::string, std::string>& meta) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save(out, meta);
}

ParameterSet ParameterSet::load_file(const std::string& path,
                                     std::map<std::string, std::string>* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load(in, meta);
}

}  // namespace spillcast::ad
