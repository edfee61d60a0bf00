#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "psr/autodiff.hpp"

namespace psr {

using ad::Mat;

// Named tensor storage for one model. Ids are dense and stable, which gives
// deterministic iteration order for optimizers and checkpoints.
class ParamSet {
 public:
  int add(std::string name, int rows, int cols) {
    names_.push_back(std::move(name));
    tensors_.emplace_back(Mat::Zero(rows, cols));
    return static_cast<int>(tensors_.size()) - 1;
  }

  Mat& at(int id) { return tensors_.at(static_cast<std::size_t>(id)); }
  const Mat& at(int id) const { return tensors_.at(static_cast<std::size_t>(id)); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }

  int count() const { return static_cast<int>(tensors_.size()); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(scalar_count()));
    Eigen::Index o = 0;
    for (const auto& t : tensors_) {
      v.segment(o, t.size()) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
      o += t.size();
    }
    return v;
  }

  void unflatten(const Eigen::VectorXd& v) {
    if (v.size() != static_cast<Eigen::Index>(scalar_count()))
      throw std::invalid_argument("ParamSet::unflatten size mismatch");
    Eigen::Index o = 0;
    for (auto& t : tensors_) {
      Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = v.segment(o, t.size());
      o += t.size();
    }
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> tensors_;
};

// Binds ParamSet tensors to tape leaves on demand during a forward pass and
// collects their gradients afterwards.
class Binder {
 public:
  Binder(ad::Tape& tape, const ParamSet& params)
      : tape_(tape), params_(params), bound_(static_cast<std::size_t>(params.count())) {}

  ad::Value operator()(int id) {
    auto& v = bound_.at(static_cast<std::size_t>(id));
    if (!v.valid()) v = tape_.leaf(params_.at(id));
    return v;
  }

  ad::Tape& tape() { return tape_; }

  // gradients aligned with ParamSet ids; zero for tensors never bound
  std::vector<Mat> grads() const {
    std::vector<Mat> g;
    g.reserve(bound_.size());
    for (int id = 0; id < params_.count(); ++id) {
      const auto& v = bound_[static_cast<std::size_t>(id)];
      if (v.valid())
        g.push_back(tape_.grad(v));
      else
        g.push_back(Mat::Zero(params_.at(id).rows(), params_.at(id).cols()));
    }
    return g;
  }

 private:
  ad::Tape& tape_;
  const ParamSet& params_;
  std::vector<ad::Value> bound_;
};

}  // namespace psr
