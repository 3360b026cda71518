#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "calrank/error.hpp"

namespace calrank {

struct MaxEntOptions {
  double l2 = 0.0;
  int epochs = 200;
  double step = 0.5;
};

namespace detail {

// Regularized multinomial negative log-likelihood over interned examples.
// Parameter layout: weights[label * n_features + feature], then bias[label].
// Biases are not regularized. Objective is the mean NLL plus l2/2 * ||w||^2.
struct MaxEntProblem {
  std::size_t n_labels = 0;
  std::size_t n_features = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> examples;  // (feature, count)
  std::vector<std::uint32_t> targets;
  double l2 = 0.0;

  std::size_t n_params() const { return n_labels * (n_features + 1); }

  void logits(std::span<const double> params,
              const std::vector<std::pair<std::uint32_t, double>>& feats,
              std::vector<double>& z) const {
    const double* bias = params.data() + n_labels * n_features;
    for (std::size_t k = 0; k < n_labels; ++k) {
      double acc = bias[k];
      const double* wk = params.data() + k * n_features;
      for (const auto& [f, c] : feats) acc += wk[f] * c;
      z[k] = acc;
    }
  }

  double objective(std::span<const double> params) const {
    return objective_and_gradient(params, nullptr);
  }

  double objective_and_gradient(std::span<const double> params, std::vector<double>* grad) const {
    if (grad) grad->assign(n_params(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(examples.size());
    std::vector<double> z(n_labels), p(n_labels);
    double nll = 0.0;
    for (std::size_t e = 0; e < examples.size(); ++e) {
      logits(params, examples[e], z);
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t k = 0; k < n_labels; ++k) sum += (p[k] = std::exp(z[k] - zmax));
      nll += std::log(sum) + zmax - z[targets[e]];
      if (grad) {
        double* gbias = grad->data() + n_labels * n_features;
        for (std::size_t k = 0; k < n_labels; ++k) {
          const double coeff = (p[k] / sum - (k == targets[e] ? 1.0 : 0.0)) * inv_n;
          gbias[k] += coeff;
          double* gk = grad->data() + k * n_features;
          for (const auto& [f, c] : examples[e]) gk[f] += coeff * c;
        }
      }
    }
    double reg = 0.0;
    const std::size_t nw = n_labels * n_features;
    for (std::size_t i = 0; i < nw; ++i) {
      reg += params[i] * params[i];
      if (grad) (*grad)[i] += l2 * params[i];
    }
    return nll * inv_n + 0.5 * l2 * reg;
  }
};

}  // namespace detail

// Multinomial log-linear classifier over string feature bags, fit by
// full-batch gradient descent on the regularized NLL. The step is halved
// whenever an update would increase the objective, so the training loss is
// non-increasing across epochs.
class MaxEntModel {
 public:
  using Example = std::pair<std::vector<std::string>, std::string>;

  MaxEntModel() = default;

  bool trained() const { return !labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& biases() const { return biases_; }
  const std::vector<double>& loss_history() const { return loss_history_; }

  std::size_t label_index(const std::string& label) const {
    for (std::size_t k = 0; k < labels_.size(); ++k)
      if (labels_[k] == label) return k;
    throw ConfigError("unknown label '" + label + "'");
  }

  // Log-probabilities over the full label set. Unknown features are skipped;
  // the temperature divides the logits before normalization.
  std::vector<double> log_probs(const std::vector<std::string>& features,
                                double temperature = 1.0) const {
    if (!trained()) throw StateError("model has not been trained");
    const std::size_t n = labels_.size();
    std::vector<double> z(biases_);
    for (const auto& f : features) {
      auto it = feature_ids_.find(f);
      if (it == feature_ids_.end()) continue;
      for (std::size_t k = 0; k < n; ++k) z[k] += weights_[k * feature_names_.size() + it->second];
    }
    for (auto& v : z) v /= temperature;
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto v : z) sum += std::exp(v - zmax);
    const double lse = std::log(sum) + zmax;
    for (auto& v : z) v -= lse;
    return z;
  }

  std::size_t predict(const std::vector<std::string>& features) const {
    auto lp = log_probs(features);
    return static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  }

  // Reconstructs a trained model from stored parameters.
  static MaxEntModel from_parameters(std::vector<std::string> labels,
                                     std::vector<std::string> feature_names,
                                     std::vector<double> weights, std::vector<double> biases) {
    MaxEntModel m;
    if (labels.size() < 2) throw ConfigError("a model needs at least 2 labels");
    if (weights.size() != labels.size() * feature_names.size() || biases.size() != labels.size())
      throw ShapeError("parameter sizes do not match label/feature counts");
    m.labels_ = std::move(labels);
    m.feature_names_ = std::move(feature_names);
    m.weights_ = std::move(weights);
    m.biases_ = std::move(biases);
    for (std::size_t i = 0; i < m.feature_names_.size(); ++i)
      m.feature_ids_.emplace(m.feature_names_[i], static_cast<std::uint32_t>(i));
    return m;
  }

  friend MaxEntModel train_maxent(const std::vector<Example>& examples,
                                  const std::vector<std::string>& labels,
                                  const MaxEntOptions& options);

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> feature_names_;
  std::unordered_map<std::string, std::uint32_t> feature_ids_;
  std::vector<double> weights_;  // [label][feature]
  std::vector<double> biases_;
  std::vector<double> loss_history_;
};

// Trains on the given label inventory; labels unseen in the data keep zero
// weights. Feature ids are assigned in first-seen order, so training is
// deterministic given the example order.
inline MaxEntModel train_maxent(const std::vector<MaxEntModel::Example>& examples,
                                const std::vector<std::string>& labels,
                                const MaxEntOptions& options) {
  if (labels.size() < 2) throw TrainingError("need at least 2 distinct labels");
  if (examples.empty()) throw TrainingError("empty training set");
  if (options.l2 < 0.0) throw ConfigError("l2 must be non-negative");

  MaxEntModel m;
  m.labels_ = labels;
  std::unordered_map<std::string, std::uint32_t> label_ids;
  for (std::size_t k = 0; k < labels.size(); ++k)
    label_ids.emplace(labels[k], static_cast<std::uint32_t>(k));

  detail::MaxEntProblem prob;
  prob.n_labels = labels.size();
  prob.l2 = options.l2;
  prob.examples.reserve(examples.size());
  prob.targets.reserve(examples.size());
  for (const auto& [bag, label] : examples) {
    auto lit = label_ids.find(label);
    if (lit == label_ids.end()) throw ConfigError("example label '" + label + "' not in inventory");
    prob.targets.push_back(lit->second);
    std::vector<std::pair<std::uint32_t, double>> feats;
    for (const auto& f : bag) {
      auto [it, inserted] =
          m.feature_ids_.emplace(f, static_cast<std::uint32_t>(m.feature_names_.size()));
      if (inserted) m.feature_names_.push_back(f);
      auto fit = std::find_if(feats.begin(), feats.end(),
                              [&](const auto& pr) { return pr.first == it->second; });
      if (fit == feats.end())
        feats.emplace_back(it->second, 1.0);
      else
        fit->second += 1.0;
    }
    prob.examples.push_back(std::move(feats));
  }
  prob.n_features = m.feature_names_.size();

  std::vector<double> params(prob.n_params(), 0.0), grad, trial;
  double step = options.step;
  double loss = prob.objective_and_gradient(params, &grad);
  m.loss_history_.push_back(loss);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    bool accepted = false;
    for (int halvings = 0; halvings <= 50; ++halvings) {
      trial = params;
      for (std::size_t i = 0; i < trial.size(); ++i) trial[i] -= step * grad[i];
      const double trial_loss = prob.objective(trial);
      if (trial_loss <= loss) {
        params.swap(trial);
        loss = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    m.loss_history_.push_back(loss);
    if (!accepted) break;  // step underflowed, no further progress possible
    if (epoch + 1 < options.epochs) prob.objective_and_gradient(params, &grad);
  }

  m.weights_.assign(params.begin(), params.begin() + prob.n_labels * prob.n_features);
  m.biases_.assign(params.begin() + prob.n_labels * prob.n_features, params.end());
  return m;
}

// Label inventory discovered from the data, in first-seen order.
inline MaxEntModel train_maxent(const std::vector<MaxEntModel::Example>& examples, double l2 = 0.0,
                                int epochs = 200) {
  std::vector<std::string> labels;
  for (const auto& [bag, label] : examples)
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  if (labels.size() < 2) throw TrainingError("need at least 2 distinct labels");
  MaxEntOptions options;
  options.l2 = l2;
  options.epochs = epochs;
  return train_maxent(examples, labels, options);
}

}  // namespace calrank
