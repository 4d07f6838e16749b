#pragma once

// Classification head for embedding training: each class owns several
// trainable unit-norm center vectors ("sub-clusters"), logits are cosine
// similarities between the normalized embedding and every center, scaled by a
// factor that adapts itself to the batch statistics instead of being tuned by
// hand. The loss is cross entropy against soft class labels where each
// class's probability is the summed softmax mass of its centers.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/layers.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

namespace detail {

// Row-normalizes a [n, d] buffer outside the graph. Throws when a row has
// (numerically) zero norm, naming the row, since a cosine against it is
// meaningless.
inline std::vector<double> normalized_rows_or_throw(const std::vector<double>& data, long long n,
                                                    long long d, const std::string& what) {
  std::vector<double> out(data.size());
  for (long long i = 0; i < n; ++i) {
    const double* row = data.data() + i * d;
    double s = 0.0;
    for (long long j = 0; j < d; ++j) s += row[j] * row[j];
    double norm = std::sqrt(s);
    if (!(norm > 1e-12))
      throw numeric_error(what + " row " + std::to_string(i) + " has zero norm");
    for (long long j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = row[j] / norm;
  }
  return out;
}

}  // namespace detail

class ClassHead {
 public:
  ClassHead(ParamRegistry& reg, std::uint64_t seed, const std::string& name, int n_classes,
            int n_subclusters, long long embed_dim)
      : n_classes_(n_classes), n_subclusters_(n_subclusters), embed_dim_(embed_dim) {
    if (n_classes < 1) throw argument_error("class head: need at least one class");
    if (n_subclusters < 1) throw argument_error("class head: need at least one sub-cluster");
    if (embed_dim < 1) throw argument_error("class head: embedding dimension must be positive");
    long long k_total = static_cast<long long>(n_classes) * n_subclusters;
    class_of_.resize(static_cast<std::size_t>(k_total));
    for (long long k = 0; k < k_total; ++k)
      class_of_[static_cast<std::size_t>(k)] = static_cast<int>(k / n_subclusters);

    // Centers start as independent unit-norm gaussian directions.
    Rng rng = detail::param_rng(seed, name + ".centers");
    std::vector<double> init(static_cast<std::size_t>(k_total * embed_dim));
    for (long long k = 0; k < k_total; ++k) {
      double* row = init.data() + k * embed_dim;
      double s = 0.0;
      do {
        s = 0.0;
        for (long long j = 0; j < embed_dim; ++j) {
          row[j] = rng.normal();
          s += row[j] * row[j];
        }
      } while (!(s > 1e-12));
      double inv = 1.0 / std::sqrt(s);
      for (long long j = 0; j < embed_dim; ++j) row[j] *= inv;
    }
    centers_ = reg.add_param(name + ".centers", {k_total, embed_dim}, std::move(init));

    // Scale starts at the fixed-softmax optimum for k_total directions and is
    // re-estimated each step; it lives in a registry buffer so checkpoints
    // carry it.
    double s0 = k_total >= 3 ? std::sqrt(2.0) * std::log(static_cast<double>(k_total) - 1.0) : 1.0;
    scale_ = reg.add_buffer(name + ".scale", 1, s0);
  }

  int n_classes() const { return n_classes_; }
  int n_subclusters() const { return n_subclusters_; }
  long long embed_dim() const { return embed_dim_; }
  long long total_centers() const { return centers_->shape[0]; }
  const std::vector<int>& class_of() const { return class_of_; }
  Tensor centers() const { return centers_; }
  double current_scale() const { return (*scale_)[0]; }
  void set_scale(double s) {
    if (!std::isfinite(s) || s <= 0.0)
      throw argument_error("class head: scale must be positive and finite");
    (*scale_)[0] = s;
  }

  // Re-estimates the logit scale from this batch, outside the autodiff graph.
  // Using the previous scale, it measures the average summed exponential logit
  // over the centers that do NOT belong to each sample's labeled class, takes
  // the batch-median angle to the best center of the labeled class, and sets
  //   scale = log(avg) / cos(min(pi/4, median_angle)).
  // A non-finite or non-positive estimate (e.g. a single-class head, where no
  // off-class centers exist) keeps the previous value.
  void update_scale(const Tensor& embeddings, const std::vector<double>& soft_labels) {
    check_batch(embeddings, soft_labels);
    long long B = embeddings->shape[0];
    long long K = total_centers();
    std::vector<double> e =
        detail::normalized_rows_or_throw(embeddings->data, B, embed_dim_, "embedding");
    std::vector<double> c =
        detail::normalized_rows_or_throw(centers_->data, K, embed_dim_, "center");

    double prev = current_scale();
    double b_sum = 0.0;
    std::vector<double> angles(static_cast<std::size_t>(B));
    for (long long b = 0; b < B; ++b) {
      const double* lab = soft_labels.data() + b * n_classes_;
      int true_class = 0;
      for (int cc = 1; cc < n_classes_; ++cc)
        if (lab[cc] > lab[true_class]) true_class = cc;
      double best_true_cos = -1.0;
      for (long long k = 0; k < K; ++k) {
        double dot = 0.0;
        const double* er = e.data() + b * embed_dim_;
        const double* cr = c.data() + k * embed_dim_;
        for (long long j = 0; j < embed_dim_; ++j) dot += er[j] * cr[j];
        if (class_of_[static_cast<std::size_t>(k)] == true_class) {
          best_true_cos = std::max(best_true_cos, dot);
        } else {
          b_sum += std::exp(prev * dot);
        }
      }
      angles[static_cast<std::size_t>(b)] =
          std::acos(std::min(1.0, std::max(-1.0, best_true_cos)));
    }
    double b_avg = b_sum / static_cast<double>(B);
    std::sort(angles.begin(), angles.end());
    double theta_med = (B % 2 == 1)
                           ? angles[static_cast<std::size_t>(B / 2)]
                           : 0.5 * (angles[static_cast<std::size_t>(B / 2 - 1)] +
                                    angles[static_cast<std::size_t>(B / 2)]);
    double theta = std::min(M_PI / 4.0, theta_med);
    double next = std::log(b_avg) / std::cos(theta);
    if (std::isfinite(next) && next > 0.0) (*scale_)[0] = next;
  }

  // Scaled cosine logits, [B, n_classes * n_subclusters]. Both the embeddings
  // and the centers are normalized inside the graph so gradients flow through
  // the normalization.
  Tensor logits(const Tensor& embeddings) const {
    if (embeddings->shape.size() != 2 || embeddings->shape[1] != embed_dim_)
      throw shape_error("class head: embeddings must be [B," + std::to_string(embed_dim_) +
                        "], got " + shape_str(embeddings->shape));
    // Surface degenerate rows before the clamped normalization hides them.
    detail::normalized_rows_or_throw(embeddings->data, embeddings->shape[0], embed_dim_,
                                     "embedding");
    Tensor cos = matmul_nt(row_l2_normalize(embeddings), row_l2_normalize(centers_));
    return scale(cos, current_scale());
  }

  // Mean cross entropy of the batch against soft class labels (rows must sum
  // to one). Scalar tensor; differentiable w.r.t. embeddings and centers.
  Tensor loss(const Tensor& embeddings, const std::vector<double>& soft_labels) const {
    check_batch(embeddings, soft_labels);
    return subcluster_cross_entropy(logits(embeddings), soft_labels, class_of_, n_classes_);
  }

  // Projects center rows back onto the unit sphere (call after each optimizer
  // step; updates move them off it).
  void renormalize_centers() {
    long long K = total_centers();
    for (long long k = 0; k < K; ++k) {
      double* row = centers_->data.data() + k * embed_dim_;
      double s = 0.0;
      for (long long j = 0; j < embed_dim_; ++j) s += row[j] * row[j];
      double norm = std::sqrt(s);
      if (!(norm > 1e-12))
        throw numeric_error("class head: center row " + std::to_string(k) +
                            " collapsed to zero norm");
      for (long long j = 0; j < embed_dim_; ++j) row[j] /= norm;
    }
  }

 private:
  void check_batch(const Tensor& embeddings, const std::vector<double>& soft_labels) const {
    if (!embeddings || embeddings->shape.size() != 2 || embeddings->shape[1] != embed_dim_)
      throw shape_error("class head: embeddings must be [B," + std::to_string(embed_dim_) + "]");
    long long B = embeddings->shape[0];
    if (static_cast<long long>(soft_labels.size()) != B * n_classes_)
      throw argument_error("class head: soft labels must be batch x n_classes");
    for (long long b = 0; b < B; ++b) {
      double sum = 0.0;
      for (int cc = 0; cc < n_classes_; ++cc) {
        double y = soft_labels[static_cast<std::size_t>(b * n_classes_ + cc)];
        if (y < 0.0) throw argument_error("class head: negative label weight");
        sum += y;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw argument_error("class head: label row " + std::to_string(b) +
                             " does not sum to one");
    }
  }

  int n_classes_;
  int n_subclusters_;
  long long embed_dim_;
  Tensor centers_;
  std::vector<int> class_of_;
  std::shared_ptr<std::vector<double>> scale_;
};

}  // namespace fteasd
