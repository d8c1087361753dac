#pragma once

#include <vector>

#include "pgds/tensor.hpp"

namespace pgds {

struct LossBreakdown {
  double triplet = 0.0;
  double guide = 0.0;
  std::vector<double> guide_per_layer;
  double combined = 0.0;
};

// L2-normalizes each row of a (N, D) matrix; norms below the floor are
// replaced by the floor so all-zero rows stay finite.
void l2_normalize_rows(const Tensor& x, Tensor& out, double floor = 1e-12);

// Backward of l2_normalize_rows: accumulates d(loss)/d(x) into d_x given
// d(loss)/d(out). d_x must already have x's shape.
void l2_normalize_rows_backward(const Tensor& x, const Tensor& d_out, Tensor& d_x,
                                double floor = 1e-12);

// Batch-hard triplet loss: per anchor, hardest positive = max squared
// Euclidean distance among same-identity rows (j != i), hardest negative =
// min among different-identity rows, hinge at margin alpha, mean over
// anchors. Ties select the lowest row index. When d_embeddings is non-null
// the gradient (times scale) is accumulated into it.
// Throws DomainError when any anchor lacks a positive or a negative.
double triplet_batch_hard(const Tensor& embeddings, const std::vector<int>& labels, double alpha,
                          Tensor* d_embeddings = nullptr, double scale = 1.0);

// Contrastive KL pair loss between two clamped simplex vectors:
// y=1 -> KL(p|q) + KL(q|p); y=0 -> hinge(m - KL(p|q)) + hinge(m - KL(q|p)).
double guide_pair_loss(const std::vector<double>& p, const std::vector<double>& q, int y,
                       double m);

struct GuideBatchResult {
  double total = 0.0;
  std::vector<double> per_layer;
};

// Per layer: all ordered cross-sample pairs (j, k), j != k, pairing the pose
// probability vector of sample j with the layer's feature probability vector
// of sample k; y = [identity(j) == identity(k)]. Positive-pair losses and
// negative-pair losses are averaged separately and summed (class-balanced);
// the total is the mean over layers. Gradients flow only into the feature
// side (the pose side is the frozen teacher): when d_feature_probs is
// non-null it receives scale * d(total)/d(feature_probs).
// Throws DomainError when the batch holds fewer than two identities.
GuideBatchResult guide_loss_batch(const Tensor& pose_probs,
                                  const std::vector<const Tensor*>& feature_probs,
                                  const std::vector<int>& labels, double margin,
                                  std::vector<Tensor>* d_feature_probs = nullptr,
                                  double scale = 1.0);

// combined = triplet + lambda * guide.
LossBreakdown combined_loss(double triplet, const GuideBatchResult& guide, double lambda);

}  // namespace pgds
