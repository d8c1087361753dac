#include "pgds/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pgds/common.hpp"
#include "pgds/kernels.hpp"
#include "pgds/simplex.hpp"

namespace pgds {

void l2_normalize_rows(const Tensor& x, Tensor& out, double floor) {
  PGDS_CHECK_ARG(x.rank() == 2, "l2_normalize_rows: input must be (N, D)");
  PGDS_CHECK_ARG(floor > 0.0, "l2_normalize_rows: floor must be positive");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (!out.same_shape(x)) out = Tensor(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * d;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double inv = 1.0 / std::max(std::sqrt(sq), floor);
    double* orow = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] = row[j] * inv;
  }
}

void l2_normalize_rows_backward(const Tensor& x, const Tensor& d_out, Tensor& d_x,
                                double floor) {
  PGDS_CHECK_ARG(x.rank() == 2, "l2_normalize_rows_backward: input must be (N, D)");
  PGDS_CHECK_ARG(d_out.same_shape(x) && d_x.same_shape(x),
                 "l2_normalize_rows_backward: shape mismatch");
  const std::size_t n = x.dim(0), d = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * d;
    const double* grow = d_out.data() + i * d;
    double* drow = d_x.data() + i * d;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm <= floor) {
      const double inv = 1.0 / floor;
      for (std::size_t j = 0; j < d; ++j) drow[j] += grow[j] * inv;
      continue;
    }
    const double inv = 1.0 / norm;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += row[j] * grow[j];
    const double c = dot * inv * inv * inv;
    for (std::size_t j = 0; j < d; ++j) drow[j] += grow[j] * inv - row[j] * c;
  }
}

double triplet_batch_hard(const Tensor& embeddings, const std::vector<int>& labels, double alpha,
                          Tensor* d_embeddings, double scale) {
  PGDS_CHECK_ARG(embeddings.rank() == 2, "triplet: embeddings must be (N, D)");
  const int n = static_cast<int>(embeddings.dim(0));
  const int d = static_cast<int>(embeddings.dim(1));
  PGDS_CHECK_ARG(static_cast<int>(labels.size()) == n, "triplet: labels length ", labels.size(),
                 " != batch size ", n);
  PGDS_CHECK_ARG(alpha > 0.0, "triplet: margin must be positive");
  PGDS_CHECK_ARG(n >= 2, "triplet: need at least 2 samples");

  Tensor dist({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  kernels::pairwise_sqdist(embeddings.data(), dist.data(), n, d);

  if (d_embeddings) {
    PGDS_CHECK_ARG(d_embeddings->same_shape(embeddings),
                   "triplet: gradient tensor shape mismatch");
  }

  double total = 0.0;
  const double g = 2.0 * scale / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    int hardest_pos = -1, hardest_neg = -1;
    double dp = -1.0, dn = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dij = dist[static_cast<std::size_t>(i) * n + j];
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        if (hardest_pos < 0 || dij > dp) {
          dp = dij;
          hardest_pos = j;
        }
      } else {
        if (hardest_neg < 0 || dij < dn) {
          dn = dij;
          hardest_neg = j;
        }
      }
    }
    PGDS_CHECK_ARG(hardest_pos >= 0, "triplet: anchor ", i, " has no positive");
    PGDS_CHECK_ARG(hardest_neg >= 0, "triplet: anchor ", i, " has no negative");

    const double hinge = dp - dn + alpha;
    if (hinge <= 0.0) continue;
    total += hinge;
    if (!d_embeddings) continue;

    const double* ei = embeddings.data() + static_cast<std::size_t>(i) * d;
    const double* ep = embeddings.data() + static_cast<std::size_t>(hardest_pos) * d;
    const double* en = embeddings.data() + static_cast<std::size_t>(hardest_neg) * d;
    double* gi = d_embeddings->data() + static_cast<std::size_t>(i) * d;
    double* gp = d_embeddings->data() + static_cast<std::size_t>(hardest_pos) * d;
    double* gn = d_embeddings->data() + static_cast<std::size_t>(hardest_neg) * d;
    for (int k = 0; k < d; ++k) {
      gi[k] += g * (en[k] - ep[k]);
      gp[k] += g * (ep[k] - ei[k]);
      gn[k] += g * (ei[k] - en[k]);
    }
  }
  return total / static_cast<double>(n);
}

double guide_pair_loss(const std::vector<double>& p, const std::vector<double>& q, int y,
                       double m) {
  PGDS_CHECK_ARG(p.size() == q.size(), "guide pair: dimension mismatch ", p.size(), " vs ",
                 q.size());
  PGDS_CHECK_ARG(!p.empty(), "guide pair: empty vectors");
  PGDS_CHECK_ARG(y == 0 || y == 1, "guide pair: y must be 0 or 1, got ", y);
  PGDS_CHECK_ARG(m > 0.0, "guide pair: margin must be positive");
  const int d = static_cast<int>(p.size());
  const double kl_pq = simplex_detail::kl_raw(p.data(), q.data(), d, nullptr);
  const double kl_qp = simplex_detail::kl_raw(q.data(), p.data(), d, nullptr);
  if (y == 1) return kl_pq + kl_qp;
  return std::max(0.0, m - kl_pq) + std::max(0.0, m - kl_qp);
}

GuideBatchResult guide_loss_batch(const Tensor& pose_probs,
                                  const std::vector<const Tensor*>& feature_probs,
                                  const std::vector<int>& labels, double margin,
                                  std::vector<Tensor>* d_feature_probs, double scale) {
  PGDS_CHECK_ARG(pose_probs.rank() == 2, "guide batch: pose probs must be (N, D)");
  const int n = static_cast<int>(pose_probs.dim(0));
  const int d = static_cast<int>(pose_probs.dim(1));
  PGDS_CHECK_ARG(static_cast<int>(labels.size()) == n, "guide batch: labels length mismatch");
  PGDS_CHECK_ARG(!feature_probs.empty(), "guide batch: no feature layers given");
  PGDS_CHECK_ARG(margin > 0.0, "guide batch: margin must be positive");
  for (const Tensor* f : feature_probs)
    PGDS_CHECK_ARG(f && f->same_shape(pose_probs), "guide batch: layer shape mismatch");
  if (d_feature_probs) {
    PGDS_CHECK_ARG(d_feature_probs->size() == feature_probs.size(),
                   "guide batch: gradient layer count mismatch");
    for (auto& t : *d_feature_probs)
      PGDS_CHECK_ARG(t.same_shape(pose_probs), "guide batch: gradient shape mismatch");
  }

  int n_pos = 0, n_neg = 0;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      if (j == k) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(k)])
        ++n_pos;
      else
        ++n_neg;
    }
  PGDS_CHECK_ARG(n_neg > 0, "guide batch: batch holds fewer than two identities");
  PGDS_CHECK_ARG(n_pos > 0, "guide batch: no same-identity pair in batch");

  const std::size_t n_layers = feature_probs.size();
  GuideBatchResult res;
  res.per_layer.assign(n_layers, 0.0);
  const double layer_scale = scale / static_cast<double>(n_layers);

  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const Tensor& feat = *feature_probs[layer];
    double pos_sum = 0.0, neg_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double* pp = pose_probs.data() + static_cast<std::size_t>(j) * d;
      for (int k = 0; k < n; ++k) {
        if (j == k) continue;
        const double* pf = feat.data() + static_cast<std::size_t>(k) * d;
        const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(k)];

        bool clamped_pq = false, clamped_qp = false;
        const double kl_pq = simplex_detail::kl_raw(pp, pf, d, &clamped_pq);
        const double kl_qp = simplex_detail::kl_raw(pf, pp, d, &clamped_qp);

        double* dfk = nullptr;
        if (d_feature_probs)
          dfk = (*d_feature_probs)[layer].data() + static_cast<std::size_t>(k) * d;

        if (same) {
          pos_sum += kl_pq + kl_qp;
          if (dfk) {
            const double w = layer_scale / static_cast<double>(n_pos);
            // kl_pq depends on pf through its second slot, kl_qp through its first.
            simplex_detail::kl_backward(pp, pf, d, clamped_pq, w, nullptr, dfk);
            simplex_detail::kl_backward(pf, pp, d, clamped_qp, w, dfk, nullptr);
          }
        } else {
          const double h_pq = margin - kl_pq;
          const double h_qp = margin - kl_qp;
          neg_sum += std::max(0.0, h_pq) + std::max(0.0, h_qp);
          if (dfk) {
            const double w = -layer_scale / static_cast<double>(n_neg);
            if (h_pq > 0.0) simplex_detail::kl_backward(pp, pf, d, clamped_pq, w, nullptr, dfk);
            if (h_qp > 0.0) simplex_detail::kl_backward(pf, pp, d, clamped_qp, w, dfk, nullptr);
          }
        }
      }
    }
    res.per_layer[layer] =
        pos_sum / static_cast<double>(n_pos) + neg_sum / static_cast<double>(n_neg);
    res.total += res.per_layer[layer];
  }
  res.total /= static_cast<double>(n_layers);
  return res;
}

LossBreakdown combined_loss(double triplet, const GuideBatchResult& guide, double lambda) {
  PGDS_CHECK_ARG(lambda >= 0.0 && lambda <= 1.0, "combined loss: lambda must be in [0,1]");
  LossBreakdown out;
  out.triplet = triplet;
  out.guide = guide.total;
  out.guide_per_layer = guide.per_layer;
  out.combined = triplet + lambda * guide.total;
  return out;
}

}  // namespace pgds
