#pragma once

#include <string>
#include <vector>

#include "pgds/datagen.hpp"
#include "pgds/tensor.hpp"
#include "pgds/trainer.hpp"

namespace pgds {

// Retrieval index: one L2-normalized embedding row per record.
struct GalleryIndex {
  Tensor embeddings;  // (G, D), unit rows
  std::vector<PersonRecord> records;
};

struct MetricsReport {
  std::string mode;  // "standard", "cc", "cross_domain"
  double map = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  std::vector<double> cmc;           // cmc[k-1] = top-k accuracy, length = gallery size
  std::vector<double> per_query_ap;  // included queries, in query-row order
  int queries_evaluated = 0;
  int queries_excluded = 0;  // queries with no relevant gallery row after filtering
};

// Eval-mode embeddings through the student only; the teacher and projectors
// never execute here. Rows are L2-normalized.
GalleryIndex extract_embeddings(PGDSModel& model, const Dataset& ds,
                                const std::vector<int>& record_indices);

// Protocol retrieval metrics. Gallery rows sharing identity and camera with
// the query are always discarded; mode "cc" additionally discards rows
// sharing identity and clothes. Ranking is by ascending squared Euclidean
// distance with ties broken by gallery row index. AP sums precision at each
// relevant rank divided by the relevant count; queries left without any
// relevant row are excluded and counted. Throws DomainError when query
// identities are not a subset of gallery identities or no query survives.
MetricsReport evaluate(const GalleryIndex& query, const GalleryIndex& gallery,
                       const std::string& mode);

// Builds query/gallery indices from the dataset's test splits and evaluates.
MetricsReport evaluate_dataset(PGDSModel& model, const Dataset& ds, const std::string& mode);

// Standard-protocol evaluation of a model on a dataset it was not trained
// on; the report is tagged "cross_domain".
MetricsReport cross_domain_evaluate(PGDSModel& model, const Dataset& ds);

// Pixel attribution for one (H, W, 3) image: gradient of the embedding's L2
// norm w.r.t. the input, per-pixel channel-max absolute value, normalized to
// max 1. Returned shape (H, W).
Tensor saliency_values(PGDSModel& model, const Tensor& image);
// Renders the attribution as a color overlay PNG.
void saliency_heatmap(PGDSModel& model, const Tensor& image, const std::string& out_png);

void write_metrics_json(const std::string& path, const MetricsReport& report);
void write_cmc_csv(const std::string& path, const MetricsReport& report);

}  // namespace pgds
