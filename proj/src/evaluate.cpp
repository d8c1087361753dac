#include "pgds/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "pgds/common.hpp"
#include "pgds/png_io.hpp"

#include "json.hpp"

namespace pgds {

GalleryIndex extract_embeddings(PGDSModel& model, const Dataset& ds,
                                const std::vector<int>& record_indices) {
  PGDS_CHECK_ARG(!record_indices.empty(), "embedding extraction needs at least one record");
  const auto h = static_cast<std::size_t>(ds.meta.image_height);
  const auto w = static_cast<std::size_t>(ds.meta.image_width);
  const std::size_t hw3 = h * w * 3;
  const auto dim = static_cast<std::size_t>(model.cfg.embedding_dim);

  GalleryIndex index;
  index.embeddings = Tensor({record_indices.size(), dim});
  index.records.reserve(record_indices.size());

  constexpr std::size_t kChunk = 16;
  for (std::size_t base = 0; base < record_indices.size(); base += kChunk) {
    const std::size_t count = std::min(kChunk, record_indices.size() - base);
    Tensor images({count, h, w, 3});
    for (std::size_t b = 0; b < count; ++b) {
      const PersonRecord& rec = ds.records[record_indices[base + b]];
      Tensor img = read_png(image_abs_path(ds, rec));
      PGDS_CHECK_ARG(img.dim(0) == h && img.dim(1) == w, "image ", rec.image_path,
                     " does not match the dataset geometry");
      std::copy(img.data(), img.data() + hw3, images.data() + b * hw3);
      index.records.push_back(rec);
    }
    MultiScaleFeatureSet feats = model.human.forward(images, false);
    for (std::size_t b = 0; b < count; ++b) {
      const double* row = feats.embedding.data() + b * dim;
      double norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) norm += row[k] * row[k];
      norm = std::sqrt(std::max(norm, 1e-24));
      double* out = index.embeddings.data() + (base + b) * dim;
      for (std::size_t k = 0; k < dim; ++k) out[k] = row[k] / norm;
    }
  }
  return index;
}

MetricsReport evaluate(const GalleryIndex& query, const GalleryIndex& gallery,
                       const std::string& mode) {
  PGDS_CHECK_ARG(mode == "standard" || mode == "cc" || mode == "cross_domain",
                 "unknown evaluation mode '", mode, "'");
  const auto nq = query.records.size();
  const auto ng = gallery.records.size();
  PGDS_CHECK_ARG(nq >= 1 && ng >= 1, "evaluation needs nonempty query and gallery sets");
  PGDS_CHECK_ARG(query.embeddings.dim(0) == nq && gallery.embeddings.dim(0) == ng,
                 "index rows do not match record counts");
  const std::size_t dim = query.embeddings.dim(1);
  PGDS_CHECK_ARG(gallery.embeddings.dim(1) == dim, "query/gallery dimensionality mismatch");

  std::set<int> gallery_ids;
  for (const auto& r : gallery.records) gallery_ids.insert(r.identity_id);
  for (const auto& r : query.records) {
    PGDS_CHECK_ARG(gallery_ids.count(r.identity_id) != 0, "query identity ", r.identity_id,
                   " absent from the gallery");
  }

  const bool clothes_filter = (mode == "cc");

  MetricsReport report;
  report.mode = mode;
  report.cmc.assign(ng, 0.0);
  std::vector<double> first_hit_counts(ng, 0.0);

  for (std::size_t qi = 0; qi < nq; ++qi) {
    const PersonRecord& qr = query.records[qi];
    const double* qe = query.embeddings.data() + qi * dim;

    std::vector<std::pair<double, int>> ranked;  // (distance, gallery row)
    ranked.reserve(ng);
    for (std::size_t gi = 0; gi < ng; ++gi) {
      const PersonRecord& gr = gallery.records[gi];
      const bool same_id = gr.identity_id == qr.identity_id;
      if (same_id && gr.camera_id == qr.camera_id) continue;
      if (clothes_filter && same_id && gr.clothes_id == qr.clothes_id) continue;
      const double* ge = gallery.embeddings.data() + gi * dim;
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = qe[k] - ge[k];
        d += diff * diff;
      }
      ranked.emplace_back(d, static_cast<int>(gi));
    }
    std::sort(ranked.begin(), ranked.end());

    int relevant = 0;
    for (const auto& [d, gi] : ranked) {
      (void)d;
      if (gallery.records[gi].identity_id == qr.identity_id) ++relevant;
    }
    if (relevant == 0) {
      ++report.queries_excluded;
      continue;
    }

    double ap = 0.0;
    int hits = 0;
    int first_hit = -1;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (gallery.records[ranked[r].second].identity_id != qr.identity_id) continue;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (first_hit < 0) first_hit = static_cast<int>(r);
    }
    report.per_query_ap.push_back(ap / relevant);
    first_hit_counts[first_hit] += 1.0;
  }

  report.queries_evaluated = static_cast<int>(report.per_query_ap.size());
  PGDS_CHECK_ARG(report.queries_evaluated > 0,
                 "every query was excluded by the protocol filter");
  report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) /
               report.queries_evaluated;

  double cum = 0.0;
  for (std::size_t k = 0; k < ng; ++k) {
    cum += first_hit_counts[k];
    report.cmc[k] = cum / report.queries_evaluated;
  }
  auto cmc_at = [&](std::size_t k) { return report.cmc[std::min(k, ng) - 1]; };
  report.rank1 = cmc_at(1);
  report.rank5 = cmc_at(5);
  report.rank10 = cmc_at(10);
  return report;
}

MetricsReport evaluate_dataset(PGDSModel& model, const Dataset& ds, const std::string& mode) {
  const auto q_idx = indices_with_split(ds.records, Split::query);
  const auto g_idx = indices_with_split(ds.records, Split::gallery);
  PGDS_CHECK_ARG(!q_idx.empty() && !g_idx.empty(), "dataset lacks query/gallery splits");
  GalleryIndex query = extract_embeddings(model, ds, q_idx);
  GalleryIndex gallery = extract_embeddings(model, ds, g_idx);
  return evaluate(query, gallery, mode);
}

MetricsReport cross_domain_evaluate(PGDSModel& model, const Dataset& ds) {
  return evaluate_dataset(model, ds, "cross_domain");
}

Tensor saliency_values(PGDSModel& model, const Tensor& image) {
  PGDS_CHECK_ARG(image.rank() == 3 && image.dim(2) == 3, "saliency expects one (H, W, 3) image");
  const std::size_t h = image.dim(0), w = image.dim(1);
  Tensor batch({1, h, w, 3});
  std::copy(image.data(), image.data() + image.size(), batch.data());

  MultiScaleFeatureSet feats = model.human.forward(batch, false);
  const std::size_t dim = feats.embedding.dim(1);
  double norm = 0.0;
  for (std::size_t k = 0; k < dim; ++k) norm += feats.embedding[k] * feats.embedding[k];
  norm = std::sqrt(std::max(norm, 1e-24));
  Tensor d_emb({1, dim});
  for (std::size_t k = 0; k < dim; ++k) d_emb[k] = feats.embedding[k] / norm;

  Tensor d_input({1, h, w, 3});
  model.human.backward(d_emb, nullptr, &d_input);

  Tensor sal({h, w});
  double peak = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double m = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        m = std::max(m, std::abs(d_input[(y * w + x) * 3 + c]));
      }
      sal[y * w + x] = m;
      peak = std::max(peak, m);
    }
  }
  if (peak > 0.0) {
    for (std::size_t i = 0; i < sal.size(); ++i) sal[i] /= peak;
  }
  return sal;
}

void saliency_heatmap(PGDSModel& model, const Tensor& image, const std::string& out_png) {
  Tensor sal = saliency_values(model, image);
  const std::size_t h = sal.dim(0), w = sal.dim(1);
  Tensor out({h, w, 3});
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = sal[i];
    const double gray =
        0.299 * image[i * 3] + 0.587 * image[i * 3 + 1] + 0.114 * image[i * 3 + 2];
    const double a = 0.85 * v;
    const double heat_r = v, heat_g = 0.25 * v, heat_b = 1.0 - v;
    out[i * 3] = (1.0 - a) * gray + a * heat_r;
    out[i * 3 + 1] = (1.0 - a) * gray + a * heat_g;
    out[i * 3 + 2] = (1.0 - a) * gray + a * heat_b;
  }
  write_png(out_png, out);
}

void write_metrics_json(const std::string& path, const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode;
  j["map"] = report.map;
  j["rank1"] = report.rank1;
  j["rank5"] = report.rank5;
  j["rank10"] = report.rank10;
  j["queries_evaluated"] = report.queries_evaluated;
  j["queries_excluded"] = report.queries_excluded;
  j["cmc"] = report.cmc;
  j["per_query_ap"] = report.per_query_ap;
  std::ofstream out(path, std::ios::trunc);
  PGDS_CHECK_IO(out.good(), "cannot write metrics report ", path);
  out << j.dump(2) << '\n';
}

void write_cmc_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  PGDS_CHECK_IO(out.good(), "cannot write CMC table ", path);
  out << "rank,accuracy\n";
  for (std::size_t k = 0; k < report.cmc.size(); ++k) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", k + 1, report.cmc[k]);
    out << buf;
  }
  PGDS_CHECK_IO(out.good(), "failed writing CMC table ", path);
}

}  // namespace pgds
