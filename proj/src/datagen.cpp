#include "pgds/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pgds/common.hpp"
#include "pgds/config.hpp"
#include "pgds/png_io.hpp"
#include "pgds/rng.hpp"

namespace fs = std::filesystem;

namespace pgds {

namespace {

enum Joint {
  kHead = 0,
  kNeck,
  kPelvis,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLHand,
  kRHand,
  kLKnee,
  kRKnee,
  kLFoot,
  kRFoot
};

using Vec2 = std::array<double, 2>;
using Rgb = std::array<double, 3>;

Vec2 rot(const Vec2& w, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {w[0] * c - w[1] * s, w[0] * s + w[1] * c};
}

Vec2 add(const Vec2& a, const Vec2& b, double t) { return {a[0] + t * b[0], a[1] + t * b[1]}; }

struct StyleParams {
  std::vector<Rgb> bg_palette;
  double thick_base;
  double thick_range;
  double bg_noise;
};

StyleParams style_params(const std::string& style) {
  if (style == "a") {
    return {{{0.34, 0.37, 0.42}, {0.45, 0.41, 0.36}, {0.37, 0.44, 0.39}, {0.43, 0.37, 0.44}},
            1.30,
            0.50,
            0.020};
  }
  if (style == "b") {
    return {{{0.58, 0.54, 0.47}, {0.50, 0.56, 0.60}, {0.60, 0.50, 0.52}, {0.53, 0.58, 0.50}},
            1.90,
            0.70,
            0.035};
  }
  throw DomainError("unknown render style: " + style);
}

const std::array<Rgb, 5> kSkinPalette = {{{0.96, 0.82, 0.70},
                                          {0.88, 0.69, 0.55},
                                          {0.77, 0.57, 0.43},
                                          {0.61, 0.43, 0.31},
                                          {0.46, 0.31, 0.23}}};

const std::array<Rgb, 4> kHairPalette = {
    {{0.10, 0.08, 0.07}, {0.25, 0.16, 0.10}, {0.45, 0.33, 0.18}, {0.55, 0.52, 0.50}}};

const Rgb kShoeColor = {0.13, 0.12, 0.14};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Visits every pixel covered by the capsule around segment p0-p1 with a
// soft-edged coverage weight in (0,1].
template <typename F>
void rasterize_capsule(int h, int w, const Vec2& p0, const Vec2& p1, double r, F&& visit) {
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(p0[1], p1[1]) - r - 1.0)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(p0[1], p1[1]) + r + 1.0)));
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p0[0], p1[0]) - r - 1.0)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(p0[0], p1[0]) + r + 1.0)));
  const double dx = p1[0] - p0[0], dy = p1[1] - p0[1];
  const double len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp(((px - p0[0]) * dx + (py - p0[1]) * dy) / len2, 0.0, 1.0);
      const double qx = p0[0] + t * dx - px, qy = p0[1] + t * dy - py;
      const double dist = std::sqrt(qx * qx + qy * qy);
      const double cov = std::clamp(r + 0.5 - dist, 0.0, 1.0);
      if (cov > 0.0) visit(y, x, cov);
    }
  }
}

void blend_capsule(Tensor& img, const Vec2& p0, const Vec2& p1, double r, const Rgb& color) {
  const int h = static_cast<int>(img.dim(0)), w = static_cast<int>(img.dim(1));
  rasterize_capsule(h, w, p0, p1, r, [&](int y, int x, double c) {
    double* px = img.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    for (int ch = 0; ch < 3; ++ch) px[ch] = px[ch] * (1.0 - c) + color[ch] * c;
  });
}

void cover_capsule(Tensor& cov, const Vec2& p0, const Vec2& p1, double r) {
  const int h = static_cast<int>(cov.dim(0)), w = static_cast<int>(cov.dim(1));
  rasterize_capsule(h, w, p0, p1, r, [&](int y, int x, double c) {
    double& m = cov[static_cast<std::size_t>(y) * w + x];
    m = std::max(m, c);
  });
}

struct BodyPaint {
  Rgb shirt, pants, skin, hair;
};

// Single source of the figure's solid geometry so the RGB render and the
// body mask can never drift apart.
template <typename Cap>
void paint_figure(const FigureGeometry& f, Cap&& cap) {
  const auto& j = f.joints;
  cap(j[kPelvis], j[kLKnee], f.leg_thickness, 1);    // 1 = pants
  cap(j[kLKnee], j[kLFoot], f.leg_thickness, 1);
  cap(j[kPelvis], j[kRKnee], f.leg_thickness, 1);
  cap(j[kRKnee], j[kRFoot], f.leg_thickness, 1);
  cap(j[kLFoot], j[kLFoot], f.leg_thickness * 1.3, 3);  // 3 = shoes
  cap(j[kRFoot], j[kRFoot], f.leg_thickness * 1.3, 3);
  cap(j[kNeck], j[kPelvis], f.torso_radius, 0);      // 0 = shirt
  cap(j[kNeck], j[kLShoulder], f.arm_thickness, 0);
  cap(j[kNeck], j[kRShoulder], f.arm_thickness, 0);
  cap(j[kLShoulder], j[kLElbow], f.arm_thickness, 0);
  cap(j[kRShoulder], j[kRElbow], f.arm_thickness, 0);
  cap(j[kLElbow], j[kLHand], f.arm_thickness * 0.85, 2);  // 2 = skin
  cap(j[kRElbow], j[kRHand], f.arm_thickness * 0.85, 2);
  cap(j[kLHand], j[kLHand], f.arm_thickness, 2);
  cap(j[kRHand], j[kRHand], f.arm_thickness, 2);
  cap(j[kHead], j[kHead], f.head_radius, 2);
  const Vec2 up = {j[kHead][0] - j[kNeck][0], j[kHead][1] - j[kNeck][1]};
  const double n = std::max(1e-9, std::hypot(up[0], up[1]));
  const Vec2 hair_c = {j[kHead][0] + up[0] / n * f.head_radius * 0.40,
                       j[kHead][1] + up[1] / n * f.head_radius * 0.40};
  cap(hair_c, hair_c, f.head_radius * 0.82, 4);  // 4 = hair
}

std::string record_stem(const PersonRecord& rec, int m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "id%04d_c%02d_k%04d_m%02d", rec.identity_id, rec.camera_id,
                rec.clothes_id, m);
  return buf;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kHeatmapMagic = 0x31504D48u;  // "HMP1"

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    default: return "gallery";
  }
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "query") return Split::query;
  if (name == "gallery") return Split::gallery;
  throw DomainError("unknown split name: " + name);
}

const std::vector<Bone>& skeleton_bones() {
  static const std::vector<Bone> bones = {
      {kHead, kNeck},      {kNeck, kPelvis},    {kNeck, kLShoulder}, {kNeck, kRShoulder},
      {kLShoulder, kLElbow}, {kLElbow, kLHand}, {kRShoulder, kRElbow}, {kRElbow, kRHand},
      {kPelvis, kLKnee},   {kLKnee, kLFoot},    {kPelvis, kRKnee},   {kRKnee, kRFoot}};
  return bones;
}

std::vector<IdentitySpec> make_identity_specs(std::uint64_t seed, int n) {
  PGDS_CHECK_ARG(n >= 1, "identity spec count must be >= 1, got ", n);
  Rng rng(derive_seed(seed, "identity"));
  std::vector<IdentitySpec> specs;
  specs.reserve(static_cast<std::size_t>(n));

  auto distinct = [](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 0.05 * std::max(a[i], b[i])) return true;
    return false;
  };

  for (int id = 0; id < n; ++id) {
    IdentitySpec spec;
    spec.identity_id = id;
    for (int attempt = 0;; ++attempt) {
      PGDS_CHECK_STATE(attempt < 10000, "identity sampling failed to find a distinct skeleton");
      spec.head_size = rng.uniform(0.050, 0.075);
      spec.limb_ratios = {rng.uniform(0.045, 0.070), rng.uniform(0.26, 0.34),
                          rng.uniform(0.070, 0.110), rng.uniform(0.035, 0.060),
                          rng.uniform(0.13, 0.19),   rng.uniform(0.11, 0.17),
                          rng.uniform(0.17, 0.24),   rng.uniform(0.15, 0.22)};
      bool ok = true;
      for (const auto& prev : specs)
        if (!distinct(spec.limb_ratios, prev.limb_ratios)) {
          ok = false;
          break;
        }
      if (ok) break;
    }
    spec.skin_tone = kSkinPalette[rng.uniform_index(kSkinPalette.size())];
    spec.hair_tone = kHairPalette[rng.uniform_index(kHairPalette.size())];
    spec.thickness_jitter = rng.uniform();
    specs.push_back(std::move(spec));
  }
  return specs;
}

FigureGeometry pose_figure(const IdentitySpec& spec, std::uint64_t pose_seed, int image_height,
                           int image_width, const std::string& style) {
  PGDS_CHECK_ARG(spec.limb_ratios.size() == 8, "identity spec must carry 8 limb ratios");
  const StyleParams sp = style_params(style);
  const double neck_len = spec.limb_ratios[0], torso = spec.limb_ratios[1];
  const double shoulder_half = spec.limb_ratios[2], hip_half = spec.limb_ratios[3];
  const double upper_arm = spec.limb_ratios[4], fore_arm = spec.limb_ratios[5];
  const double thigh = spec.limb_ratios[6], shin = spec.limb_ratios[7];

  // Scale depends only on the identity, so limb pixel lengths are a stable
  // biometric signature across poses, cameras, and clothes.
  const double nominal = 2.0 * spec.head_size + neck_len + torso + thigh + shin;
  const double s = 0.75 * image_height / nominal;

  Rng rng(pose_seed);
  const double lean = rng.uniform(-0.10, 0.10);
  const double arm_l = rng.uniform(-0.08, 0.28), arm_r = rng.uniform(-0.08, 0.28);
  const double elb_l = rng.uniform(-0.05, 0.45), elb_r = rng.uniform(-0.05, 0.45);
  const double th_l = rng.uniform(-0.22, 0.22), th_r = rng.uniform(-0.22, 0.22);
  const double kn_l = rng.uniform(-0.05, 0.38), kn_r = rng.uniform(-0.05, 0.38);
  const double jx = rng.uniform(-1.5, 1.5), jy = rng.uniform(-1.5, 1.5);

  const Vec2 up = {std::sin(lean), -std::cos(lean)};
  const Vec2 right = {std::cos(lean), std::sin(lean)};
  const Vec2 down = {-up[0], -up[1]};

  FigureGeometry f;
  auto& j = f.joints;
  j[kPelvis] = {image_width / 2.0 + jx, 0.56 * image_height + jy};
  j[kNeck] = add(j[kPelvis], up, torso * s);
  j[kHead] = add(j[kNeck], up, (neck_len + spec.head_size) * s);
  j[kLShoulder] = add(j[kNeck], right, -shoulder_half * s);
  j[kRShoulder] = add(j[kNeck], right, shoulder_half * s);

  const auto inside = [&](const Vec2& p) {
    return p[0] >= 1.0 && p[0] <= image_width - 2.0 && p[1] >= 1.0 && p[1] <= image_height - 2.0;
  };
  // Damp a limb's swing until both segments fit the crop. Segment lengths are
  // the identity signature, so the pose yields, never the skeleton.
  const auto fit_chain = [&](const Vec2& base, int mid, int tip, double a_mid, double a_tip,
                             double len_mid, double len_tip) {
    double damp = 1.0;
    for (int it = 0; it < 60; ++it) {
      j[mid] = add(base, rot(down, a_mid * damp), len_mid);
      j[tip] = add(j[mid], rot(down, (a_mid + a_tip) * damp), len_tip);
      if (inside(j[mid]) && inside(j[tip])) return;
      damp *= 0.85;
    }
    j[mid] = add(base, down, len_mid);
    j[tip] = add(j[mid], down, len_tip);
  };
  fit_chain(j[kLShoulder], kLElbow, kLHand, arm_l, elb_l, upper_arm * s, fore_arm * s);
  fit_chain(j[kRShoulder], kRElbow, kRHand, -arm_r, -elb_r, upper_arm * s, fore_arm * s);
  fit_chain(add(j[kPelvis], right, -hip_half * s), kLKnee, kLFoot, th_l, kn_l, thigh * s,
            shin * s);
  fit_chain(add(j[kPelvis], right, hip_half * s), kRKnee, kRFoot, th_r, -kn_r, thigh * s,
            shin * s);

  // Safety net for the tail the damping cannot reach (an oversize torso on a
  // leaning figure); keeps every keypoint target unclipped at the border.
  for (auto& pt : j) {
    pt[0] = std::clamp(pt[0], 1.0, image_width - 2.0);
    pt[1] = std::clamp(pt[1], 1.0, image_height - 2.0);
  }

  f.head_radius = spec.head_size * s;
  const double thick = sp.thick_base + spec.thickness_jitter * sp.thick_range;
  f.arm_thickness = thick * 0.85;
  f.leg_thickness = thick * 1.05;
  f.torso_radius = shoulder_half * s * 0.72;
  return f;
}

Tensor render_person(const FigureGeometry& fig, const IdentitySpec& spec, int camera_id,
                     int clothes_id, std::uint64_t noise_seed, int image_height, int image_width,
                     const std::string& style, std::uint64_t dataset_seed) {
  const StyleParams sp = style_params(style);
  const Rgb base = sp.bg_palette[static_cast<std::size_t>(camera_id) % sp.bg_palette.size()];

  Tensor img({static_cast<std::size_t>(image_height), static_cast<std::size_t>(image_width), 3});
  Rng bg(noise_seed);
  std::size_t idx = 0;
  for (int y = 0; y < image_height; ++y) {
    const double grad = 1.0 + 0.10 * ((y + 0.5) / image_height - 0.5);
    for (int x = 0; x < image_width; ++x)
      for (int c = 0; c < 3; ++c, ++idx)
        img[idx] = std::clamp(base[c] * grad + bg.uniform(-sp.bg_noise, sp.bg_noise), 0.0, 1.0);
  }

  Rng cl(derive_seed(dataset_seed, "clothes", clothes_id));
  BodyPaint paint;
  paint.shirt = hsv_to_rgb(cl.uniform(), cl.uniform(0.55, 0.95), cl.uniform(0.50, 0.90));
  paint.pants = hsv_to_rgb(cl.uniform(), cl.uniform(0.55, 0.95), cl.uniform(0.40, 0.85));
  paint.skin = spec.skin_tone;
  paint.hair = spec.hair_tone;

  paint_figure(fig, [&](const Vec2& a, const Vec2& b, double r, int material) {
    const Rgb* color = nullptr;
    switch (material) {
      case 0: color = &paint.shirt; break;
      case 1: color = &paint.pants; break;
      case 2: color = &paint.skin; break;
      case 3: color = &kShoeColor; break;
      default: color = &paint.hair; break;
    }
    blend_capsule(img, a, b, r, *color);
  });
  return img;
}

Tensor render_body_mask(const FigureGeometry& fig, int image_height, int image_width) {
  Tensor cov({static_cast<std::size_t>(image_height), static_cast<std::size_t>(image_width)});
  paint_figure(fig, [&](const Vec2& a, const Vec2& b, double r, int) {
    cover_capsule(cov, a, b, r);
  });
  return cov;
}

Tensor render_heatmap(const FigureGeometry& fig, int hm_h, int hm_w, int scale) {
  PGDS_CHECK_ARG(hm_h > 0 && hm_w > 0 && scale > 0, "bad heatmap dimensions");
  constexpr double kSigma = 0.9;
  constexpr double kRidgeAmp = 0.35;
  constexpr double kRidgeSigma = 0.55;

  std::array<Vec2, kNumJoints> pj;
  for (int k = 0; k < kNumJoints; ++k)
    pj[k] = {fig.joints[k][0] / scale, fig.joints[k][1] / scale};

  Tensor hm({static_cast<std::size_t>(hm_h), static_cast<std::size_t>(hm_w),
             static_cast<std::size_t>(kNumJoints)});
  for (int y = 0; y < hm_h; ++y) {
    for (int x = 0; x < hm_w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double* cell = hm.data() + (static_cast<std::size_t>(y) * hm_w + x) * kNumJoints;
      for (int k = 0; k < kNumJoints; ++k) {
        const double dx = px - pj[k][0], dy = py - pj[k][1];
        double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
        // Faint ridges along incident bones: the channel's spatial mean then
        // grows with the adjacent limb lengths, a clothes-invariant cue.
        for (const Bone& bone : skeleton_bones()) {
          if (bone.a != k && bone.b != k) continue;
          const Vec2& a = pj[bone.a];
          const Vec2& b = pj[bone.b];
          const double ex = b[0] - a[0], ey = b[1] - a[1];
          const double len2 = ex * ex + ey * ey;
          double t = 0.0;
          if (len2 > 0.0) t = std::clamp(((px - a[0]) * ex + (py - a[1]) * ey) / len2, 0.0, 1.0);
          const double qx = a[0] + t * ex - px, qy = a[1] + t * ey - py;
          const double d2 = qx * qx + qy * qy;
          v += kRidgeAmp * std::exp(-d2 / (2.0 * kRidgeSigma * kRidgeSigma));
        }
        cell[k] = std::min(v, 1.0);
      }
    }
  }
  return hm;
}

FigureGeometry figure_for_record(const DatasetMeta& meta, const std::vector<IdentitySpec>& specs,
                                 const PersonRecord& rec) {
  PGDS_CHECK_ARG(rec.identity_id >= 0 && rec.identity_id < static_cast<int>(specs.size()),
                 "record identity ", rec.identity_id, " outside spec table");
  return pose_figure(specs[static_cast<std::size_t>(rec.identity_id)], rec.pose_seed,
                     meta.image_height, meta.image_width, meta.style);
}

Tensor body_mask_for_record(const DatasetMeta& meta, const std::vector<IdentitySpec>& specs,
                            const PersonRecord& rec) {
  return render_body_mask(figure_for_record(meta, specs, rec), meta.image_height,
                          meta.image_width);
}

void write_heatmap_file(const std::string& path, const Tensor& hm) {
  PGDS_CHECK_ARG(hm.rank() == 3, "heatmap tensor must be (h, w, J)");
  std::ofstream out(path, std::ios::binary);
  PGDS_CHECK_IO(out.good(), "cannot write heatmap file ", path);
  put_u32(out, kHeatmapMagic);
  put_u32(out, static_cast<std::uint32_t>(hm.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(hm.dim(1)));
  put_u32(out, static_cast<std::uint32_t>(hm.dim(2)));
  for (std::size_t i = 0; i < hm.size(); ++i) {
    const float v = static_cast<float>(hm[i]);
    out.write(reinterpret_cast<const char*>(&v), sizeof(float));
  }
  PGDS_CHECK_IO(out.good(), "short write on heatmap file ", path);
}

Tensor read_heatmap_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  PGDS_CHECK_IO(in.good(), "cannot open heatmap file ", path);
  const std::uint32_t magic = get_u32(in);
  PGDS_CHECK_IO(magic == kHeatmapMagic, "bad heatmap magic in ", path);
  const std::uint32_t h = get_u32(in), w = get_u32(in), j = get_u32(in);
  PGDS_CHECK_IO(in.good() && h > 0 && w > 0 && j > 0, "bad heatmap header in ", path);
  Tensor hm({h, w, j});
  for (std::size_t i = 0; i < hm.size(); ++i) {
    float v = 0.0f;
    in.read(reinterpret_cast<char*>(&v), sizeof(float));
    hm[i] = v;
  }
  PGDS_CHECK_IO(in.good(), "truncated heatmap file ", path);
  return hm;
}

void write_manifest(const std::string& path, const std::vector<PersonRecord>& records) {
  std::ofstream out(path);
  PGDS_CHECK_IO(out.good(), "cannot write manifest ", path);
  out << "identity_id,camera_id,clothes_id,pose_seed,split,image_path\n";
  for (const auto& r : records)
    out << r.identity_id << ',' << r.camera_id << ',' << r.clothes_id << ',' << r.pose_seed << ','
        << split_name(r.split) << ',' << r.image_path << '\n';
  PGDS_CHECK_IO(out.good(), "short write on manifest ", path);
}

std::vector<PersonRecord> load_manifest(const std::string& path, bool check_files) {
  std::ifstream in(path);
  PGDS_CHECK_IO(in.good(), "cannot open manifest ", path);
  std::string line;
  PGDS_CHECK_IO(static_cast<bool>(std::getline(in, line)), "manifest ", path, " is empty");
  PGDS_CHECK_IO(line == "identity_id,camera_id,clothes_id,pose_seed,split,image_path",
                "manifest ", path, " has an unexpected header: ", line);

  const fs::path base = fs::path(path).parent_path();
  std::vector<PersonRecord> records;
  std::set<std::tuple<int, int, int, std::uint64_t>> keys;
  std::set<int> query_ids, gallery_ids;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    PGDS_CHECK_IO(fields.size() == 6, "manifest row ", row, ": expected 6 fields, got ",
                  fields.size());
    PersonRecord r;
    try {
      r.identity_id = std::stoi(fields[0]);
      r.camera_id = std::stoi(fields[1]);
      r.clothes_id = std::stoi(fields[2]);
      r.pose_seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw IoError(detail::format_msg("manifest row ", row, ": malformed numeric field"));
    }
    try {
      r.split = split_from_name(fields[4]);
    } catch (const DomainError&) {
      throw IoError(detail::format_msg("manifest row ", row, ": unknown split ", fields[4]));
    }
    r.image_path = fields[5];
    PGDS_CHECK_IO(!r.image_path.empty(), "manifest row ", row, ": empty image path");

    const auto key = std::make_tuple(r.identity_id, r.camera_id, r.clothes_id, r.pose_seed);
    PGDS_CHECK_IO(keys.insert(key).second, "manifest row ", row,
                  ": duplicate (identity, camera, clothes, pose_seed) key");
    if (check_files)
      PGDS_CHECK_IO(fs::exists(base / r.image_path), "manifest row ", row,
                    ": missing image file ", (base / r.image_path).string());
    if (r.split == Split::query) query_ids.insert(r.identity_id);
    if (r.split == Split::gallery) gallery_ids.insert(r.identity_id);
    records.push_back(std::move(r));
  }
  PGDS_CHECK_ARG(!records.empty(), "manifest ", path, ": no records");
  for (int id : query_ids)
    PGDS_CHECK_IO(gallery_ids.count(id), "manifest ", path, ": query identity ", id,
                  " absent from gallery");
  return records;
}

void write_meta(const std::string& path, const DatasetMeta& meta) {
  std::ofstream out(path);
  PGDS_CHECK_IO(out.good(), "cannot write dataset meta ", path);
  out << "[dataset]\n"
      << "seed = " << meta.seed << "\n"
      << "identities = " << meta.identities << "\n"
      << "cameras = " << meta.cameras << "\n"
      << "clothes_per_identity = " << meta.clothes_per_identity << "\n"
      << "images_per_combination = " << meta.images_per_combination << "\n"
      << "image_height = " << meta.image_height << "\n"
      << "image_width = " << meta.image_width << "\n"
      << "joints = " << meta.joints << "\n"
      << "heatmap_scale = " << meta.heatmap_scale << "\n"
      << "style = " << meta.style << "\n";
  out.precision(17);
  out << "train_fraction = " << meta.train_fraction << "\n";
  PGDS_CHECK_IO(out.good(), "short write on dataset meta ", path);
}

DatasetMeta load_meta(const std::string& path) {
  const auto kv = read_ini(path);
  DatasetMeta meta;
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find("dataset." + key);
    PGDS_CHECK_IO(it != kv.end(), "dataset meta ", path, " missing key ", key);
    return it->second;
  };
  try {
    meta.seed = std::stoull(need("seed"));
    meta.identities = std::stoi(need("identities"));
    meta.cameras = std::stoi(need("cameras"));
    meta.clothes_per_identity = std::stoi(need("clothes_per_identity"));
    meta.images_per_combination = std::stoi(need("images_per_combination"));
    meta.image_height = std::stoi(need("image_height"));
    meta.image_width = std::stoi(need("image_width"));
    meta.joints = std::stoi(need("joints"));
    meta.heatmap_scale = std::stoi(need("heatmap_scale"));
    meta.style = need("style");
    meta.train_fraction = std::stod(need("train_fraction"));
  } catch (const IoError&) {
    throw;
  } catch (const std::exception&) {
    throw IoError("dataset meta " + path + " has a malformed value");
  }
  return meta;
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  ds.meta = load_meta((fs::path(dir) / "meta.ini").string());
  ds.records = load_manifest((fs::path(dir) / "manifest.csv").string());
  return ds;
}

std::string image_abs_path(const Dataset& ds, const PersonRecord& rec) {
  return (fs::path(ds.dir) / rec.image_path).string();
}

std::string heatmap_abs_path(const Dataset& ds, const PersonRecord& rec) {
  fs::path p(rec.image_path);
  const std::string stem = p.stem().string();
  return (fs::path(ds.dir) / "heatmaps" / (stem + ".hm")).string();
}

std::vector<int> indices_with_split(const std::vector<PersonRecord>& records, Split s) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) idx.push_back(static_cast<int>(i));
  return idx;
}

PKBatchSampler::PKBatchSampler(const std::vector<PersonRecord>& records, int p, int k,
                               std::uint64_t seed)
    : p_(p), k_(k), seed_(seed) {
  PGDS_CHECK_ARG(p >= 2 && k >= 2, "PK sampling requires P >= 2 and K >= 2");
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == Split::train)
      groups[records[i].identity_id].push_back(static_cast<int>(i));
  PGDS_CHECK_ARG(static_cast<int>(groups.size()) >= p, "PK sampling needs at least ", p,
                 " train identities, found ", groups.size());
  std::size_t total = 0;
  for (auto& [id, idx] : groups) {
    identity_ids_.push_back(id);
    total += idx.size();
    by_identity_.push_back(std::move(idx));
  }
  batches_per_epoch_ = std::max<int>(1, static_cast<int>(total) / (p_ * k_));
}

std::vector<std::vector<int>> PKBatchSampler::epoch_batches(int epoch) const {
  Rng rng(derive_seed(seed_, "pk-epoch", epoch));
  const int n_ids = static_cast<int>(by_identity_.size());

  std::vector<int> perm(static_cast<std::size_t>(n_ids));
  for (int i = 0; i < n_ids; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  std::size_t cursor = 0;
  auto next_identity = [&]() {
    if (cursor == perm.size()) {
      rng.shuffle(perm);
      cursor = 0;
    }
    return perm[cursor++];
  };

  std::vector<std::vector<int>> batches;
  batches.reserve(static_cast<std::size_t>(batches_per_epoch_));
  for (int b = 0; b < batches_per_epoch_; ++b) {
    std::vector<int> chosen_ids;
    while (static_cast<int>(chosen_ids.size()) < p_) {
      const int cand = next_identity();
      if (std::find(chosen_ids.begin(), chosen_ids.end(), cand) == chosen_ids.end())
        chosen_ids.push_back(cand);
    }
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(p_ * k_));
    for (int ident : chosen_ids) {
      const auto& pool = by_identity_[static_cast<std::size_t>(ident)];
      if (static_cast<int>(pool.size()) >= k_) {
        std::vector<int> copy = pool;
        rng.shuffle(copy);
        batch.insert(batch.end(), copy.begin(), copy.begin() + k_);
      } else {
        for (int t = 0; t < k_; ++t) batch.push_back(pool[rng.uniform_index(pool.size())]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Tensor augment(const Tensor& image, std::uint64_t seed) {
  PGDS_CHECK_ARG(image.rank() == 3 && image.dim(2) == 3, "augment: expected (H, W, 3) image");
  const int h = static_cast<int>(image.dim(0)), w = static_cast<int>(image.dim(1));
  Rng rng(seed);
  Tensor out = image;

  if (rng.uniform() < 0.5) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
              image[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * 3 + c];
  }

  if (rng.uniform() < 0.5) {
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double area = rng.uniform(0.02, 0.40) * h * w;
      const double aspect = rng.uniform(0.3, 3.3);
      const int eh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
      const int ew = static_cast<int>(std::lround(std::sqrt(area / aspect)));
      if (eh < 1 || ew < 1 || eh > h || ew > w) continue;
      const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h - eh + 1)));
      const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w - ew + 1)));
      for (int y = y0; y < y0 + eh; ++y)
        for (int x = x0; x < x0 + ew; ++x)
          for (int c = 0; c < 3; ++c)
            out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = rng.uniform();
      break;
    }
  }
  return out;
}

void generate_dataset(const GenOptions& opt, const std::string& out_dir) {
  PGDS_CHECK_ARG(opt.n_identities >= 2, "need at least 2 identities, got ", opt.n_identities);
  PGDS_CHECK_ARG(opt.clothes_per_identity >= 2, "need at least 2 clothes per identity, got ",
                 opt.clothes_per_identity);
  PGDS_CHECK_ARG(opt.cameras >= 1, "need at least 1 camera");
  PGDS_CHECK_ARG(opt.images_per_combination >= 1, "need at least 1 image per combination");
  PGDS_CHECK_ARG(opt.image_height % 32 == 0 && opt.image_width % 32 == 0,
                 "image dims must be multiples of 32");
  PGDS_CHECK_ARG(opt.train_fraction > 0.0 && opt.train_fraction < 1.0,
                 "train_fraction must be in (0,1)");
  style_params(opt.style);

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  PGDS_CHECK_IO(!ec, "cannot create output directory ", out_dir, ": ", ec.message());
  fs::create_directories(fs::path(out_dir) / "heatmaps", ec);
  PGDS_CHECK_IO(!ec, "cannot create output directory ", out_dir, ": ", ec.message());

  const auto specs = make_identity_specs(opt.seed, opt.n_identities);

  std::vector<int> id_order(static_cast<std::size_t>(opt.n_identities));
  for (int i = 0; i < opt.n_identities; ++i) id_order[static_cast<std::size_t>(i)] = i;
  Rng split_rng(derive_seed(opt.seed, "split"));
  split_rng.shuffle(id_order);
  int n_train = static_cast<int>(std::lround(opt.n_identities * opt.train_fraction));
  n_train = std::clamp(n_train, 1, opt.n_identities - 1);
  std::set<int> train_ids(id_order.begin(), id_order.begin() + n_train);

  const int hm_h = opt.image_height / 4, hm_w = opt.image_width / 4;
  std::vector<PersonRecord> records;
  for (int id = 0; id < opt.n_identities; ++id) {
    for (int cam = 0; cam < opt.cameras; ++cam) {
      for (int k = 0; k < opt.clothes_per_identity; ++k) {
        for (int m = 0; m < opt.images_per_combination; ++m) {
          PersonRecord rec;
          rec.identity_id = id;
          rec.camera_id = cam;
          rec.clothes_id = id * opt.clothes_per_identity + k;
          // The pose stream ignores clothes, so every pose repeats once per
          // clothes_id: geometry identical, colors different.
          rec.pose_seed = derive_seed(opt.seed, "pose", id, cam, m);
          if (train_ids.count(id)) {
            rec.split = Split::train;
          } else {
            rec.split = (m == opt.images_per_combination - 1 && opt.images_per_combination >= 2)
                            ? Split::query
                            : Split::gallery;
          }
          const std::string stem = record_stem(rec, m);
          rec.image_path = "images/" + stem + ".png";

          const auto fig = pose_figure(specs[static_cast<std::size_t>(id)], rec.pose_seed,
                                       opt.image_height, opt.image_width, opt.style);
          const std::uint64_t noise_seed =
              derive_seed(opt.seed, "bgnoise", id, cam, rec.clothes_id, m);
          const Tensor img =
              render_person(fig, specs[static_cast<std::size_t>(id)], cam, rec.clothes_id,
                            noise_seed, opt.image_height, opt.image_width, opt.style, opt.seed);
          write_png((fs::path(out_dir) / rec.image_path).string(), img);
          const Tensor hm = render_heatmap(fig, hm_h, hm_w, 4);
          write_heatmap_file((fs::path(out_dir) / "heatmaps" / (stem + ".hm")).string(), hm);
          records.push_back(std::move(rec));
        }
      }
    }
  }

  write_manifest((fs::path(out_dir) / "manifest.csv").string(), records);

  DatasetMeta meta;
  meta.seed = opt.seed;
  meta.identities = opt.n_identities;
  meta.cameras = opt.cameras;
  meta.clothes_per_identity = opt.clothes_per_identity;
  meta.images_per_combination = opt.images_per_combination;
  meta.image_height = opt.image_height;
  meta.image_width = opt.image_width;
  meta.joints = kNumJoints;
  meta.heatmap_scale = 4;
  meta.style = opt.style;
  meta.train_fraction = opt.train_fraction;
  write_meta((fs::path(out_dir) / "meta.ini").string(), meta);
}

}  // namespace pgds
