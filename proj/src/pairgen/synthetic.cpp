#include "scanfeat/pairgen/synthetic.hpp"

#include <cmath>

namespace scanfeat::pairgen {

namespace {

double wrap_real(double x, int width) {
  double y = std::fmod(x, static_cast<double>(width));
  if (y < 0.0) y += width;
  return y;
}

int wrap_int(long long c, int width) {
  long long y = c % width;
  if (y < 0) y += width;
  return static_cast<int>(y);
}

double tilt_offset(double tilt, int width, double u) {
  // linear vertical shear: -tilt at the left edge, +tilt at the right
  if (width <= 1) return 0.0;
  return tilt * (2.0 * u / (width - 1) - 1.0);
}

struct Sampled {
  double range = 0.0;
  double intensity = 0.0;
  bool ok = false;
};

// bilinear over the valid neighborhood; invalid neighbors are dropped from
// the weight sum so sentinel values never bleed into real ranges
Sampled sample_bilinear(const ScanImage& img, double u, double v) {
  Sampled s;
  if (v < 0.0 || v > img.height - 1) return s;
  const double uw = wrap_real(u, img.width);
  const int c0 = static_cast<int>(std::floor(uw));
  const int c1 = (c0 + 1) % img.width;
  const int r0 = static_cast<int>(std::floor(v));
  const int r1 = std::min(r0 + 1, img.height - 1);
  const double fu = uw - c0;
  const double fv = v - r0;
  const int cols[2] = {c0, c1};
  const int rows[2] = {r0, r1};
  const double wu[2] = {1.0 - fu, fu};
  const double wv[2] = {1.0 - fv, fv};
  double wsum = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double w = wv[i] * wu[j];
      if (w == 0.0 || !img.is_valid(rows[i], cols[j])) continue;
      const std::size_t at = img.idx(rows[i], cols[j]);
      s.range += w * img.range[at];
      s.intensity += w * img.intensity[at];
      wsum += w;
    }
  }
  if (wsum <= 0.0) return s;
  s.range /= wsum;
  s.intensity /= wsum;
  s.ok = true;
  return s;
}

}  // namespace

SyntheticTransformParams sample_params(const SyntheticParamRanges& ranges,
                                       Rng& rng) {
  SyntheticTransformParams p;
  p.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
  p.u_shift = ranges.max_u_shift == 0
                  ? 0
                  : static_cast<int>(rng.index(2 * ranges.max_u_shift + 1)) -
                        ranges.max_u_shift;
  p.v_shift = ranges.max_v_shift == 0
                  ? 0
                  : static_cast<int>(rng.index(2 * ranges.max_v_shift + 1)) -
                        ranges.max_v_shift;
  p.tilt = ranges.max_tilt == 0.0 ? 0.0
                                  : rng.uniform(-ranges.max_tilt,
                                                ranges.max_tilt);
  return p;
}

namespace {

bool forward_map(const SyntheticTransformParams& params, int width, double u,
                 double v, double* out_u, double* out_v) {
  const double u1 = params.scale * u;
  const double v1 = params.scale * v;
  // with s > 1 the column map is not injective modulo W; sources scaled past
  // the panorama edge carry no consistent target
  if (u1 > width - 1 + 1e-12) return false;
  const double u2 = wrap_real(u1 + params.u_shift, width);
  const double v2 = v1 + params.v_shift;
  const double v3 = v2 + tilt_offset(params.tilt, width, u2);
  *out_u = u2;
  *out_v = v3;
  return true;
}

}  // namespace

SyntheticPair synth_pair(const ScanImage& image,
                         const SyntheticTransformParams& params) {
  if (params.scale < 1.0) throw Error("synthetic scale must be >= 1");
  const int h = image.height;
  const int w = image.width;
  SyntheticPair out;
  out.image = ScanImage(h, w);
  out.flow = FlowMap(h, w);

  // resample the warped image through the inverse map
  for (int vo = 0; vo < h; ++vo) {
    for (int uo = 0; uo < w; ++uo) {
      const double vb = vo - tilt_offset(params.tilt, w, uo);
      const double ua = wrap_real(uo - params.u_shift, w);
      const double va = vb - params.v_shift;
      const Sampled s = sample_bilinear(image, ua / params.scale,
                                        va / params.scale);
      if (!s.ok) continue;
      const std::size_t at = out.image.idx(vo, uo);
      out.image.range[at] = s.range / params.scale;
      out.image.intensity[at] = s.intensity;
      out.image.valid[at] = 1;
    }
  }

  // exact composed pixel map for every valid source pixel
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!image.is_valid(v, u)) continue;
      double tu, tv;
      if (!forward_map(params, w, u, v, &tu, &tv)) continue;
      const int trow = static_cast<int>(std::floor(tv + 0.5));
      if (trow < 0 || trow >= h) continue;
      const int tcol = wrap_int(static_cast<long long>(std::floor(tu + 0.5)), w);
      if (!out.image.is_valid(trow, tcol)) continue;
      const std::size_t at = out.flow.idx(v, u);
      out.flow.target_u[at] = tu;
      out.flow.target_v[at] = tv;
      out.flow.valid[at] = 1;
    }
  }
  return out;
}

}  // namespace scanfeat::pairgen
