#include "scanfeat/featnet/loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace scanfeat::featnet {

namespace {

constexpr double kTiny = 1e-12;

bool masked_valid(const std::vector<std::uint8_t>& mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

struct BilinearTap {
  std::size_t index;
  double weight;
};

// bilinear taps at a real-valued (u, v); columns wrap when circular
int bilinear_taps(const DenseFeatureMap& map, double u, double v,
                  bool circular, BilinearTap taps[4]) {
  const int w = map.width;
  const int h = map.height;
  if (v < 0.0 || v > h - 1) return 0;
  double uu = u;
  if (circular) {
    uu = std::fmod(uu, static_cast<double>(w));
    if (uu < 0.0) uu += w;
  } else if (uu < 0.0 || uu > w - 1) {
    return 0;
  }
  const int c0 = std::min(static_cast<int>(std::floor(uu)), w - 1);
  const int c1 = circular ? (c0 + 1) % w : std::min(c0 + 1, w - 1);
  const int r0 = std::min(static_cast<int>(std::floor(v)), h - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  const double fu = uu - std::floor(uu);
  const double fv = v - r0;
  int n = 0;
  const auto push = [&](int r, int c, double wt) {
    if (wt == 0.0) return;
    taps[n++] = {static_cast<std::size_t>(r) * w + c, wt};
  };
  push(r0, c0, (1 - fv) * (1 - fu));
  push(r0, c1, (1 - fv) * fu);
  push(r1, c0, fv * (1 - fu));
  push(r1, c1, fv * fu);
  return n;
}

double column_distance(double a, double b, int width, bool circular) {
  double d = std::abs(a - b);
  if (circular) d = std::min(d, width - d);
  return d;
}

}  // namespace

LossBreakdown loss(const DenseFeatureMap& map_a, const DenseFeatureMap& map_b,
                   const FlowMap& flow,
                   const std::vector<std::uint8_t>& mask_a,
                   const std::vector<std::uint8_t>& mask_b,
                   const LossConfig& config, MapGradients* grad_a,
                   MapGradients* grad_b) {
  if (map_a.height != flow.height || map_a.width != flow.width) {
    throw ShapeMismatch("flow dimensions disagree with the first map");
  }
  if (map_a.dim != map_b.dim) {
    throw ShapeMismatch("descriptor dimensions disagree");
  }
  LossBreakdown out;
  out.valid_correspondences = 0;
  const std::size_t na = map_a.repeatability.plane();
  std::vector<std::uint8_t> usable(na, 0);
  for (std::size_t i = 0; i < na; ++i) {
    usable[i] = flow.valid[i] && masked_valid(mask_a, i);
    out.valid_correspondences += usable[i];
  }
  if (out.valid_correspondences == 0) {
    throw NoValidCorrespondences("flow carries no valid correspondences");
  }
  if (grad_a) *grad_a = MapGradients::zeros_like(map_a);
  if (grad_b) *grad_b = MapGradients::zeros_like(map_b);

  const int N = config.patch_size;
  const int ha = map_a.height, wa = map_a.width;
  const std::size_t nb = map_b.repeatability.plane();

  // ---- repeatability: patch cosine between rep_a and the warped rep_b ----
  {
    // first pass counts usable patches so gradients can be scaled in-place
    struct PatchRef {
      std::vector<std::size_t> pix;  // indices into map_a planes
    };
    std::vector<PatchRef> patches;
    for (int r0 = 0; r0 < ha; r0 += N) {
      for (int c0 = 0; c0 < wa; c0 += N) {
        PatchRef patch;
        for (int r = r0; r < std::min(r0 + N, ha); ++r) {
          for (int c = c0; c < std::min(c0 + N, wa); ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * wa + c;
            if (usable[i]) patch.pix.push_back(i);
          }
        }
        if (patch.pix.size() >= 2) patches.push_back(std::move(patch));
      }
    }
    if (!patches.empty()) {
      double acc = 0.0;
      std::size_t used = 0;
      // warped values and taps are shared between value and gradient passes
      std::vector<double> warped(na, 0.0);
      std::vector<std::array<BilinearTap, 4>> taps(na);
      std::vector<int> tap_count(na, 0);
      for (std::size_t i = 0; i < na; ++i) {
        if (!usable[i]) continue;
        tap_count[i] =
            bilinear_taps(map_b, flow.target_u[i], flow.target_v[i],
                          config.circular_columns, taps[i].data());
        double v = 0.0;
        for (int t = 0; t < tap_count[i]; ++t) {
          v += taps[i][t].weight * map_b.repeatability.data[taps[i][t].index];
        }
        warped[i] = v;
      }
      struct PatchGrad {
        double nx, ny, cos;
        bool used;
      };
      std::vector<PatchGrad> pgrads(patches.size());
      for (std::size_t pi = 0; pi < patches.size(); ++pi) {
        double sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i : patches[pi].pix) {
          const double x = map_a.repeatability.data[i];
          const double y = warped[i];
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
        const double nx = std::sqrt(sxx);
        const double ny = std::sqrt(syy);
        PatchGrad& pg = pgrads[pi];
        pg.used = nx > kTiny && ny > kTiny;
        if (!pg.used) continue;
        pg.nx = nx;
        pg.ny = ny;
        pg.cos = sxy / (nx * ny);
        acc += 1.0 - pg.cos;
        ++used;
      }
      if (used > 0) {
        out.repeatability = acc / static_cast<double>(used);
        if (grad_a || grad_b) {
          const double scale =
              config.weight_repeatability / static_cast<double>(used);
          for (std::size_t pi = 0; pi < patches.size(); ++pi) {
            const PatchGrad& pg = pgrads[pi];
            if (!pg.used) continue;
            for (std::size_t i : patches[pi].pix) {
              const double x = map_a.repeatability.data[i];
              const double y = warped[i];
              // d(1-cos)/dx and /dy
              const double dx =
                  -(y / (pg.nx * pg.ny) - pg.cos * x / (pg.nx * pg.nx));
              const double dy =
                  -(x / (pg.nx * pg.ny) - pg.cos * y / (pg.ny * pg.ny));
              if (grad_a) {
                grad_a->d_repeatability.data[i] += scale * dx;
              }
              if (grad_b) {
                for (int t = 0; t < tap_count[i]; ++t) {
                  grad_b->d_repeatability.data[taps[i][t].index] +=
                      scale * dy * taps[i][t].weight;
                }
              }
            }
          }
        }
      }
    }
  }

  // ---- peakiness: 1 - mean over patches of (max - mean), both maps ----
  {
    const auto side = [&](const DenseFeatureMap& map,
                          const std::vector<std::uint8_t>& mask,
                          MapGradients* grad) {
      const int h = map.height, w = map.width;
      double acc = 0.0;
      std::size_t used = 0;
      struct Rec {
        std::size_t argmax;
        std::vector<std::size_t> pix;
      };
      std::vector<Rec> recs;
      for (int r0 = 0; r0 < h; r0 += N) {
        for (int c0 = 0; c0 < w; c0 += N) {
          Rec rec;
          double best = -1.0;
          double sum = 0.0;
          for (int r = r0; r < std::min(r0 + N, h); ++r) {
            for (int c = c0; c < std::min(c0 + N, w); ++c) {
              const std::size_t i = static_cast<std::size_t>(r) * w + c;
              if (!masked_valid(mask, i)) continue;
              const double v = map.repeatability.data[i];
              rec.pix.push_back(i);
              sum += v;
              if (v > best) {
                best = v;
                rec.argmax = i;
              }
            }
          }
          if (rec.pix.empty()) continue;
          acc += best - sum / static_cast<double>(rec.pix.size());
          ++used;
          recs.push_back(std::move(rec));
        }
      }
      if (used == 0) return 1.0;
      const double value = 1.0 - acc / static_cast<double>(used);
      if (grad) {
        // d(value)/dv = -(1[argmax] - 1/cnt) / used, halved across sides
        const double scale = -0.5 * config.weight_peakiness /
                             static_cast<double>(used);
        for (const Rec& rec : recs) {
          const double inv = 1.0 / static_cast<double>(rec.pix.size());
          for (std::size_t i : rec.pix) {
            grad->d_repeatability.data[i] += scale * (-inv);
          }
          grad->d_repeatability.data[rec.argmax] += scale;
        }
      }
      return value;
    };
    const double pa = side(map_a, mask_a, grad_a);
    const double pb = side(map_b, mask_b, grad_b);
    out.peakiness = 0.5 * (pa + pb);
  }

  // ---- reliability: gated differentiable average precision ----
  {
    const int M = config.ap_bins;
    const double delta = 2.0 / (M - 1);
    const std::size_t dim = static_cast<std::size_t>(map_a.dim);
    double acc = 0.0;
    std::size_t queries = 0;
    std::vector<int> cand;
    std::vector<double> sims, labels, h(M), hp(M), dap_dh(M), dap_dhp(M);
    for (int r = 0; r < ha; r += config.query_stride) {
      for (int c = 0; c < wa; c += config.query_stride) {
        const std::size_t q = static_cast<std::size_t>(r) * wa + c;
        if (!usable[q]) continue;
        const double tu = flow.target_u[q];
        const double tv = flow.target_v[q];
        const int rb = std::clamp(static_cast<int>(std::floor(tv + 0.5)), 0,
                                  map_b.height - 1);
        cand.clear();
        for (int cb = 0; cb < map_b.width; ++cb) {
          const std::size_t ib = static_cast<std::size_t>(rb) * map_b.width + cb;
          if (!masked_valid(mask_b, ib)) continue;
          if (config.candidate_window > 0 &&
              column_distance(cb, tu, map_b.width, config.circular_columns) >
                  config.candidate_window) {
            continue;
          }
          cand.push_back(cb);
        }
        if (cand.size() < 2) continue;
        sims.resize(cand.size());
        labels.resize(cand.size());
        double npos = 0.0;
        for (std::size_t k = 0; k < cand.size(); ++k) {
          const std::size_t ib =
              static_cast<std::size_t>(rb) * map_b.width + cand[k];
          double s = 0.0;
          for (std::size_t d = 0; d < dim; ++d) {
            s += map_a.descriptors.data[d * na + q] *
                 map_b.descriptors.data[d * nb + ib];
          }
          sims[k] = s;
          labels[k] = column_distance(cand[k], tu, map_b.width,
                                      config.circular_columns) <=
                              config.positive_radius
                          ? 1.0
                          : 0.0;
          npos += labels[k];
        }
        if (npos == 0.0) continue;

        // soft histogram over similarity, bins ordered from +1 down to -1
        std::fill(h.begin(), h.end(), 0.0);
        std::fill(hp.begin(), hp.end(), 0.0);
        for (std::size_t k = 0; k < cand.size(); ++k) {
          for (int m = 0; m < M; ++m) {
            const double z = 1.0 - 2.0 * m / (M - 1);
            const double d = std::abs(sims[k] - z);
            if (d >= delta) continue;
            const double wgt = 1.0 - d / delta;
            h[m] += wgt;
            hp[m] += labels[k] * wgt;
          }
        }
        double H = 0.0, Hp = 0.0, ap = 0.0;
        std::vector<double> Hc(M), Hpc(M);
        for (int m = 0; m < M; ++m) {
          H += h[m];
          Hp += hp[m];
          Hc[m] = H;
          Hpc[m] = Hp;
          if (H > kTiny) ap += Hp / H * hp[m];
        }
        ap /= npos;

        const double rel = map_a.reliability.data[q];
        acc += 1.0 - (ap * rel + config.ap_kappa * (1.0 - rel));
        ++queries;

        if (grad_a || grad_b) {
          // suffix sums: dAP/dhp_m = (sum_{j>=m} hp_j/H_j + Hp_m/H_m)/Np,
          // dAP/dh_m = -(sum_{j>=m} Hp_j hp_j/H_j^2)/Np; empty bins only
          // matter where no candidate carries weight, so the guards are safe
          double s1 = 0.0, s2 = 0.0;
          for (int m = M - 1; m >= 0; --m) {
            if (Hc[m] > kTiny) {
              s1 += hp[m] / Hc[m];
              s2 += Hpc[m] * hp[m] / (Hc[m] * Hc[m]);
            }
            dap_dhp[m] =
                (s1 + (Hc[m] > kTiny ? Hpc[m] / Hc[m] : 0.0)) / npos;
            dap_dh[m] = -s2 / npos;
          }
          if (grad_a) {
            grad_a->d_reliability.data[q] += -(ap - config.ap_kappa);
          }
          const double dL_dap = -rel;
          for (std::size_t k = 0; k < cand.size(); ++k) {
            double ds = 0.0;
            for (int m = 0; m < M; ++m) {
              const double z = 1.0 - 2.0 * m / (M - 1);
              const double diff = sims[k] - z;
              const double d = std::abs(diff);
              if (d >= delta || d == 0.0) continue;
              const double dw = -(diff > 0 ? 1.0 : -1.0) / delta;
              ds += (dap_dh[m] + labels[k] * dap_dhp[m]) * dw;
            }
            const double dsim = dL_dap * ds;
            if (dsim == 0.0) continue;
            const std::size_t ib =
                static_cast<std::size_t>(rb) * map_b.width + cand[k];
            for (std::size_t d = 0; d < dim; ++d) {
              if (grad_a) {
                grad_a->d_descriptors.data[d * na + q] +=
                    dsim * map_b.descriptors.data[d * nb + ib];
              }
              if (grad_b) {
                grad_b->d_descriptors.data[d * nb + ib] +=
                    dsim * map_a.descriptors.data[d * na + q];
              }
            }
          }
        }
      }
    }
    out.reliability_queries = queries;
    if (queries > 0) {
      out.reliability = acc / static_cast<double>(queries);
      if (grad_a || grad_b) {
        const double scale =
            config.weight_reliability / static_cast<double>(queries);
        // gradients above were accumulated unscaled per query
        // (reliability gate and descriptor terms); rescale in place
        if (grad_a) {
          for (double& v : grad_a->d_reliability.data) v *= scale;
          for (double& v : grad_a->d_descriptors.data) v *= scale;
        }
        if (grad_b) {
          for (double& v : grad_b->d_descriptors.data) v *= scale;
        }
      }
    }
  }

  out.total = config.weight_repeatability * out.repeatability +
              config.weight_peakiness * out.peakiness +
              config.weight_reliability * out.reliability;
  return out;
}

}  // namespace scanfeat::featnet
