// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "t1moco/jacobi.hpp"
#include "t1moco/relaxometry.hpp"
#include "t1moco/types.hpp"
#include "t1moco/warp.hpp"

// Loss terms driving groupwise registration. The geometry: stack the N warped
// images as columns of M (HW x N), center and scale each column to unit
// sample SD, and eigendecompose the resulting correlation matrix K. Aligned
// series are low-rank, so penalizing Sum i*lambda_i (descending) pulls energy
// into the leading eigenvalues. Relaxometry, smoothness, cyclic-consistency
// and NMI terms are combined by total_loss with the gradient chained through
// the bilinear warp.

namespace t1moco {

struct CorrelationSpectrum {
  int n = 0;
  std::vector<double> matrix;        // K, n*n row-major
  std::vector<double> eigenvalues;   // descending
  std::vector<double> eigenvectors;  // n*n row-major, column k = k-th eigenvector
  std::vector<double> column_means;
  std::vector<double> column_sds;    // sample SD, 1/(HW-1)
  std::vector<int> floored_columns;  // columns whose SD hit the degeneracy floor

  double eigenvector(int i, int k) const { return eigenvectors[static_cast<size_t>(i) * n + k]; }
};

/// Correlation matrix of the pixel signal profiles and its spectrum.
/// Constant columns have their SD floored at 1e-12 of the global intensity
/// scale and are recorded in `floored_columns`.
inline CorrelationSpectrum correlation_spectrum(const std::vector<Grid> &images) {
  const int n = static_cast<int>(images.size());
  if (n < 2) throw std::invalid_argument("correlation_spectrum: need N >= 2 images");
  const int w = images[0].width, h = images[0].height;
  const long hw = static_cast<long>(w) * h;
  if (hw < 2) throw std::invalid_argument("correlation_spectrum: need at least 2 pixels");
  for (const Grid &g : images)
    if (g.width != w || g.height != h)
      throw std::invalid_argument("correlation_spectrum: image shape mismatch");

  CorrelationSpectrum spec;
  spec.n = n;
  spec.column_means.resize(n);
  spec.column_sds.resize(n);

  double scale = 0;
  for (const Grid &g : images)
    for (double v : g.data) scale = std::max(scale, std::abs(v));
  const double sd_floor = 1e-12 * std::max(scale, 1e-300);

  for (int a = 0; a < n; ++a) {
    double mean = 0;
    for (double v : images[a].data) mean += v;
    mean /= static_cast<double>(hw);
    double ss = 0;
    for (double v : images[a].data) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(hw - 1));
    if (sd <= sd_floor) {
      sd = sd_floor;
      spec.floored_columns.push_back(a);
    }
    spec.column_means[a] = mean;
    spec.column_sds[a] = sd;
  }

  spec.matrix.assign(static_cast<size_t>(n) * n, 0.0);
  for (long p = 0; p < hw; ++p)
    for (int a = 0; a < n; ++a) {
      const double za = images[a].data[p] - spec.column_means[a];
      for (int b = a; b < n; ++b)
        spec.matrix[static_cast<size_t>(a) * n + b] += za * (images[b].data[p] - spec.column_means[b]);
    }
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      const double k =
          spec.matrix[static_cast<size_t>(a) * n + b] /
          (static_cast<double>(hw - 1) * spec.column_sds[a] * spec.column_sds[b]);
      spec.matrix[static_cast<size_t>(a) * n + b] = k;
      spec.matrix[static_cast<size_t>(b) * n + a] = k;
    }

  const SymmetricEigen eig = jacobi_eigen(spec.matrix, n);
  spec.eigenvalues = eig.values;
  spec.eigenvectors = eig.vectors;
  return spec;
}

inline CorrelationSpectrum correlation_spectrum(const WarpedSeries &warped) {
  return correlation_spectrum(warped.images);
}

/// Eigenvalue-concentration loss Sum_{i=1..N} i * lambda_i, lambda descending.
/// Bounded by [N, N(N+1)/2] for any unit-diagonal correlation spectrum.
inline double pca_loss(const CorrelationSpectrum &spec) {
  double loss = 0;
  for (int i = 0; i < spec.n; ++i) loss += (i + 1) * spec.eigenvalues[i];
  return loss;
}

/// Gradient of pca_loss w.r.t. the warped intensities. Chains
/// dL/dlambda_k = k through dlambda_k/dK = u_k u_k^T and the analytic
/// derivative of the column centering + SD normalization. Columns that were
/// SD-floored get a zero gradient (the loss is insensitive to them up to the
/// degeneracy). The result has zero mean per image by construction.
inline std::vector<Grid> pca_loss_backward(const std::vector<Grid> &images,
                                           const CorrelationSpectrum &spec) {
  const int n = spec.n;
  if (static_cast<int>(images.size()) != n)
    throw std::invalid_argument("pca_loss_backward: image count mismatch");
  const int w = images[0].width, h = images[0].height;
  const long hw = static_cast<long>(w) * h;

  // G = dL/dK = Sum_k (k+1) u_k u_k^T
  std::vector<double> g(static_cast<size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double wk = k + 1;
    for (int a = 0; a < n; ++a) {
      const double ua = spec.eigenvector(a, k);
      for (int b = 0; b < n; ++b) g[static_cast<size_t>(a) * n + b] += wk * ua * spec.eigenvector(b, k);
    }
  }

  // Z columns: z_a = (I_a - mean_a) / norm_a with norm_a = sqrt(HW-1) * sd_a,
  // so K = Z^T Z. dL/dZ = 2 Z G; per column project out the radial component
  // and divide by the norm, then subtract the column mean (centering adjoint).
  std::vector<double> norms(n);
  for (int a = 0; a < n; ++a) norms[a] = std::sqrt(static_cast<double>(hw - 1)) * spec.column_sds[a];

  std::vector<double> dots(n, 0.0);  // z_a . h_a
  std::vector<double> zrow(n), hrow(n);
  std::vector<Grid> grad;
  grad.reserve(n);
  for (int a = 0; a < n; ++a) grad.emplace_back(w, h, 0.0);

  for (long p = 0; p < hw; ++p) {
    for (int a = 0; a < n; ++a) zrow[a] = (images[a].data[p] - spec.column_means[a]) / norms[a];
    for (int a = 0; a < n; ++a) {
      double s = 0;
      for (int b = 0; b < n; ++b) s += zrow[b] * g[static_cast<size_t>(b) * n + a];
      hrow[a] = 2.0 * s;
      dots[a] += zrow[a] * hrow[a];
      grad[a].data[p] = hrow[a];  // stash h; finished in the second pass
    }
  }

  std::vector<bool> floored(n, false);
  for (int a : spec.floored_columns) floored[a] = true;

  for (int a = 0; a < n; ++a) {
    if (floored[a]) {
      grad[a].fill(0.0);
      continue;
    }
    double mean = 0;
    for (long p = 0; p < hw; ++p) {
      const double za = (images[a].data[p] - spec.column_means[a]) / norms[a];
      const double dc = (grad[a].data[p] - za * dots[a]) / norms[a];
      grad[a].data[p] = dc;
      mean += dc;
    }
    mean /= static_cast<double>(hw);
    for (long p = 0; p < hw; ++p) grad[a].data[p] -= mean;
  }
  return grad;
}

namespace detail {

inline void require_maps_for_relax(const std::vector<Grid> &images,
                                   const std::vector<double> &times_ms,
                                   const ParameterMaps &maps) {
  if (images.empty() || images.size() != times_ms.size())
    throw std::invalid_argument("relax_loss: image/time count mismatch");
  if (maps.width() != images[0].width || maps.height() != images[0].height)
    throw std::invalid_argument("relax_loss: maps shape mismatch");
  if (maps.converged_fraction() == 0.0)
    throw std::invalid_argument("relax_loss: maps are unfitted (no converged pixels)");
}

}  // namespace detail

/// Normalized fitting error (1/(N H W)) Sum (S - Shat)^2 where Shat is the
/// model at the frozen fitted params with the fit's sign pattern restored.
/// Non-converged pixels contribute zero. If `grad` is non-null it receives
/// d loss / d S = (2/(N H W)) (S - Shat) per sample.
inline double relax_loss(const std::vector<Grid> &images, const std::vector<double> &times_ms,
                         const ParameterMaps &maps, std::vector<Grid> *grad = nullptr) {
  detail::require_maps_for_relax(images, times_ms, maps);
  const int n = static_cast<int>(images.size());
  const int w = images[0].width, h = images[0].height;
  const double norm = static_cast<double>(n) * w * h;

  if (grad) {
    grad->assign(n, Grid(w, h, 0.0));
  }
  double loss = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!maps.converged.at(x, y)) continue;
      const MolliParams p{maps.c.at(x, y), maps.k.at(x, y), maps.t1star_ms.at(x, y)};
      const int m = polarity_from_params(p, times_ms);
      for (int i = 0; i < n; ++i) {
        const double model = p.c * (1.0 - p.k * std::exp(-times_ms[i] / p.t1star_ms));
        const double shat = (i < m ? -model : model);
        const double r = images[i].at(x, y) - shat;
        loss += r * r;
        if (grad) (*grad)[i].at(x, y) = 2.0 * r / norm;
      }
    }
  return loss / norm;
}

inline double relax_loss(const WarpedSeries &warped, const ParameterMaps &maps,
                         std::vector<Grid> *grad = nullptr) {
  if (!warped.source) throw std::invalid_argument("relax_loss: warped series lacks provenance");
  return relax_loss(warped.images, warped.source->inversion_times_ms, maps, grad);
}

/// Mean squared forward-difference energy of the fields, replicate boundary
/// (the last row/column difference is zero). Both displacement components and
/// both spatial directions are summed. Optional exact gradient.
inline double smoothness_loss(const DeformationSet &defs, DeformationSet *grad = nullptr) {
  if (defs.fields.empty()) throw std::invalid_argument("smoothness_loss: empty defs");
  const int n = defs.count(), w = defs.width(), h = defs.height();
  const double norm = static_cast<double>(n) * w * h;
  if (grad) {
    grad->fields.assign(n, VecField(w, h));
  }
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    for (const int comp : {0, 1}) {
      const Grid &f = comp == 0 ? defs.fields[i].dx : defs.fields[i].dy;
      Grid *gf = grad ? (comp == 0 ? &grad->fields[i].dx : &grad->fields[i].dy) : nullptr;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (x + 1 < w) {
            const double d = f.at(x + 1, y) - f.at(x, y);
            loss += d * d;
            if (gf) {
              gf->at(x, y) -= 2.0 * d / norm;
              gf->at(x + 1, y) += 2.0 * d / norm;
            }
          }
          if (y + 1 < h) {
            const double d = f.at(x, y + 1) - f.at(x, y);
            loss += d * d;
            if (gf) {
              gf->at(x, y) -= 2.0 * d / norm;
              gf->at(x, y + 1) += 2.0 * d / norm;
            }
          }
        }
    }
  }
  return loss / norm;
}

/// Root-mean-square of the per-pixel group displacement sum:
/// sqrt((1/(N H W)) Sum_xy |Sum_i phi_i(x,y)|^2). Zero exactly when the
/// fields cancel pixelwise; the gradient at that point is taken as zero.
inline double cyclic_loss(const DeformationSet &defs, DeformationSet *grad = nullptr) {
  if (defs.fields.empty()) throw std::invalid_argument("cyclic_loss: empty defs");
  const int n = defs.count(), w = defs.width(), h = defs.height();
  const double norm = static_cast<double>(n) * w * h;

  Grid sum_dx(w, h, 0.0), sum_dy(w, h, 0.0);
  for (int i = 0; i < n; ++i)
    for (long p = 0; p < static_cast<long>(w) * h; ++p) {
      sum_dx.data[p] += defs.fields[i].dx.data[p];
      sum_dy.data[p] += defs.fields[i].dy.data[p];
    }
  double ss = 0;
  for (long p = 0; p < static_cast<long>(w) * h; ++p)
    ss += sum_dx.data[p] * sum_dx.data[p] + sum_dy.data[p] * sum_dy.data[p];
  const double loss = std::sqrt(ss / norm);

  if (grad) {
    grad->fields.assign(n, VecField(w, h));
    if (loss > 0) {
      const double c = 1.0 / (loss * norm);
      for (int i = 0; i < n; ++i)
        for (long p = 0; p < static_cast<long>(w) * h; ++p) {
          grad->fields[i].dx.data[p] = c * sum_dx.data[p];
          grad->fields[i].dy.data[p] = c * sum_dy.data[p];
        }
    }
  }
  return loss;
}

struct NmiConfig {
  int bins = 32;
};

namespace detail {

struct BinWeights {
  int lo = 0;      // lower bin
  double f = 0;    // weight of bin lo+1; bin lo gets 1-f
};

// Linear-kernel bin assignment of a normalized intensity in [0, 1].
inline BinWeights soft_bin(double u, int bins) {
  double t = u * (bins - 1);
  t = std::clamp(t, 0.0, static_cast<double>(bins - 1));
  int lo = static_cast<int>(t);
  if (lo > bins - 2) lo = bins - 2;
  return {lo, t - lo};
}

constexpr double kEntropyFloor = 1e-12;
constexpr double kProbFloor = 1e-12;

// NMI of one image against a template, with gradients w.r.t. the image
// intensities and (optionally) the template intensities. The min-max
// normalization is part of the function, so the gradients carry extra terms
// at the argmin/argmax pixels.
inline double nmi_pair(const Grid &img, const Grid &tmpl, int bins, Grid *grad,
                       Grid *grad_tmpl = nullptr) {
  const int w = img.width, h = img.height;
  if (!tmpl.same_shape(img)) throw std::invalid_argument("nmi: shape mismatch");
  if (bins < 2) throw std::invalid_argument("nmi: need at least 2 bins");
  const long hw = static_cast<long>(w) * h;

  long amin = 0, amax = 0, bmin = 0, bmax = 0;
  for (long p = 1; p < hw; ++p) {
    if (img.data[p] < img.data[amin]) amin = p;
    if (img.data[p] > img.data[amax]) amax = p;
    if (tmpl.data[p] < tmpl.data[bmin]) bmin = p;
    if (tmpl.data[p] > tmpl.data[bmax]) bmax = p;
  }
  const double ra = img.data[amax] - img.data[amin];
  const double rb = tmpl.data[bmax] - tmpl.data[bmin];
  const bool flat_a = !(ra > 0), flat_b = !(rb > 0);

  std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
  std::vector<double> pj(static_cast<size_t>(bins) * bins, 0.0);
  std::vector<BinWeights> wa(hw), wb(hw);
  for (long p = 0; p < hw; ++p) {
    const double u = flat_a ? 0.5 : (img.data[p] - img.data[amin]) / ra;
    const double v = flat_b ? 0.5 : (tmpl.data[p] - tmpl.data[bmin]) / rb;
    wa[p] = soft_bin(u, bins);
    wb[p] = soft_bin(v, bins);
    const double a0 = 1.0 - wa[p].f, a1 = wa[p].f;
    const double b0 = 1.0 - wb[p].f, b1 = wb[p].f;
    pa[wa[p].lo] += a0;
    pa[wa[p].lo + 1] += a1;
    pb[wb[p].lo] += b0;
    pb[wb[p].lo + 1] += b1;
    double *row0 = &pj[static_cast<size_t>(wa[p].lo) * bins];
    double *row1 = row0 + bins;
    row0[wb[p].lo] += a0 * b0;
    row0[wb[p].lo + 1] += a0 * b1;
    row1[wb[p].lo] += a1 * b0;
    row1[wb[p].lo + 1] += a1 * b1;
  }
  const double inv_hw = 1.0 / static_cast<double>(hw);
  auto entropy = [&](const std::vector<double> &hist) {
    double e = 0;
    for (double v : hist) {
      const double q = v * inv_hw;
      if (q > 0) e -= q * std::log(q);
    }
    return e;
  };
  const double ha = std::max(entropy(pa), kEntropyFloor);
  const double hb = std::max(entropy(pb), kEntropyFloor);
  const double hab = std::max(entropy(pj), kEntropyFloor);
  const double nmi = (ha + hb) / hab;

  auto logp = [&](double count) { return std::log(std::max(count * inv_hw, kProbFloor)); };
  const double scale = (bins - 1) * inv_hw;

  if (grad) {
    *grad = Grid(w, h, 0.0);
    if (!flat_a) {
      // dNMI/du_p = dHA/du_p / HAB - NMI * dHAB/du_p / HAB, with
      // dH/dcount_i = -(1/HW)(log P_i + 1) and dweights/du = (B-1)*(-1, +1).
      double t_sum = 0, tu_sum = 0;
      std::vector<double> g(hw);
      for (long p = 0; p < hw; ++p) {
        const int al = wa[p].lo;
        const double dha = -scale * (logp(pa[al + 1]) - logp(pa[al]));
        const double *row0 = &pj[static_cast<size_t>(al) * bins];
        const double *row1 = row0 + bins;
        const int bl = wb[p].lo;
        const double b0 = 1.0 - wb[p].f, b1 = wb[p].f;
        const double dhab = -scale * (b0 * (logp(row1[bl]) - logp(row0[bl])) +
                                      b1 * (logp(row1[bl + 1]) - logp(row0[bl + 1])));
        g[p] = dha / hab - nmi * dhab / hab;
        const double u = (img.data[p] - img.data[amin]) / ra;
        t_sum += g[p];
        tu_sum += g[p] * u;
      }
      // chain through u_q = (a_q - a_min) / (a_max - a_min)
      for (long p = 0; p < hw; ++p) grad->data[p] = g[p] / ra;
      grad->data[amin] += (-t_sum + tu_sum) / ra;
      grad->data[amax] += -tu_sum / ra;
    }
  }

  if (grad_tmpl) {
    *grad_tmpl = Grid(w, h, 0.0);
    if (!flat_b) {
      // mirror of the image-side derivation with the roles swapped: moving
      // v_p shifts marginal mass in pb and joint mass along the B axis
      double t_sum = 0, tv_sum = 0;
      std::vector<double> g(hw);
      for (long p = 0; p < hw; ++p) {
        const int bl = wb[p].lo;
        const double dhb = -scale * (logp(pb[bl + 1]) - logp(pb[bl]));
        const int al = wa[p].lo;
        const double a0 = 1.0 - wa[p].f, a1 = wa[p].f;
        const double *row0 = &pj[static_cast<size_t>(al) * bins];
        const double *row1 = row0 + bins;
        const double dhab = -scale * (a0 * (logp(row0[bl + 1]) - logp(row0[bl])) +
                                      a1 * (logp(row1[bl + 1]) - logp(row1[bl])));
        g[p] = dhb / hab - nmi * dhab / hab;
        const double v = (tmpl.data[p] - tmpl.data[bmin]) / rb;
        t_sum += g[p];
        tv_sum += g[p] * v;
      }
      for (long p = 0; p < hw; ++p) grad_tmpl->data[p] = g[p] / rb;
      grad_tmpl->data[bmin] += (-t_sum + tv_sum) / rb;
      grad_tmpl->data[bmax] += -tv_sum / rb;
    }
  }
  return nmi;
}

}  // namespace detail

/// Negative mean NMI of the warped images against a template. Higher mutual
/// information means better alignment, so the loss lives in [-2, -1] up to
/// binning effects. If `grad` is non-null it receives d loss / d image; if
/// `grad_tmpl` is non-null it receives d loss / d template, for callers whose
/// template itself depends on the optimized fields.
inline double nmi_loss(const std::vector<Grid> &images, const Grid &tmpl, const NmiConfig &cfg = {},
                       std::vector<Grid> *grad = nullptr, Grid *grad_tmpl = nullptr) {
  if (images.empty()) throw std::invalid_argument("nmi_loss: no images");
  const int n = static_cast<int>(images.size());
  if (grad) grad->assign(n, Grid(tmpl.width, tmpl.height, 0.0));
  if (grad_tmpl) *grad_tmpl = Grid(tmpl.width, tmpl.height, 0.0);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    Grid g, gt;
    const double nmi = detail::nmi_pair(images[i], tmpl, cfg.bins, grad ? &g : nullptr,
                                        grad_tmpl ? &gt : nullptr);
    acc += nmi;
    if (grad) {
      for (long p = 0; p < static_cast<long>(g.data.size()); ++p)
        (*grad)[i].data[p] = -g.data[p] / n;
    }
    if (grad_tmpl) {
      for (long p = 0; p < static_cast<long>(gt.data.size()); ++p)
        grad_tmpl->data[p] -= gt.data[p] / n;
    }
  }
  return -acc / n;
}

inline double nmi_loss(const WarpedSeries &warped, const Grid &tmpl, const NmiConfig &cfg = {},
                       std::vector<Grid> *grad = nullptr, Grid *grad_tmpl = nullptr) {
  return nmi_loss(warped.images, tmpl, cfg, grad, grad_tmpl);
}

struct TotalLoss {
  double total = 0;
  // raw (unweighted) term values; terms with zero weight are left at 0
  double pca = 0;
  double reg = 0;
  double cyclic = 0;
  double relax = 0;
  double nmi = 0;
  DeformationSet grad;  // d total / d defs
};

/// Weighted total loss with the full analytic gradient w.r.t. the
/// displacement fields. Intensity-space gradients (PCA, relax, NMI) are
/// pulled back through the bilinear warp of the source images; smoothness
/// and cyclic terms contribute directly in field space. Fitted maps are
/// treated as constants. When `nmi_mean_template` is set, the template is
/// understood to be the pixelwise mean of the warped images, and the NMI
/// gradient includes the template path (dT/dW_j = 1/N per pixel).
inline TotalLoss total_loss(const WarpedSeries &warped, const DeformationSet &defs,
                            const ParameterMaps *maps, const LossWeights &weights,
                            const Grid *nmi_template = nullptr, const NmiConfig &nmi_cfg = {},
                            int jobs = 1, bool nmi_mean_template = false) {
  weights.validate();
  if (weights.pca == 0 && weights.reg == 0 && weights.cyclic == 0 && weights.relax == 0 &&
      weights.nmi == 0)
    throw std::invalid_argument("total_loss: all weights are zero");
  if (!warped.source) throw std::invalid_argument("total_loss: warped series lacks provenance");
  if (!defs.matches(*warped.source)) throw std::invalid_argument("total_loss: defs shape mismatch");
  if (weights.relax > 0 && !maps) throw std::invalid_argument("total_loss: relax weight needs maps");
  if (weights.nmi > 0 && !nmi_template)
    throw std::invalid_argument("total_loss: nmi weight needs a template");

  const ImageSeries &src = *warped.source;
  const int n = src.count(), w = src.width, h = src.height;

  TotalLoss out;
  out.grad.fields.assign(n, VecField(w, h));

  // intensity-space accumulation
  std::vector<Grid> dimg(n, Grid(w, h, 0.0));
  bool have_dimg = false;

  if (weights.pca > 0) {
    const CorrelationSpectrum spec = correlation_spectrum(warped.images);
    out.pca = pca_loss(spec);
    const std::vector<Grid> g = pca_loss_backward(warped.images, spec);
    for (int i = 0; i < n; ++i)
      for (long p = 0; p < static_cast<long>(w) * h; ++p)
        dimg[i].data[p] += weights.pca * g[i].data[p];
    have_dimg = true;
  }
  if (weights.relax > 0) {
    std::vector<Grid> g;
    out.relax = relax_loss(warped.images, src.inversion_times_ms, *maps, &g);
    for (int i = 0; i < n; ++i)
      for (long p = 0; p < static_cast<long>(w) * h; ++p)
        dimg[i].data[p] += weights.relax * g[i].data[p];
    have_dimg = true;
  }
  if (weights.nmi > 0) {
    std::vector<Grid> g;
    Grid gt;
    out.nmi = nmi_loss(warped.images, *nmi_template, nmi_cfg, &g,
                       nmi_mean_template ? &gt : nullptr);
    for (int i = 0; i < n; ++i)
      for (long p = 0; p < static_cast<long>(w) * h; ++p)
        dimg[i].data[p] += weights.nmi * g[i].data[p];
    if (nmi_mean_template) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int i = 0; i < n; ++i)
        for (long p = 0; p < static_cast<long>(w) * h; ++p)
          dimg[i].data[p] += weights.nmi * inv_n * gt.data[p];
    }
    have_dimg = true;
  }

  if (have_dimg) {
    parallel_chunks(0, n, jobs, [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        const VecField g = warp_backward(src.images[i], defs.fields[i], dimg[i]);
        for (long p = 0; p < static_cast<long>(w) * h; ++p) {
          out.grad.fields[i].dx.data[p] += g.dx.data[p];
          out.grad.fields[i].dy.data[p] += g.dy.data[p];
        }
      }
    });
  }

  if (weights.reg > 0) {
    DeformationSet g;
    out.reg = smoothness_loss(defs, &g);
    for (int i = 0; i < n; ++i)
      for (long p = 0; p < static_cast<long>(w) * h; ++p) {
        out.grad.fields[i].dx.data[p] += weights.reg * g.fields[i].dx.data[p];
        out.grad.fields[i].dy.data[p] += weights.reg * g.fields[i].dy.data[p];
      }
  }
  if (weights.cyclic > 0) {
    DeformationSet g;
    out.cyclic = cyclic_loss(defs, &g);
    for (int i = 0; i < n; ++i)
      for (long p = 0; p < static_cast<long>(w) * h; ++p) {
        out.grad.fields[i].dx.data[p] += weights.cyclic * g.fields[i].dx.data[p];
        out.grad.fields[i].dy.data[p] += weights.cyclic * g.fields[i].dy.data[p];
      }
  }

  out.total = weights.pca * out.pca + weights.reg * out.reg + weights.cyclic * out.cyclic +
              weights.relax * out.relax + weights.nmi * out.nmi;
  return out;
}

}  // namespace t1moco
