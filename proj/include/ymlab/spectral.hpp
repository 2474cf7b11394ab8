#pragma once

/// Low end of the spectrum of the stability operator L in the G-weighted
/// space, deflation of the eigenfields J and i_{e_k} F, the F-stability
/// verdict and the optimal center perturbation (q, V) of a direction.
///
/// Eigenvalues follow L theta = -lambda theta, so J sits at -1 and i_V F at
/// -1/2 on a soliton.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ymlab/variations.hpp"

namespace ymlab {

/// Coordinates y = sqrt(2 W) * theta_j[a][b] (a < b) in which the G-weighted
/// pairing of one-forms is the Euclidean dot product and -L is a symmetric
/// matrix. Points whose weight underflows to zero carry no degrees of freedom.
class WeightedCoordinates {
 public:
  WeightedCoordinates(const Grid& g, int r, const WeightedQuadrature& q) : grid_(g), r_(r) {
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b) pairs_.push_back({a, b});
    scale_.resize(g.points());
    for (std::size_t p = 0; p < g.points(); ++p) scale_[p] = std::sqrt(2.0 * q.weights[p]);
  }

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(grid_.points() * grid_.n() * pairs_.size());
  }

  Eigen::VectorXd pack(const OneForm& theta) const {
    Eigen::VectorXd y(size());
    const int n = grid_.n();
    const std::size_t np = pairs_.size();
    for (std::size_t p = 0; p < grid_.points(); ++p)
      for (int j = 0; j < n; ++j) {
        const double* blk = theta.at(p, j);
        for (std::size_t k = 0; k < np; ++k)
          y[static_cast<Eigen::Index>((p * n + j) * np + k)] = scale_[p] * blk[pairs_[k].first * r_ + pairs_[k].second];
      }
    return y;
  }

  OneForm unpack(const Eigen::Ref<const Eigen::VectorXd>& y) const {
    OneForm theta(grid_, r_);
    const int n = grid_.n();
    const std::size_t np = pairs_.size();
    for (std::size_t p = 0; p < grid_.points(); ++p) {
      if (scale_[p] == 0.0) continue;
      const double inv = 1.0 / scale_[p];
      for (int j = 0; j < n; ++j) {
        double* blk = theta.at(p, j);
        for (std::size_t k = 0; k < np; ++k) {
          const double v = inv * y[static_cast<Eigen::Index>((p * n + j) * np + k)];
          blk[pairs_[k].first * r_ + pairs_[k].second] = v;
          blk[pairs_[k].second * r_ + pairs_[k].first] = -v;
        }
      }
    }
    return theta;
  }

 private:
  Grid grid_;
  int r_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<double> scale_;
};

struct SpectralConfig {
  int k = 25;
  bool deflate = false;
  int max_iterations = 3000;
  double tolerance = 1e-6;  ///< residual bound ||L theta + lambda theta||_G <= tol * max(1, |lambda|)
  int guard = 4;            ///< extra block vectors beyond k
  std::uint64_t seed = 1;
  bool require_gate = true;
  SolitonGate gate;
};

struct LabeledField {
  std::string label;
  OneForm field;
};

struct SpectralResult {
  std::vector<double> eigenvalues;  ///< ascending
  std::vector<OneForm> eigenfields;  ///< G-orthonormal
  std::vector<LabeledField> deflated;
  std::vector<std::string> skipped_deflation;  ///< zero or linearly dependent fields
  std::vector<double> residuals;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

/// Orthonormalize the columns of s (Euclidean), dropping directions whose
/// Gram eigenvalue is below drop * largest. Returns the transform T with
/// s * T orthonormal.
inline Eigen::MatrixXd orthonormalizer(const Eigen::MatrixXd& s, double drop = 1e-12) {
  if (s.cols() == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd gram = s.transpose() * s;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (top > 0 && ev[i] > drop * top) keep.push_back(i);
  Eigen::MatrixXd t(s.cols(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    t.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(ev[keep[c]]);
  return t;
}

/// Removes the span of the orthonormal columns q from s (two passes) and
/// orthonormalizes the remainder.
inline Eigen::MatrixXd orthonormal_complement_block(const Eigen::MatrixXd& q, Eigen::MatrixXd s,
                                                    Eigen::MatrixXd* t_out = nullptr) {
  for (int pass = 0; pass < 2; ++pass)
    if (q.cols() > 0) s -= q * (q.transpose() * s);
  const Eigen::MatrixXd t = orthonormalizer(s);
  if (t_out) *t_out = t;
  return s * t;
}

}  // namespace detail

/// The fields J and i_{e_k} F labelled for deflation and verdicts.
inline std::vector<LabeledField> forced_eigenfields(const ConnectionField& a) {
  const TwoForm f = curvature(a);
  std::vector<LabeledField> out;
  out.push_back({"J", codifferential(a, f)});
  for (int k = 0; k < a.grid().n(); ++k) {
    std::vector<double> e(a.grid().n(), 0.0);
    e[k] = 1.0;
    out.push_back({"i_e" + std::to_string(k + 1) + "F", interior_vector(f, e)});
  }
  return out;
}

/// The k lowest eigenpairs of -L by block LOBPCG in the G-weighted space,
/// optionally restricted to the G-orthogonal complement of span{J, i_{e_k} F}.
inline SpectralResult lowest_spectrum(const ConnectionField& a, const Center& c, const SpectralConfig& cfg = {}) {
  if (cfg.k < 1 || cfg.k > 40) throw std::invalid_argument("spectral count k must lie in [1, 40]");
  if (cfg.require_gate) {
    const GateReport gr = soliton_gate(a, c, cfg.gate);
    if (!gr.passed)
      throw NotNearSoliton("spectrum requires a near-soliton: ||S||_G / ||F||_G = " + std::to_string(gr.ratio));
  }
  const StabilityOperator L(a, c);
  const WeightedCoordinates coords(a.grid(), a.rank(), L.quadrature());
  const Eigen::Index N = coords.size();
  auto apply = [&](const Eigen::MatrixXd& y) {
    Eigen::MatrixXd out(N, y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      OneForm v = L.apply(coords.unpack(y.col(j)));
      v *= -1.0;
      out.col(j) = coords.pack(v);
    }
    return out;
  };

  SpectralResult res;
  Eigen::MatrixXd defl(N, 0);
  if (cfg.deflate) {
    for (auto& lf : forced_eigenfields(a)) {
      Eigen::VectorXd y = coords.pack(lf.field);
      const double norm0 = y.norm();
      if (defl.cols() > 0) y -= defl * (defl.transpose() * y);
      if (defl.cols() > 0) y -= defl * (defl.transpose() * y);
      if (norm0 == 0.0 || y.norm() <= 1e-8 * norm0) {
        res.skipped_deflation.push_back(lf.label);
        continue;
      }
      defl.conservativeResize(N, defl.cols() + 1);
      defl.col(defl.cols() - 1) = y / y.norm();
      res.deflated.push_back(std::move(lf));
    }
  }
  auto project = [&](Eigen::MatrixXd& y) {
    if (defl.cols() == 0) return;
    y -= defl * (defl.transpose() * y);
    y -= defl * (defl.transpose() * y);
  };

  const Eigen::Index avail = N - defl.cols();
  const int k = static_cast<int>(std::min<Eigen::Index>(cfg.k, avail));
  const Eigen::Index bs = std::min<Eigen::Index>(k + cfg.guard, avail);

  Eigen::MatrixXd x, ax;
  Eigen::VectorXd lambda;

  if (3 * bs >= avail) {
    // Small problem: dense Rayleigh-Ritz on the whole (deflated) space.
    Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(N, N);
    project(basis);
    basis = basis * detail::orthonormalizer(basis, 1e-10);
    Eigen::MatrixXd h = basis.transpose() * apply(basis);
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    x = basis * es.eigenvectors().leftCols(k);
    ax = apply(x);
    lambda = es.eigenvalues().head(k);
    res.iterations = 1;
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    x.resize(N, bs);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    project(x);
    x = x * detail::orthonormalizer(x);
    ax = apply(x);
    Eigen::MatrixXd p(N, 0), ap(N, 0);
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      if (it > 0 && it % 25 == 0) {
        // refresh against drift of the tracked products
        x = x * detail::orthonormalizer(x);
        ax = apply(x);
      }
      Eigen::MatrixXd h = x.transpose() * ax;
      h = 0.5 * (h + h.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
      x = x * es.eigenvectors();
      ax = ax * es.eigenvectors();
      lambda = es.eigenvalues();
      Eigen::MatrixXd r = ax - x * lambda.asDiagonal();
      project(r);
      std::vector<Eigen::Index> active;
      bool done = true;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double bound = cfg.tolerance * std::max(1.0, std::abs(lambda[j]));
        const bool conv = r.col(j).norm() <= bound;
        if (j < k && !conv) done = false;
        if (!conv) active.push_back(j);
      }
      if (done) {
        res.converged = true;
        break;
      }
      Eigen::MatrixXd w(N, static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) w.col(static_cast<Eigen::Index>(j)) = r.col(active[j]);
      // New directions [W, P] orthonormalized against X.
      Eigen::MatrixXd s(N, w.cols() + p.cols());
      s << w, p;
      Eigen::MatrixXd t;
      const Eigen::MatrixXd q = detail::orthonormal_complement_block(x, s, &t);
      // A applied to the new block: fresh for W, tracked for P.
      Eigen::MatrixXd as(N, s.cols());
      as << apply(w), ap;
      // q = (I - X X^T) s t, so A q = (A s - A X X^T s) t
      const Eigen::MatrixXd aq = (as - ax * (x.transpose() * s)) * t;
      Eigen::MatrixXd basis(N, x.cols() + q.cols()), abasis(N, x.cols() + q.cols());
      basis << x, q;
      abasis << ax, aq;
      Eigen::MatrixXd hb = basis.transpose() * abasis;
      hb = 0.5 * (hb + hb.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(hb);
      const Eigen::MatrixXd cmat = eb.eigenvectors().leftCols(bs);
      const Eigen::MatrixXd cq = cmat.bottomRows(q.cols());
      p = q * cq;
      ap = aq * cq;
      x = basis * cmat;
      ax = abasis * cmat;
    }
    Eigen::MatrixXd h = x.transpose() * ax;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    x = x * es.eigenvectors();
    ax = ax * es.eigenvectors();
    lambda = es.eigenvalues();
  }

  Eigen::MatrixXd r = ax - x * lambda.asDiagonal();
  project(r);
  if (res.iterations == 1 && 3 * bs >= avail) res.converged = true;
  for (int j = 0; j < k; ++j) {
    res.eigenvalues.push_back(lambda[j]);
    res.residuals.push_back(r.col(j).norm());
    res.eigenfields.push_back(coords.unpack(x.col(j)));
  }
  return res;
}

/// Cosine between field v and the span of orthonormal fields basis.
inline double subspace_alignment(const OneForm& v, const std::vector<OneForm>& basis, const WeightedQuadrature& q) {
  const double nv = weighted_norm(v, q);
  if (nv == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& b : basis) {
    const double d = weighted_inner(v, b, q);
    s += d * d;
  }
  return std::min(1.0, std::sqrt(s) / nv);
}

/// Largest principal angle between span(u) and its best match inside the
/// span of the orthonormal fields basis. Returns pi/2 when span(u) does not
/// fit (fewer basis fields than rank u).
inline double subspace_angle(const std::vector<OneForm>& u, const std::vector<OneForm>& basis,
                             const WeightedQuadrature& q, double rank_drop = 1e-8) {
  const Eigen::Index nu = static_cast<Eigen::Index>(u.size()), nb = static_cast<Eigen::Index>(basis.size());
  if (nu == 0) return 0.0;
  Eigen::MatrixXd gram(nu, nu), cross(nu, nb);
  for (Eigen::Index i = 0; i < nu; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = weighted_inner(u[i], u[j], q);
    for (Eigen::Index j = 0; j < nb; ++j) cross(i, j) = weighted_inner(u[i], basis[j], q);
  }
  // orthonormal basis of span(u) through the inverse square root of its Gram matrix
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double top = es.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < nu; ++i)
    if (top > 0 && es.eigenvalues()[i] > rank_drop * top) keep.push_back(i);
  if (keep.empty()) return 0.0;
  if (static_cast<Eigen::Index>(keep.size()) > nb) return std::numbers::pi / 2;
  Eigen::MatrixXd coef(nu, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    coef.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(es.eigenvalues()[keep[c]]);
  const Eigen::MatrixXd m = coef.transpose() * cross;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smin = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
  return std::acos(smin);
}

struct VerdictOptions {
  double tolerance = -1.0;           ///< negative: 5e-3 * spectral width estimate
  double relative_tolerance = 5e-3;
  double cluster_gap = 1e-2;         ///< relative to the width estimate
  double alignment = 0.99;           ///< required cosine of J with E_{-1}
  double max_angle = 0.1;            ///< allowed angle of span{i_V F} in E_{-1/2}
  double rank_drop = 1e-8;
};

struct StabilityVerdict {
  bool f_stable = false;
  bool indeterminate = false;
  std::vector<double> negative_spectrum;
  int e_minus1_dim_excess = 0;
  int e_minus_half_dim_excess = 0;
  double tolerance_used = 0.0;
  double width_estimate = 0.0;
  double j_alignment = 1.0;
  double ivf_angle = 0.0;
  std::vector<std::vector<double>> clusters;
  std::string note;
};

/// Groups ascending eigenvalues into clusters whose consecutive gaps are
/// below gap.
inline std::vector<std::vector<double>> cluster_eigenvalues(const std::vector<double>& ev, double gap) {
  std::vector<std::vector<double>> out;
  for (double v : ev) {
    if (out.empty() || v - out.back().back() >= gap)
      out.push_back({v});
    else
      out.back().push_back(v);
  }
  return out;
}

/// Numerical rank of a set of fields from their G-Gram matrix.
inline int field_rank(const std::vector<OneForm>& u, const WeightedQuadrature& q, double drop = 1e-8) {
  const Eigen::Index nu = static_cast<Eigen::Index>(u.size());
  if (nu == 0) return 0;
  Eigen::MatrixXd gram(nu, nu);
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = weighted_inner(u[i], u[j], q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double top = es.eigenvalues().maxCoeff();
  int rank = 0;
  for (Eigen::Index i = 0; i < nu; ++i)
    if (top > 0 && es.eigenvalues()[i] > drop * top) ++rank;
  return rank;
}

/// F-stability verdict from an undeflated spectrum: stable iff the cluster at
/// -1 is span{J}, the cluster at -1/2 is span{i_{e_k} F}, and nothing else
/// lies below -tol. Misaligned eigenfields or an incomplete negative band
/// make the verdict indeterminate.
inline StabilityVerdict classify_spectrum(const SpectralResult& spec, const OneForm& j,
                                          const std::vector<OneForm>& ivf, const WeightedQuadrature& q,
                                          const VerdictOptions& opt = {}) {
  StabilityVerdict v;
  const auto& ev = spec.eigenvalues;
  v.width_estimate = ev.empty() ? 1.0 : std::max(1.0, ev.back() - ev.front());
  v.tolerance_used = opt.tolerance >= 0 ? opt.tolerance : opt.relative_tolerance * v.width_estimate;
  const double tol = v.tolerance_used;
  v.clusters = cluster_eigenvalues(ev, opt.cluster_gap * v.width_estimate);

  const int j_dim = field_rank({j}, q, opt.rank_drop);
  const int ivf_dim = field_rank(ivf, q, opt.rank_drop);
  std::vector<OneForm> e_m1, e_mh;
  std::size_t idx = 0;
  for (const auto& cl : v.clusters) {
    double mean = 0.0;
    for (double x : cl) mean += x;
    mean /= static_cast<double>(cl.size());
    std::vector<OneForm>* target = nullptr;
    if (std::abs(mean + 1.0) <= tol)
      target = &e_m1;
    else if (std::abs(mean + 0.5) <= tol)
      target = &e_mh;
    for (std::size_t i = 0; i < cl.size(); ++i, ++idx) {
      if (target)
        target->push_back(spec.eigenfields[idx]);
      else if (cl[i] < -tol)
        v.negative_spectrum.push_back(cl[i]);
    }
  }
  v.e_minus1_dim_excess = std::max(0, static_cast<int>(e_m1.size()) - j_dim);
  v.e_minus_half_dim_excess = std::max(0, static_cast<int>(e_mh.size()) - ivf_dim);

  std::vector<std::string> notes;
  if (j_dim > 0) {
    v.j_alignment = subspace_alignment(j, e_m1, q);
    if (v.j_alignment < opt.alignment) {
      v.indeterminate = true;
      notes.push_back("J is not aligned with the eigenspace at -1 (cosine " + std::to_string(v.j_alignment) + ")");
    }
  }
  if (ivf_dim > 0) {
    v.ivf_angle = subspace_angle(ivf, e_mh, q, opt.rank_drop);
    if (v.ivf_angle > opt.max_angle) {
      v.indeterminate = true;
      notes.push_back("span{i_V F} is not contained in the eigenspace at -1/2 (angle " + std::to_string(v.ivf_angle) +
                      " rad)");
    }
  }
  if (!ev.empty() && ev.back() < -tol) {
    v.indeterminate = true;
    notes.push_back("all computed eigenvalues are negative; increase k");
  }
  if (!spec.converged) {
    v.indeterminate = true;
    notes.push_back("eigensolver did not converge");
  }
  for (std::size_t i = 0; i < notes.size(); ++i) v.note += (i ? "; " : "") + notes[i];
  v.f_stable = !v.indeterminate && v.e_minus1_dim_excess == 0 && v.e_minus_half_dim_excess == 0 &&
               v.negative_spectrum.empty();
  return v;
}

/// Runs the undeflated spectrum and classifies it.
inline StabilityVerdict f_stability_verdict(const ConnectionField& a, const Center& c, const VerdictOptions& opt = {},
                                            SpectralConfig cfg = {}) {
  cfg.deflate = false;
  const SpectralResult spec = lowest_spectrum(a, c, cfg);
  const auto forced = forced_eigenfields(a);
  std::vector<OneForm> ivf;
  for (std::size_t i = 1; i < forced.size(); ++i) ivf.push_back(forced[i].field);
  return classify_spectrum(spec, forced[0].field, ivf, WeightedQuadrature(a.grid(), c), opt);
}

struct CenterPerturbation {
  double q = 0.0;
  std::vector<double> V;
};

/// Decomposes theta = a J + i_W F + rest by G-orthogonal projection and
/// returns (q, V) = (-a, -W).
inline CenterPerturbation optimal_qV(const ConnectionField& a, const Center& c, const OneForm& theta) {
  const WeightedQuadrature q(a.grid(), c);
  const auto forced = forced_eigenfields(a);
  const Eigen::Index d = static_cast<Eigen::Index>(forced.size());
  Eigen::MatrixXd gram(d, d);
  Eigen::VectorXd rhs(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    rhs[i] = weighted_inner(theta, forced[i].field, q);
    for (Eigen::Index j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = weighted_inner(forced[i].field, forced[j].field, q);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double trace = gram.trace();
  if (trace <= 0.0 || es.eigenvalues().minCoeff() <= 1e-10 * trace)
    throw DomainError("Gram matrix of {J, i_{e_k} F} is singular; i_V F may vanish for some V (run descent_check)");
  const Eigen::VectorXd coef = gram.ldlt().solve(rhs);
  CenterPerturbation out;
  out.q = -coef[0];
  for (Eigen::Index k = 1; k < d; ++k) out.V.push_back(-coef[k]);
  return out;
}

inline nlohmann::json verdict_json(const StabilityVerdict& v) {
  nlohmann::json j;
  j["f_stable"] = v.f_stable;
  j["indeterminate"] = v.indeterminate;
  j["negative_spectrum"] = v.negative_spectrum;
  j["e_minus1_dim_excess"] = v.e_minus1_dim_excess;
  j["e_minus_half_dim_excess"] = v.e_minus_half_dim_excess;
  j["tolerance_used"] = v.tolerance_used;
  j["width_estimate"] = v.width_estimate;
  j["j_alignment"] = v.j_alignment;
  j["ivf_angle"] = v.ivf_angle;
  j["clusters"] = v.clusters;
  j["note"] = v.note;
  return j;
}

/// {eigenvalues[], residuals[], deflation_labels[], verdict}
inline nlohmann::json spectrum_json(const SpectralResult& s, const StabilityVerdict* verdict = nullptr) {
  nlohmann::json j;
  j["eigenvalues"] = s.eigenvalues;
  j["residuals"] = s.residuals;
  std::vector<std::string> labels;
  for (const auto& d : s.deflated) labels.push_back(d.label);
  j["deflation_labels"] = labels;
  j["skipped_deflation"] = s.skipped_deflation;
  j["converged"] = s.converged;
  j["iterations"] = s.iterations;
  j["verdict"] = verdict ? verdict_json(*verdict) : nlohmann::json(nullptr);
  return j;
}

}  // namespace ymlab
