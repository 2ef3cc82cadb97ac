#pragma once

#include <cmath>

#include "fpgap/backends.hpp"

namespace fpgap {

/// Index of the input element with the largest gradient magnitude of the
/// top logit, estimated by central finite differences in double precision
/// (the network is treated as a function on R^n, no box clamping). Ties go
/// to the lowest index.
inline int max_gradient_element(const Network& net, const ImageF& x, double h = 1e-3) {
  detail::check_input(net, x.shape());
  int t = argmax_class(infer_f64(net, x));
  ImageD base = widen_to_double(x);
  int best = 0;
  double best_mag = -1.0;
  for (int i = 0; i < base.size(); ++i) {
    ImageD up = base, dn = base;
    up[i] += h;
    dn[i] -= h;
    double g = (infer_f64(net, up).scores[t] - infer_f64(net, dn).scores[t]) / (2.0 * h);
    if (std::abs(g) > best_mag) {
      best_mag = std::abs(g);
      best = i;
    }
  }
  return best;
}

struct SweepRecord {
  double delta;
  BackendId backend;
  double linf_change;
};

/// Perturb one input element by each delta on a uniform grid (single
/// precision addition, clamped to [0,1]) and record the l-inf change of the
/// logits per backend, diffs taken on exactly widened values.
inline std::vector<SweepRecord> local_sweep(const Network& net, const ImageF& x, int element,
                                            const std::vector<BackendId>& backends,
                                            double range = 1e-6, int steps = 401) {
  require(element >= 0 && element < x.size(), "local_sweep: element out of range");
  require(steps >= 2, "local_sweep: need at least two steps");
  std::vector<Logits<double>> base;
  for (BackendId b : backends) base.push_back(infer_as_double(b, net, x));
  std::vector<SweepRecord> records;
  records.reserve(size_t(steps) * backends.size());
  for (int s = 0; s < steps; ++s) {
    double delta = -range + (2.0 * range) * double(s) / double(steps - 1);
    ImageF xp = x;
    float v = xp[element] + to_single(delta);
    v = std::min(std::max(v, 0.0f), 1.0f);
    xp[element] = v;
    for (size_t bi = 0; bi < backends.size(); ++bi) {
      Logits<double> y = infer_as_double(backends[bi], net, xp);
      double change = 0.0;
      for (size_t j = 0; j < y.scores.size(); ++j)
        change = std::max(change, std::abs(y.scores[j] - base[bi].scores[j]));
      records.push_back({delta, backends[bi], change});
    }
  }
  return records;
}

/// Relative first-layer differences |a - r| / max(|r|, 1e-6) of `backend`
/// against `reference`, over every image and first-layer element, in
/// deterministic (image, element) order.
inline std::vector<double> first_layer_rel_errors(const Network& net,
                                                  const std::vector<ImageF>& images,
                                                  BackendId backend, BackendId reference) {
  std::vector<double> rel;
  for (const ImageF& x : images) {
    Tensor<double> a = first_layer_as_double(backend, net, x);
    Tensor<double> r = first_layer_as_double(reference, net, x);
    for (int i = 0; i < a.size(); ++i)
      rel.push_back(std::abs(a[i] - r[i]) / std::max(std::abs(r[i]), 1e-6));
  }
  return rel;
}

/// Log10-binned histogram of first-layer relative differences. Differences
/// below the first edge (including exact zeros) land in a dedicated
/// underflow bin, everything at or above the last edge in an overflow bin,
/// so counts always sum to #images x first-layer size.
struct DiffHistogram {
  double lo = 1e-12, hi = 1e-2;
  int bins = 40;
  std::vector<BackendId> backends;
  std::vector<std::vector<long>> counts;  // per backend: underflow, bins, overflow

  double edge(int k) const {  // k in [0, bins]
    double t = double(k) / double(bins);
    return lo * std::pow(hi / lo, t);
  }
  long total(size_t backend_idx) const {
    long s = 0;
    for (long c : counts[backend_idx]) s += c;
    return s;
  }
};

inline DiffHistogram cross_backend_histogram(const std::vector<ImageF>& images,
                                             const Network& net,
                                             const std::vector<BackendId>& backends,
                                             BackendId reference = BackendId::IM2COL_F32) {
  require(!images.empty(), "cross_backend_histogram: empty dataset");
  DiffHistogram h;
  h.backends = backends;
  h.counts.assign(backends.size(), std::vector<long>(size_t(h.bins) + 2, 0));
  double log_lo = std::log10(h.lo), log_hi = std::log10(h.hi);
  for (size_t bi = 0; bi < backends.size(); ++bi) {
    std::vector<double> rel = first_layer_rel_errors(net, images, backends[bi], reference);
    for (double r : rel) {
      int slot;
      if (!(r >= h.lo)) {
        slot = 0;  // underflow (zeros included)
      } else if (r >= h.hi) {
        slot = h.bins + 1;
      } else {
        int k = int(std::floor((std::log10(r) - log_lo) / (log_hi - log_lo) * h.bins));
        slot = std::min(std::max(k, 0), h.bins - 1) + 1;
      }
      ++h.counts[bi][size_t(slot)];
    }
  }
  return h;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of empty set");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace fpgap
