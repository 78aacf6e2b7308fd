#include "a4g/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Dense>

#include "a4g/rand.hpp"

namespace a4g {

namespace {

double sq_dist(const double* a, const double* b, int64_t c) {
  double acc = 0;
  for (int64_t j = 0; j < c; ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// k-means

namespace {

ClusterResult kmeans_single(const Tensor& points, int k, Rng rng, int max_iters) {
  const int64_t n = points.dim(0), c = points.dim(1);
  const auto& pv = points.values();
  const double* P = pv.data();
  std::vector<double> centroids(static_cast<size_t>(k) * static_cast<size_t>(c));
  std::vector<double> best_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  {
    std::uniform_int_distribution<int64_t> first(0, n - 1);
    const int64_t f = first(rng);
    std::copy(P + f * c, P + (f + 1) * c, centroids.begin());
    for (int ci = 1; ci < k; ++ci) {
      double total = 0;
      const double* prev = centroids.data() + (ci - 1) * c;
      for (int64_t i = 0; i < n; ++i) {
        best_d2[static_cast<size_t>(i)] =
            std::min(best_d2[static_cast<size_t>(i)], sq_dist(P + i * c, prev, c));
        total += best_d2[static_cast<size_t>(i)];
      }
      int64_t chosen = -1;
      if (total > 0) {
        std::uniform_real_distribution<double> u(0.0, total);
        const double r = u(rng);
        double cum = 0;
        for (int64_t i = 0; i < n; ++i) {
          cum += best_d2[static_cast<size_t>(i)];
          if (cum >= r && best_d2[static_cast<size_t>(i)] > 0) {
            chosen = i;
            break;
          }
        }
        if (chosen < 0) {  // rounding pushed r past the last positive span
          for (int64_t i = n - 1; i >= 0; --i) {
            if (best_d2[static_cast<size_t>(i)] > 0) {
              chosen = i;
              break;
            }
          }
        }
      } else {
        // All points coincide with chosen centroids; distinctness check above
        // guarantees this cannot happen before k centroids are placed.
        throw std::logic_error("kmeans: seeding exhausted distinct points");
      }
      std::copy(P + chosen * c, P + (chosen + 1) * c, centroids.data() + ci * c);
    }
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<double> trace;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double inertia = 0;
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int ci = 0; ci < k; ++ci) {
        const double d = sq_dist(P + i * c, centroids.data() + ci * c, c);
        if (d < bd) {  // strict: ties keep the lowest index
          bd = d;
          best = ci;
        }
      }
      inertia += bd;
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    trace.push_back(inertia);
    if (!changed) break;

    std::vector<double> sums(static_cast<size_t>(k) * static_cast<size_t>(c), 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int ci = assign[static_cast<size_t>(i)];
      counts[static_cast<size_t>(ci)]++;
      for (int64_t j = 0; j < c; ++j) sums[static_cast<size_t>(ci * c + j)] += P[i * c + j];
    }
    for (int ci = 0; ci < k; ++ci) {
      if (counts[static_cast<size_t>(ci)] == 0) {
        // Revive the empty cluster at the point farthest from its centroid.
        int64_t far_i = 0;
        double far_d = -1;
        for (int64_t i = 0; i < n; ++i) {
          const double d = sq_dist(P + i * c,
                                   centroids.data() + assign[static_cast<size_t>(i)] * c, c);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        std::copy(P + far_i * c, P + (far_i + 1) * c, centroids.data() + ci * c);
      } else {
        for (int64_t j = 0; j < c; ++j) {
          centroids[static_cast<size_t>(ci * c + j)] =
              sums[static_cast<size_t>(ci * c + j)] / static_cast<double>(counts[static_cast<size_t>(ci)]);
        }
      }
    }
  }

  // Final assignment pass so the result is a fixed point of the update.
  double inertia = 0;
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int ci = 0; ci < k; ++ci) {
      const double d = sq_dist(P + i * c, centroids.data() + ci * c, c);
      if (d < bd) {
        bd = d;
        best = ci;
      }
    }
    assign[static_cast<size_t>(i)] = best;
    inertia += bd;
  }

  ClusterResult res;
  res.k = k;
  res.assignments = std::move(assign);
  res.centroids = Tensor({k, c}, std::move(centroids));
  res.inertia = inertia;
  res.inertia_trace = std::move(trace);
  res.sigmas.assign(static_cast<size_t>(k), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int64_t i = 0; i < n; ++i) {
    const int ci = res.assignments[static_cast<size_t>(i)];
    counts[static_cast<size_t>(ci)]++;
    res.sigmas[static_cast<size_t>(ci)] +=
        sq_dist(P + i * c, res.centroids.values().data() + ci * c, c);
  }
  for (int ci = 0; ci < k; ++ci) {
    if (counts[static_cast<size_t>(ci)] > 0) {
      res.sigmas[static_cast<size_t>(ci)] =
          std::sqrt(res.sigmas[static_cast<size_t>(ci)] / static_cast<double>(counts[static_cast<size_t>(ci)]));
    }
  }
  return res;
}

}  // namespace

ClusterResult kmeans(const Tensor& points, int k, uint64_t seed, int max_iters) {
  if (points.rank() != 2) throw std::invalid_argument("kmeans: points must be [n,c]");
  if (k < 2) throw std::invalid_argument("kmeans: k must be >= 2");
  const int64_t n = points.dim(0), c = points.dim(1);
  {
    std::set<std::vector<double>> distinct;
    const auto& pv = points.values();
    for (int64_t i = 0; i < n && static_cast<int>(distinct.size()) < k; ++i) {
      distinct.emplace(pv.begin() + i * c, pv.begin() + (i + 1) * c);
    }
    if (static_cast<int>(distinct.size()) < k) {
      throw std::invalid_argument("kmeans: fewer distinct points than k");
    }
  }

  // Lloyd gets stuck in poor local optima on symmetric blob data; restart
  // from several seeded k-means++ inits and keep the lowest inertia.
  constexpr int kRestarts = 10;
  ClusterResult best;
  for (int r = 0; r < kRestarts; ++r) {
    ClusterResult cur = kmeans_single(points, k, make_rng(seed, 0x6b6d0000u + static_cast<uint64_t>(r)),
                                      max_iters);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

// ---------------------------------------------------------------------------
// IICR

double Iicr::ratio() const {
  return infinite() ? std::numeric_limits<double>::infinity() : d_inter / d_intra;
}

Iicr iicr(const FeatureMap& features, int k, uint64_t seed) {
  const Tensor tokens = features.tokens();
  if (tokens.dim(0) < k) {
    throw std::invalid_argument("iicr: needs at least k patch tokens");
  }
  const ClusterResult cl = kmeans(tokens, k, seed);
  const int64_t c = tokens.dim(1);
  const auto& cent = cl.centroids.values();

  double d_inter = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      d_inter = std::min(d_inter, std::sqrt(sq_dist(cent.data() + i * c, cent.data() + j * c, c)));
    }
  }
  const double d_intra = *std::max_element(cl.sigmas.begin(), cl.sigmas.end());
  return Iicr{d_inter, d_intra};
}

// ---------------------------------------------------------------------------
// FFT

namespace {

using Cx = std::complex<double>;

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, forward (e^{-2*pi*i*k/n}).
void fft_pow2(std::vector<Cx>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const Cx wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      Cx w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const Cx u = a[i + j];
        const Cx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Direct O(n^2) DFT for non-power-of-two lengths.
void dft_naive(std::vector<Cx>& a) {
  const size_t n = a.size();
  std::vector<Cx> out(n, Cx(0, 0));
  for (size_t u = 0; u < n; ++u) {
    for (size_t x = 0; x < n; ++x) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(u * x) / static_cast<double>(n);
      out[u] += a[x] * Cx(std::cos(ang), std::sin(ang));
    }
  }
  a = std::move(out);
}

void transform_line(std::vector<Cx>& a) {
  if (is_pow2(static_cast<int64_t>(a.size()))) {
    fft_pow2(a);
  } else {
    dft_naive(a);
  }
}

}  // namespace

ComplexGrid fft2d(const Tensor& plane) {
  if (plane.rank() != 2) throw std::invalid_argument("fft2d: expects [h,w]");
  const int64_t h = plane.dim(0), w = plane.dim(1);
  if (h < 2 || w < 2) throw std::invalid_argument("fft2d: needs h,w >= 2");

  std::vector<Cx> grid(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) grid[static_cast<size_t>(i)] = Cx(plane.values()[static_cast<size_t>(i)], 0.0);

  std::vector<Cx> line;
  line.resize(static_cast<size_t>(w));
  for (int64_t r = 0; r < h; ++r) {
    std::copy(grid.begin() + r * w, grid.begin() + (r + 1) * w, line.begin());
    transform_line(line);
    std::copy(line.begin(), line.end(), grid.begin() + r * w);
  }
  line.resize(static_cast<size_t>(h));
  for (int64_t col = 0; col < w; ++col) {
    for (int64_t r = 0; r < h; ++r) line[static_cast<size_t>(r)] = grid[static_cast<size_t>(r * w + col)];
    transform_line(line);
    for (int64_t r = 0; r < h; ++r) grid[static_cast<size_t>(r * w + col)] = line[static_cast<size_t>(r)];
  }

  // Shift DC (0,0) to the center index (h/2, w/2).
  ComplexGrid out;
  out.h = h;
  out.w = w;
  out.values.resize(grid.size());
  const int64_t ch = h / 2, cw = w / 2;
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      out.values[static_cast<size_t>(((u + ch) % h) * w + (v + cw) % w)] =
          grid[static_cast<size_t>(u * w + v)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// frequency gap

FrequencyReport frequency_gap(const FeatureMap& features, double eps) {
  const int64_t h = features.grid_h, w = features.grid_w;
  if (h != w) throw std::invalid_argument("frequency_gap: grid must be square");
  if (h < 4) throw std::invalid_argument("frequency_gap: high-frequency ring is empty for grids below 4x4");
  if (eps <= 0) throw std::invalid_argument("frequency_gap: eps must be positive");

  const int64_t T = features.frames, C = features.channels;
  const auto& fv = features.values.values();
  std::vector<double> m_avg(static_cast<size_t>(h * w), 0.0);
  std::vector<double> plane(static_cast<size_t>(h * w));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          plane[static_cast<size_t>(y * w + x)] = fv[static_cast<size_t>(((t * h + y) * w + x) * C + c)];
        }
      }
      const ComplexGrid s = fft2d(Tensor({h, w}, plane));
      for (int64_t i = 0; i < h * w; ++i) {
        m_avg[static_cast<size_t>(i)] += std::log(std::abs(s.values[static_cast<size_t>(i)]) + eps);
      }
    }
  }
  const double denom = static_cast<double>(T * C);
  for (double& v : m_avg) v /= denom;

  const int64_t ch = h / 2, cw = w / 2;
  const double r = static_cast<double>(h) / 2.0;
  const double thresh = 0.75 * r;
  double hf_sum = 0;
  int64_t hf_count = 0;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const double u = static_cast<double>(i - ch);
      const double v = static_cast<double>(j - cw);
      if (std::sqrt(u * u + v * v) > thresh) {
        hf_sum += m_avg[static_cast<size_t>(i * w + j)];
        hf_count++;
      }
    }
  }
  if (hf_count == 0) throw std::invalid_argument("frequency_gap: high-frequency ring is empty");

  FrequencyReport rep;
  rep.dc_log = m_avg[static_cast<size_t>(ch * w + cw)];
  rep.hf_mean = hf_sum / static_cast<double>(hf_count);
  rep.delta_freq = rep.hf_mean - rep.dc_log;
  rep.spectrum_log = Tensor({h, w}, std::move(m_avg));
  return rep;
}

// ---------------------------------------------------------------------------
// PCA

PcaResult pca_project(const FeatureMap& features, int dims) {
  const int64_t T = features.frames, h = features.grid_h, w = features.grid_w, c = features.channels;
  const int64_t n = T * h * w;
  if (dims < 1 || dims > c) throw std::invalid_argument("pca_project: dims must be in [1, channels]");
  if (n <= dims) throw std::invalid_argument("pca_project: needs more tokens than components");

  const auto& fv = features.values.values();
  Eigen::MatrixXd X(n, c);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < c; ++j) X(i, j) = fv[static_cast<size_t>(i * c + j)];
  }
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  if (X.cwiseAbs().maxCoeff() == 0.0) {
    throw std::invalid_argument("pca_project: all tokens are identical (rank-deficient input)");
  }
  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("pca_project: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top `dims` descending and
  // fix each component's sign so its largest-magnitude entry is positive.
  PcaResult res;
  Eigen::MatrixXd basis(c, dims);
  res.eigenvalues.resize(static_cast<size_t>(dims));
  for (int d = 0; d < dims; ++d) {
    const int64_t src = c - 1 - d;
    Eigen::VectorXd v = es.eigenvectors().col(src);
    int64_t arg = 0;
    for (int64_t j = 1; j < c; ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    }
    if (v(arg) < 0) v = -v;
    basis.col(d) = v;
    res.eigenvalues[static_cast<size_t>(d)] = std::max(0.0, es.eigenvalues()(src));
  }

  const Eigen::MatrixXd scores = X * basis;
  std::vector<double> raw(static_cast<size_t>(n * dims));
  std::vector<double> scaled(static_cast<size_t>(n * dims));
  for (int d = 0; d < dims; ++d) {
    const double lo = scores.col(d).minCoeff();
    const double hi = scores.col(d).maxCoeff();
    const double range = hi - lo;
    for (int64_t i = 0; i < n; ++i) {
      raw[static_cast<size_t>(i * dims + d)] = scores(i, d);
      scaled[static_cast<size_t>(i * dims + d)] = range > 0 ? (scores(i, d) - lo) / range : 0.5;
    }
  }

  std::vector<double> basis_v(static_cast<size_t>(c * dims));
  for (int64_t i = 0; i < c; ++i) {
    for (int d = 0; d < dims; ++d) basis_v[static_cast<size_t>(i * dims + d)] = basis(i, d);
  }
  std::vector<double> mean_v(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j) mean_v[static_cast<size_t>(j)] = mu(j);

  res.scaled = Tensor({T, h, w, dims}, std::move(scaled));
  res.scores = Tensor({T, h, w, dims}, std::move(raw));
  res.basis = Tensor({c, dims}, std::move(basis_v));
  res.mean = Tensor({c}, std::move(mean_v));
  return res;
}

void export_pca_ppm(const PcaResult& pca, const std::filesystem::path& dir) {
  if (pca.scaled.dim(3) != 3) throw std::invalid_argument("export_pca_ppm: needs dims == 3");
  std::filesystem::create_directories(dir);
  const int64_t T = pca.scaled.dim(0), h = pca.scaled.dim(1), w = pca.scaled.dim(2);
  const auto& v = pca.scaled.values();
  for (int64_t t = 0; t < T; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "pca_f%04lld.ppm", static_cast<long long>(t));
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("export_pca_ppm: cannot open " + (dir / name).string());
    out << "P6\n" << w << ' ' << h << "\n255\n";
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t d = 0; d < 3; ++d) {
          const double val = v[static_cast<size_t>((((t * h + y) * w + x) * 3) + d)];
          const int byte = std::clamp(static_cast<int>(std::lround(val * 255.0)), 0, 255);
          out.put(static_cast<char>(byte));
        }
      }
    }
  }
}

}  // namespace a4g
