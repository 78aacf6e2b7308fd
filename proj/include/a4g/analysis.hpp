#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "a4g/io.hpp"
#include "a4g/tensor.hpp"

namespace a4g {

struct ClusterResult {
  int k = 0;
  std::vector<int> assignments;      // per-point nearest-centroid index
  Tensor centroids;                  // [k, c]
  std::vector<double> sigmas;        // sqrt(mean squared distance to centroid)
  double inertia = 0;                // sum of squared distances
  std::vector<double> inertia_trace; // one entry per Lloyd iteration
};

/// Lloyd's algorithm with k-means++ seeding. Deterministic given seed; ties
/// in nearest-centroid assignment break toward the lowest index.
ClusterResult kmeans(const Tensor& points /* [n,c] */, int k, uint64_t seed, int max_iters = 100);

/// Inter/intra cluster ratio of pooled patch tokens. d_intra == 0 is the
/// distinguished infinite outcome.
struct Iicr {
  double d_inter = 0;
  double d_intra = 0;
  bool infinite() const { return d_intra == 0.0; }
  double ratio() const;  // +inf when infinite()
};

Iicr iicr(const FeatureMap& features, int k, uint64_t seed);

/// 2-D DFT result with DC shifted to the center index (h/2, w/2).
struct ComplexGrid {
  int64_t h = 0, w = 0;
  std::vector<std::complex<double>> values;  // row-major
  const std::complex<double>& at(int64_t i, int64_t j) const {
    return values[static_cast<size_t>(i * w + j)];
  }
};

/// Exact 2-D discrete Fourier transform: radix-2 Cooley-Tukey on
/// power-of-two axes, direct O(n^2) DFT otherwise.
ComplexGrid fft2d(const Tensor& plane /* [h,w] */);

struct FrequencyReport {
  Tensor spectrum_log;  // M averaged over frames and channels, [h,w]
  double dc_log = 0;    // M at the spectral center
  double hf_mean = 0;   // mean of M over the ring sqrt(u^2+v^2) > 0.75*r
  double delta_freq = 0;
};

FrequencyReport frequency_gap(const FeatureMap& features, double eps = 1e-8);

struct PcaResult {
  Tensor scaled;     // [T,h,w,dims], each component min-max scaled to [0,1]
  Tensor scores;     // [T,h,w,dims], raw principal scores
  Tensor basis;      // [c, dims], orthonormal columns, descending variance
  Tensor mean;       // [c]
  std::vector<double> eigenvalues;  // descending, length dims
};

/// Shared basis across frames so identical frames map to identical colors.
PcaResult pca_project(const FeatureMap& features, int dims = 3);

/// One binary P6 portable pixmap per frame, named pca_fNNNN.ppm. Requires
/// dims == 3.
void export_pca_ppm(const PcaResult& pca, const std::filesystem::path& dir);

}  // namespace a4g
