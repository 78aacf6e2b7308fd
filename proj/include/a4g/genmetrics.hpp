#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "a4g/tensor.hpp"

namespace a4g {

/// Gaussian fit of an embedding set; the input to the Fréchet distance.
struct GaussianStats {
  Tensor mean;  // [d]
  Tensor cov;   // [d,d], symmetric, unbiased (n-1)
  int64_t n = 0;
};

GaussianStats gaussian_stats(const Tensor& embeddings /* [n,d] */);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), the matrix square root
/// reduced to an eigendecomposition of Sa^{1/2} Sb Sa^{1/2} with eigenvalues
/// clamped at zero. Result clamped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Row-stochastic class-posterior matrix.
struct ProbMatrix {
  Tensor probs;  // [n, C]
  static ProbMatrix from_tensor(Tensor t);  // validates rows sum to 1
};

/// exp(mean over rows of KL(row || column mean)), natural log, 0*log0 := 0.
double inception_score(const ProbMatrix& p);

/// (1/(T-1)) sum_{t=2..T} 0.5*[cos(e_1,e_t) + cos(e_{t-1},e_t)].
double framewise_clip_similarity(const Tensor& embeddings /* [T,d] */);

struct EvalConfig {
  int64_t n = 2048;
  int64_t clip_len = 16;
  uint64_t seed = 0;
  bool class_stratified = false;
};

struct EvalReport {
  double fvd = 0;
  std::optional<double> fid;
  std::optional<double> is;
  std::optional<double> clip_sim;
  int64_t n = 0;
  int64_t clip_len = 0;
  uint64_t seed = 0;

  std::string to_json() const;
};

/// StyleGAN-V-style protocol over per-video embedding series ([L,d] tensor
/// files listed by a manifest): sample n videos, take one random clip_len
/// window per video, mean-pool it to the clip embedding, fit Gaussians,
/// return the Fréchet distance between real and fake.
EvalReport eval_protocol(const std::filesystem::path& real_dir,
                         const std::filesystem::path& fake_dir, const EvalConfig& cfg);

}  // namespace a4g
