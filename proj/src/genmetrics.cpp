#include "a4g/genmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "a4g/io.hpp"
#include "a4g/rand.hpp"

namespace a4g {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int64_t i = 0; i < t.dim(0); ++i) {
    for (int64_t j = 0; j < t.dim(1); ++j) m(i, j) = t.values()[static_cast<size_t>(i * t.dim(1) + j)];
  }
  return m;
}

// Validated, symmetrized covariance; eigenvalues below -1e-6 are corrupt.
Eigen::MatrixXd checked_cov(const GaussianStats& s, const char* side) {
  Eigen::MatrixXd c = to_eigen(s.cov);
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    throw std::invalid_argument(std::string("frechet_distance: ") + side +
                                " covariance is not symmetric");
  }
  c = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-6) {
    throw std::invalid_argument(std::string("frechet_distance: ") + side +
                                " covariance has a significantly negative eigenvalue");
  }
  return c;
}

}  // namespace

GaussianStats gaussian_stats(const Tensor& embeddings) {
  if (embeddings.rank() != 2) throw std::invalid_argument("gaussian_stats: expects [n,d]");
  const int64_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (n < 2) throw std::invalid_argument("gaussian_stats: needs at least 2 samples");
  const auto& ev = embeddings.values();

  std::vector<double> mu(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += ev[static_cast<size_t>(i * d + j)];
  }
  for (double& v : mu) v /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t a = 0; a < d; ++a) {
      const double da = ev[static_cast<size_t>(i * d + a)] - mu[static_cast<size_t>(a)];
      for (int64_t b = a; b < d; ++b) {
        cov[static_cast<size_t>(a * d + b)] +=
            da * (ev[static_cast<size_t>(i * d + b)] - mu[static_cast<size_t>(b)]);
      }
    }
  }
  for (int64_t a = 0; a < d; ++a) {
    for (int64_t b = a; b < d; ++b) {
      const double v = cov[static_cast<size_t>(a * d + b)] / static_cast<double>(n - 1);
      cov[static_cast<size_t>(a * d + b)] = v;
      cov[static_cast<size_t>(b * d + a)] = v;
    }
  }
  return GaussianStats{Tensor({d}, std::move(mu)), Tensor({d, d}, std::move(cov)), n};
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const int64_t d = a.mean.dim(0);
  if (b.mean.dim(0) != d || a.cov.dim(0) != d || b.cov.dim(0) != d) {
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  }

  double mean_term = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double diff = a.mean.values()[static_cast<size_t>(j)] - b.mean.values()[static_cast<size_t>(j)];
    mean_term += diff * diff;
  }

  const Eigen::MatrixXd ca = checked_cov(a, "first");
  const Eigen::MatrixXd cb = checked_cov(b, "second");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(ca);
  if (es_a.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver failed");
  Eigen::VectorXd root = es_a.eigenvalues();
  for (int64_t i = 0; i < d; ++i) root(i) = std::sqrt(std::max(0.0, root(i)));
  const Eigen::MatrixXd sa_half = es_a.eigenvectors() * root.asDiagonal() * es_a.eigenvectors().transpose();

  // Tr((Sa Sb)^{1/2}) equals the trace of sqrtm of the symmetric inner
  // matrix; the similarity transform by Sa^{+-1/2} cancels under the trace.
  Eigen::MatrixXd inner = sa_half * cb * sa_half;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner, Eigen::EigenvaluesOnly);
  if (es_i.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver failed");
  double trace_root = 0;
  for (int64_t i = 0; i < d; ++i) trace_root += std::sqrt(std::max(0.0, es_i.eigenvalues()(i)));

  const double value = mean_term + ca.trace() + cb.trace() - 2.0 * trace_root;
  return std::max(0.0, value);
}

// ---------------------------------------------------------------------------
// inception score

ProbMatrix ProbMatrix::from_tensor(Tensor t) {
  if (t.rank() != 2) throw std::invalid_argument("ProbMatrix: expects [n,C]");
  const int64_t n = t.dim(0), c = t.dim(1);
  for (int64_t i = 0; i < n; ++i) {
    double row_sum = 0;
    for (int64_t j = 0; j < c; ++j) {
      const double p = t.values()[static_cast<size_t>(i * c + j)];
      if (p < 0.0 || p > 1.0) {
        throw std::domain_error("ProbMatrix: entry outside [0,1] at row " + std::to_string(i));
      }
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-9) {
      throw std::domain_error("ProbMatrix: row " + std::to_string(i) + " does not sum to 1");
    }
  }
  return ProbMatrix{std::move(t)};
}

double inception_score(const ProbMatrix& pm) {
  const int64_t n = pm.probs.dim(0), c = pm.probs.dim(1);
  const auto& pv = pm.probs.values();
  for (double p : pv) {
    if (p < 0.0) throw std::domain_error("inception_score: negative probability entry");
  }

  std::vector<double> marginal(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < c; ++j) marginal[static_cast<size_t>(j)] += pv[static_cast<size_t>(i * c + j)];
  }
  for (double& q : marginal) q /= static_cast<double>(n);

  double kl_sum = 0;
  for (int64_t i = 0; i < n; ++i) {
    double kl = 0;
    for (int64_t j = 0; j < c; ++j) {
      const double p = pv[static_cast<size_t>(i * c + j)];
      if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[static_cast<size_t>(j)]));
    }
    kl_sum += kl;
  }
  return std::exp(kl_sum / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// frame-wise CLIP-style similarity

namespace {

double row_cosine(const std::vector<double>& v, int64_t d, int64_t r1, int64_t r2) {
  double dot = 0, n1 = 0, n2 = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double x = v[static_cast<size_t>(r1 * d + j)];
    const double y = v[static_cast<size_t>(r2 * d + j)];
    dot += x * y;
    n1 += x * x;
    n2 += y * y;
  }
  return dot / (std::sqrt(n1) * std::sqrt(n2));
}

}  // namespace

double framewise_clip_similarity(const Tensor& embeddings) {
  if (embeddings.rank() != 2) throw std::invalid_argument("framewise_clip_similarity: expects [T,d]");
  const int64_t T = embeddings.dim(0), d = embeddings.dim(1);
  if (T < 2) throw std::invalid_argument("framewise_clip_similarity: needs at least 2 frames");
  const auto& v = embeddings.values();
  for (int64_t t = 0; t < T; ++t) {
    double n = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double x = v[static_cast<size_t>(t * d + j)];
      n += x * x;
    }
    if (n == 0.0) throw std::domain_error("framewise_clip_similarity: zero-norm embedding row");
  }

  double acc = 0;
  for (int64_t t = 1; t < T; ++t) {
    acc += 0.5 * (row_cosine(v, d, 0, t) + row_cosine(v, d, t - 1, t));
  }
  return acc / static_cast<double>(T - 1);
}

// ---------------------------------------------------------------------------
// evaluation protocol

namespace {

// One pooled clip embedding per listed video: a random clip_len window of
// its [L,d] series, averaged over the window.
Tensor sample_clip_embeddings(const std::filesystem::path& dir, const EvalConfig& cfg, Rng& rng) {
  const Manifest manifest = read_manifest(dir / "manifest.json");
  const int64_t available = static_cast<int64_t>(manifest.items.size());
  if (available < cfg.n) {
    throw std::invalid_argument("eval_protocol: " + dir.string() + " has " + std::to_string(available) +
                                " videos, fewer than requested n=" + std::to_string(cfg.n));
  }

  // choose which videos contribute
  std::vector<int64_t> order(static_cast<size_t>(available));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int64_t> chosen;
  if (cfg.class_stratified) {
    // proportional allocation, largest remainders, then per-class shuffle
    std::map<int, std::vector<int64_t>> by_class;
    for (int64_t i = 0; i < available; ++i) by_class[manifest.items[static_cast<size_t>(i)].class_id].push_back(i);
    std::vector<std::pair<double, int>> remainders;
    std::map<int, int64_t> quota;
    int64_t assigned = 0;
    for (const auto& [cls, members] : by_class) {
      const double share = static_cast<double>(cfg.n) * static_cast<double>(members.size()) /
                           static_cast<double>(available);
      quota[cls] = static_cast<int64_t>(std::floor(share));
      assigned += quota[cls];
      remainders.emplace_back(share - std::floor(share), cls);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t i = 0; assigned < cfg.n && i < remainders.size(); ++i, ++assigned) {
      quota[remainders[i].second]++;
    }
    for (auto& [cls, members] : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      const int64_t take = std::min<int64_t>(quota[cls], static_cast<int64_t>(members.size()));
      chosen.insert(chosen.end(), members.begin(), members.begin() + take);
    }
    std::sort(chosen.begin(), chosen.end());
  } else {
    std::shuffle(order.begin(), order.end(), rng);
    chosen.assign(order.begin(), order.begin() + cfg.n);
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<double> pooled;
  int64_t d = -1;
  for (int64_t idx : chosen) {
    const Tensor series = read_tensor(dir / manifest.items[static_cast<size_t>(idx)].path);
    if (series.rank() != 2) {
      throw std::invalid_argument("eval_protocol: embedding file must be [L,d]: " +
                                  manifest.items[static_cast<size_t>(idx)].path);
    }
    const int64_t L = series.dim(0);
    if (d < 0) d = series.dim(1);
    if (series.dim(1) != d) throw std::invalid_argument("eval_protocol: embedding dims differ across files");
    if (L < cfg.clip_len) {
      throw std::invalid_argument("eval_protocol: series shorter than clip_len in " +
                                  manifest.items[static_cast<size_t>(idx)].path);
    }
    std::uniform_int_distribution<int64_t> start_d(0, L - cfg.clip_len);
    const int64_t start = start_d(rng);
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0;
      for (int64_t t = 0; t < cfg.clip_len; ++t) {
        acc += series.values()[static_cast<size_t>((start + t) * d + j)];
      }
      pooled.push_back(acc / static_cast<double>(cfg.clip_len));
    }
  }
  return Tensor({static_cast<int64_t>(chosen.size()), d}, std::move(pooled));
}

}  // namespace

EvalReport eval_protocol(const std::filesystem::path& real_dir,
                         const std::filesystem::path& fake_dir, const EvalConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("eval_protocol: n must be >= 2");
  if (cfg.clip_len < 1) throw std::invalid_argument("eval_protocol: clip_len must be >= 1");
  // Both sides draw from identically-derived streams so identical inputs
  // produce identical samples (real == fake must give exactly 0).
  Rng real_rng = make_rng(cfg.seed, 0x73616d70);
  Rng fake_rng = make_rng(cfg.seed, 0x73616d70);
  const Tensor real = sample_clip_embeddings(real_dir, cfg, real_rng);
  const Tensor fake = sample_clip_embeddings(fake_dir, cfg, fake_rng);
  if (real.dim(1) != fake.dim(1)) {
    throw std::invalid_argument("eval_protocol: real/fake embedding dims differ");
  }

  EvalReport rep;
  rep.fvd = frechet_distance(gaussian_stats(real), gaussian_stats(fake));
  rep.n = cfg.n;
  rep.clip_len = cfg.clip_len;
  rep.seed = cfg.seed;
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["fvd"] = fvd;
  if (fid) j["fid"] = *fid;
  if (is) j["is"] = *is;
  if (clip_sim) j["clip_sim"] = *clip_sim;
  j["n"] = n;
  j["clip_len"] = clip_len;
  j["seed"] = seed;
  return j.dump(2);
}

}  // namespace a4g
