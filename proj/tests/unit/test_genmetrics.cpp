#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "a4g/genmetrics.hpp"
#include "a4g/io.hpp"
#include "a4g/rand.hpp"
#include "test_util.hpp"

using namespace a4g;
namespace fs = std::filesystem;

namespace {

GaussianStats diagonal_stats(const std::vector<double>& mu, const std::vector<double>& var) {
  const int64_t d = static_cast<int64_t>(mu.size());
  std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < d; ++i) cov[static_cast<size_t>(i * d + i)] = var[static_cast<size_t>(i)];
  return GaussianStats{Tensor({d}, mu), Tensor({d, d}, cov), 2};
}

// Closed form for diagonal Gaussians; the oracle for frechet_distance.
double diagonal_frechet(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                        const std::vector<double>& mu_b, const std::vector<double>& var_b) {
  double acc = 0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double dm = mu_a[i] - mu_b[i];
    acc += dm * dm + var_a[i] + var_b[i] - 2.0 * std::sqrt(var_a[i] * var_b[i]);
  }
  return acc;
}

}  // namespace

TEST_CASE("gaussian_stats on tiny fixtures") {
  // two points {0, 2} in 1-D: mean 1, unbiased variance 2
  auto s = gaussian_stats(Tensor({2, 1}, {0.0, 2.0}));
  CHECK(s.mean.values()[0] == 1.0);
  CHECK(s.cov.values()[0] == 2.0);
  CHECK(s.n == 2);

  // identical points: zero covariance
  auto z = gaussian_stats(Tensor({3, 2}, {4, 5, 4, 5, 4, 5}));
  for (double v : z.cov.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(gaussian_stats(Tensor({1, 2}, {1, 2})), std::invalid_argument);
}

TEST_CASE("gaussian_stats of seeded standard normal approaches identity") {
  Rng rng = make_rng(100);
  Tensor x = testutil::random_tensor(rng, {1000, 4});
  auto s = gaussian_stats(x);
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      const double expect = i == j ? 1.0 : 0.0;
      CHECK(std::abs(s.cov.values()[static_cast<size_t>(i * 4 + j)] - expect) < 0.2);
    }
  }
}

TEST_CASE("frechet distance basics") {
  auto a = diagonal_stats({0.0}, {1.0});
  auto b = diagonal_stats({1.0}, {1.0});
  CHECK(frechet_distance(a, a) == 0.0);
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(frechet_distance(a, diagonal_stats({0, 0}, {1, 1})), std::invalid_argument);

  // corrupt covariance: significantly negative eigenvalue
  GaussianStats bad{Tensor({1}, {0.0}), Tensor({1, 1}, {-1e-3}), 2};
  CHECK_THROWS_AS(frechet_distance(bad, a), std::invalid_argument);
}

TEST_CASE("frechet matches the diagonal closed form on 100 seeded cases") {
  Rng rng = make_rng(555);
  std::uniform_int_distribution<int64_t> dim_d(1, 8);
  std::uniform_real_distribution<double> mu_d(-2.0, 2.0);
  std::uniform_real_distribution<double> var_d(0.05, 3.0);
  for (int it = 0; it < 100; ++it) {
    const int64_t d = dim_d(rng);
    std::vector<double> mu_a(static_cast<size_t>(d)), mu_b(static_cast<size_t>(d));
    std::vector<double> va(static_cast<size_t>(d)), vb(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) {
      mu_a[static_cast<size_t>(i)] = mu_d(rng);
      mu_b[static_cast<size_t>(i)] = mu_d(rng);
      va[static_cast<size_t>(i)] = var_d(rng);
      vb[static_cast<size_t>(i)] = var_d(rng);
    }
    auto sa = diagonal_stats(mu_a, va);
    auto sb = diagonal_stats(mu_b, vb);
    const double got = frechet_distance(sa, sb);
    const double want = diagonal_frechet(mu_a, va, mu_b, vb);
    CHECK(std::abs(got - want) < 1e-8);
    CHECK(std::abs(frechet_distance(sb, sa) - got) < 1e-8);  // symmetry
    CHECK(got >= 0.0);
  }
}

TEST_CASE("frechet is invariant under a shared orthogonal rotation") {
  Rng rng = make_rng(77);
  Tensor xa = testutil::random_tensor(rng, {60, 5});
  Tensor xb_raw = testutil::random_tensor(rng, {60, 5});
  std::vector<double> shifted = xb_raw.values();
  for (size_t i = 0; i < shifted.size(); ++i) shifted[i] = 1.5 * shifted[i] + 0.3;
  Tensor xb({60, 5}, shifted);

  const double base = frechet_distance(gaussian_stats(xa), gaussian_stats(xb));

  Tensor rot = orthonormal_projection(4242, 5, 5);
  auto rotate = [&](const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (int64_t i = 0; i < 60; ++i) {
      for (int64_t a = 0; a < 5; ++a) {
        double acc = 0;
        for (int64_t b = 0; b < 5; ++b) {
          acc += rot.values()[static_cast<size_t>(a * 5 + b)] * x.values()[static_cast<size_t>(i * 5 + b)];
        }
        out[static_cast<size_t>(i * 5 + a)] = acc;
      }
    }
    return Tensor({60, 5}, out);
  };
  const double rotated = frechet_distance(gaussian_stats(rotate(xa)), gaussian_stats(rotate(xb)));
  CHECK(std::abs(base - rotated) < 1e-6);
}

TEST_CASE("inception score exact cases") {
  // all rows uniform -> exactly 1
  auto uniform = ProbMatrix::from_tensor(Tensor::full({6, 4}, 0.25));
  CHECK(inception_score(uniform) == 1.0);

  // balanced one-hot, one row per class -> C; exact equality holds for the
  // C values whose 1/C and log round-trip in IEEE double
  for (int64_t C : {2, 4}) {
    std::vector<double> rows(static_cast<size_t>(C * C), 0.0);
    for (int64_t i = 0; i < C; ++i) rows[static_cast<size_t>(i * C + i)] = 1.0;
    auto onehot = ProbMatrix::from_tensor(Tensor({C, C}, rows));
    CHECK(inception_score(onehot) == static_cast<double>(C));
  }
  for (int64_t C : {3, 5, 6, 8}) {
    std::vector<double> rows(static_cast<size_t>(C * C), 0.0);
    for (int64_t i = 0; i < C; ++i) rows[static_cast<size_t>(i * C + i)] = 1.0;
    auto onehot = ProbMatrix::from_tensor(Tensor({C, C}, rows));
    CHECK(inception_score(onehot) == doctest::Approx(static_cast<double>(C)).epsilon(1e-12));
  }

  // bounds: IS in [1, C]
  Rng rng = make_rng(8);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> m(5 * 3);
    fill_uniform(rng, m, 0.01, 1.0);
    for (int i = 0; i < 5; ++i) {
      double s = 0;
      for (int j = 0; j < 3; ++j) s += m[static_cast<size_t>(i * 3 + j)];
      for (int j = 0; j < 3; ++j) m[static_cast<size_t>(i * 3 + j)] /= s;
    }
    const double is = inception_score(ProbMatrix::from_tensor(Tensor({5, 3}, m)));
    CHECK(is >= 1.0 - 1e-12);
    CHECK(is <= 3.0 + 1e-12);
  }
}

TEST_CASE("inception score matches a brute-force two-loop KL evaluation") {
  Rng rng = make_rng(321);
  const int64_t n = 100, C = 5;
  std::vector<double> m(static_cast<size_t>(n * C));
  fill_uniform(rng, m, 0.001, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < C; ++j) s += m[static_cast<size_t>(i * C + j)];
    for (int64_t j = 0; j < C; ++j) m[static_cast<size_t>(i * C + j)] /= s;
  }
  const double got = inception_score(ProbMatrix::from_tensor(Tensor({n, C}, m)));

  // oracle: direct definition, separate loops
  std::vector<double> q(static_cast<size_t>(C), 0.0);
  for (int64_t j = 0; j < C; ++j) {
    for (int64_t i = 0; i < n; ++i) q[static_cast<size_t>(j)] += m[static_cast<size_t>(i * C + j)];
    q[static_cast<size_t>(j)] /= static_cast<double>(n);
  }
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < C; ++j) {
      const double p = m[static_cast<size_t>(i * C + j)];
      if (p > 0) total += p * std::log(p / q[static_cast<size_t>(j)]);
    }
  }
  const double want = std::exp(total / static_cast<double>(n));
  CHECK(std::abs(got - want) < 1e-10);
}

TEST_CASE("prob matrix validation") {
  CHECK_THROWS_AS(ProbMatrix::from_tensor(Tensor({1, 2}, {0.7, 0.7})), std::domain_error);
  CHECK_THROWS_AS(ProbMatrix::from_tensor(Tensor({1, 2}, {1.4, -0.4})), std::domain_error);
}

TEST_CASE("framewise clip similarity") {
  // identical rows -> 1
  Tensor same({3, 2}, {1, 2, 1, 2, 1, 2});
  CHECK(framewise_clip_similarity(same) == doctest::Approx(1.0).epsilon(1e-12));

  // T=2 orthogonal -> 0
  Tensor orth({2, 2}, {1, 0, 0, 1});
  CHECK(framewise_clip_similarity(orth) == doctest::Approx(0.0).epsilon(1e-12));

  // T=3 hand-computable fixture vs direct evaluation
  Tensor e({3, 2}, {1, 0, 1, 1, 0, 1});
  const double c12 = 1.0 / std::sqrt(2.0);
  const double c13 = 0.0;
  const double c23 = 1.0 / std::sqrt(2.0);
  const double want = 0.5 * (0.5 * (c12 + c12) + 0.5 * (c13 + c23));
  CHECK(framewise_clip_similarity(e) == doctest::Approx(want).epsilon(1e-12));

  // invariance under per-row positive scaling
  Tensor scaled({3, 2}, {2, 0, 0.5, 0.5, 0, 3});
  Tensor unscaled({3, 2}, {1, 0, 1, 1, 0, 1});
  CHECK(framewise_clip_similarity(scaled) ==
        doctest::Approx(framewise_clip_similarity(unscaled)).epsilon(1e-12));

  CHECK_THROWS_AS(framewise_clip_similarity(Tensor({1, 3}, {1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(framewise_clip_similarity(Tensor({2, 2}, {1, 1, 0, 0})), std::domain_error);
}

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("a4g_gm_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Directory of [L,d] embedding series files + manifest.
void write_embedding_dir(const fs::path& dir, uint64_t seed, int64_t count, int64_t len, int64_t d,
                         double mean_shift) {
  fs::create_directories(dir);
  Manifest m;
  Rng rng = make_rng(seed);
  for (int64_t i = 0; i < count; ++i) {
    std::vector<double> v(static_cast<size_t>(len * d));
    fill_normal(rng, v, mean_shift, 1.0);
    char name[32];
    std::snprintf(name, sizeof(name), "emb_%04lld.a4gt", static_cast<long long>(i));
    write_tensor(dir / name, Tensor({len, d}, std::move(v)));
    m.items.push_back(ManifestItem{name, static_cast<int>(i % 3), -1});
  }
  write_manifest(dir / "manifest.json", m);
}

}  // namespace

TEST_CASE("eval protocol gives zero FVD for identical directories") {
  TempDir tmp;
  write_embedding_dir(tmp.path / "real", 1, 12, 16, 4, 0.0);
  EvalConfig cfg;
  cfg.n = 10;
  cfg.clip_len = 8;
  cfg.seed = 3;
  auto rep = eval_protocol(tmp.path / "real", tmp.path / "real", cfg);
  CHECK(rep.fvd < 1e-8);
  CHECK(rep.n == 10);
  CHECK(rep.clip_len == 8);
  CHECK(rep.seed == 3);
}

TEST_CASE("eval protocol separates shifted distributions and is seed-stable") {
  TempDir tmp;
  write_embedding_dir(tmp.path / "real", 1, 16, 12, 4, 0.0);
  write_embedding_dir(tmp.path / "fake", 2, 16, 12, 4, 1.0);

  EvalConfig cfg;
  cfg.n = 12;
  cfg.clip_len = 6;
  cfg.seed = 5;
  auto rep = eval_protocol(tmp.path / "real", tmp.path / "fake", cfg);
  CHECK(rep.fvd > 1.0);  // means differ by ~1 in every dim -> fvd ~ d

  auto rep2 = eval_protocol(tmp.path / "real", tmp.path / "fake", cfg);
  CHECK(rep.fvd == rep2.fvd);  // determinism

  // sampling noise across n: doubling n moves FVD by less than the spread
  // over 5 seeds at the smaller n
  std::vector<double> small_vals;
  for (uint64_t s = 0; s < 5; ++s) {
    EvalConfig c2 = cfg;
    c2.n = 6;
    c2.seed = s;
    small_vals.push_back(eval_protocol(tmp.path / "real", tmp.path / "fake", c2).fvd);
  }
  const auto [lo, hi] = std::minmax_element(small_vals.begin(), small_vals.end());
  const double spread = *hi - *lo;
  EvalConfig c3 = cfg;
  c3.n = 12;
  c3.seed = 0;
  const double big = eval_protocol(tmp.path / "real", tmp.path / "fake", c3).fvd;
  EvalConfig c4 = c3;
  c4.n = 6;
  const double small = eval_protocol(tmp.path / "real", tmp.path / "fake", c4).fvd;
  CHECK(std::abs(big - small) < 2.0 * spread + 1e-9);

  // errors
  EvalConfig over = cfg;
  over.n = 100;
  CHECK_THROWS_AS(eval_protocol(tmp.path / "real", tmp.path / "fake", over), std::invalid_argument);
}

TEST_CASE("eval protocol class-stratified sampling respects proportions") {
  TempDir tmp;
  write_embedding_dir(tmp.path / "real", 7, 18, 8, 3, 0.0);  // classes 0,1,2 x6 each
  EvalConfig cfg;
  cfg.n = 9;
  cfg.clip_len = 4;
  cfg.seed = 11;
  cfg.class_stratified = true;
  auto rep = eval_protocol(tmp.path / "real", tmp.path / "real", cfg);
  CHECK(rep.fvd < 1e-8);  // identical dirs stay identical under stratification
}

TEST_CASE("eval report defaults mirror the protocol constants") {
  EvalConfig cfg;
  CHECK(cfg.n == 2048);
  CHECK(cfg.clip_len == 16);
  EvalReport rep;
  rep.fvd = 1.25;
  rep.n = cfg.n;
  rep.clip_len = cfg.clip_len;
  rep.seed = 9;
  const std::string j = rep.to_json();
  CHECK(j.find("\"fvd\": 1.25") != std::string::npos);
  CHECK(j.find("\"n\": 2048") != std::string::npos);
  CHECK(j.find("\"clip_len\": 16") != std::string::npos);
  CHECK(j.find("\"fid\"") == std::string::npos);  // optional fields omitted
}
