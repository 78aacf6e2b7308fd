#include "a4g/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "a4g/rand.hpp"

namespace a4g {

namespace {

constexpr char kMagic[4] = {'A', '4', 'G', 'T'};
constexpr uint16_t kVersion = 1;
constexpr uint64_t kMaxElements = uint64_t{1} << 33;

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  const auto bits = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::string buf;
  buf.reserve(8 + 4 * t.shape().size() + 8 * static_cast<size_t>(t.size()));
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u16(buf, static_cast<uint16_t>(t.rank()));
  for (int64_t d : t.shape()) {
    if (d > static_cast<int64_t>(UINT32_MAX)) throw IoError("write_tensor: dim too large");
    put_u32(buf, static_cast<uint32_t>(d));
  }
  for (double v : t.values()) put_f64(buf, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_tensor: cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write_tensor: write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor: cannot open " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const size_t len = raw.size();

  if (len < 8) throw IoError("read_tensor: truncated header in " + path.string());
  if (std::memcmp(p, kMagic, 4) != 0) throw IoError("read_tensor: bad magic in " + path.string());
  const uint16_t version = get_u16(p + 4);
  if (version != kVersion) {
    throw IoError("read_tensor: unsupported version " + std::to_string(version));
  }
  const uint16_t ndim = get_u16(p + 6);
  const size_t header = 8 + 4 * static_cast<size_t>(ndim);
  if (len < header) throw IoError("read_tensor: truncated dims in " + path.string());

  Shape shape;
  uint64_t count = 1;
  for (uint16_t i = 0; i < ndim; ++i) {
    const uint32_t d = get_u32(p + 8 + 4 * i);
    if (d == 0) throw IoError("read_tensor: zero dim in " + path.string());
    shape.push_back(static_cast<int64_t>(d));
    count *= d;
    if (count > kMaxElements) throw IoError("read_tensor: dims overflow in " + path.string());
  }
  const size_t expected = header + 8 * static_cast<size_t>(count);
  if (len < expected) throw IoError("read_tensor: truncated payload in " + path.string());
  if (len > expected) throw IoError("read_tensor: trailing bytes in " + path.string());

  std::vector<double> values(static_cast<size_t>(count));
  for (size_t i = 0; i < values.size(); ++i) values[i] = get_f64(p + header + 8 * i);
  return Tensor(std::move(shape), std::move(values));
}

// ---------------------------------------------------------------------------
// FeatureMap

FeatureMap FeatureMap::from_tensor(Tensor t) {
  if (t.rank() != 4) throw std::invalid_argument("FeatureMap: expects [T,h,w,c] tensor");
  FeatureMap fm;
  fm.frames = t.dim(0);
  fm.grid_h = t.dim(1);
  fm.grid_w = t.dim(2);
  fm.channels = t.dim(3);
  if (fm.frames < 1 || fm.grid_h < 2 || fm.grid_w < 2) {
    throw std::invalid_argument("FeatureMap: needs T >= 1 and grid >= 2x2");
  }
  fm.values = std::move(t);
  return fm;
}

Tensor FeatureMap::tokens() const {
  return reshape(values, {frames * grid_h * grid_w, channels});
}

// ---------------------------------------------------------------------------
// encoders

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "lowpass") return EncoderKind::Lowpass;
  if (s == "highpass") return EncoderKind::Highpass;
  if (s == "projection") return EncoderKind::Projection;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::Lowpass: return "lowpass";
    case EncoderKind::Highpass: return "highpass";
    case EncoderKind::Projection: return "projection";
  }
  return "?";
}

Tensor orthonormal_projection(uint64_t seed, int64_t out_dim, int64_t in_dim) {
  const int64_t big = std::max(out_dim, in_dim);
  const int64_t small = std::min(out_dim, in_dim);
  Rng rng = make_rng(seed, 0x70726f6a);  // "proj"
  Eigen::MatrixXd g(big, small);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int64_t i = 0; i < big; ++i) {
    for (int64_t j = 0; j < small; ++j) g(i, j) = dist(rng);
  }
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                      Eigen::MatrixXd::Identity(big, small);
  Eigen::MatrixXd p = out_dim <= in_dim ? Eigen::MatrixXd(q.transpose()) : q;
  std::vector<double> values(static_cast<size_t>(out_dim * in_dim));
  for (int64_t i = 0; i < out_dim; ++i) {
    for (int64_t j = 0; j < in_dim; ++j) values[static_cast<size_t>(i * in_dim + j)] = p(i, j);
  }
  return Tensor({out_dim, in_dim}, std::move(values));
}

namespace {

inline double clip_at(const std::vector<double>& v, int64_t H, int64_t W, int64_t C, int64_t t,
                      int64_t y, int64_t x, int64_t c) {
  return v[static_cast<size_t>(((t * H + y) * W + x) * C + c)];
}

// Discrete 5-point Laplacian with periodic wrap.
double laplacian_at(const std::vector<double>& v, int64_t H, int64_t W, int64_t C, int64_t t,
                    int64_t y, int64_t x, int64_t c) {
  const int64_t ym = (y + H - 1) % H, yp = (y + 1) % H;
  const int64_t xm = (x + W - 1) % W, xp = (x + 1) % W;
  return 4.0 * clip_at(v, H, W, C, t, y, x, c) - clip_at(v, H, W, C, t, ym, x, c) -
         clip_at(v, H, W, C, t, yp, x, c) - clip_at(v, H, W, C, t, y, xm, c) -
         clip_at(v, H, W, C, t, y, xp, c);
}

}  // namespace

FeatureMap encode(const OracleEncoder& enc, const Tensor& clip) {
  if (clip.rank() != 4) throw std::invalid_argument("encode: clip must be [T,H,W,C]");
  const int64_t T = clip.dim(0), H = clip.dim(1), W = clip.dim(2), C = clip.dim(3);
  const int64_t s = enc.stride;
  if (s < 1 || H % s != 0 || W % s != 0) {
    throw std::invalid_argument("encode: H,W must be divisible by encoder stride " + std::to_string(s));
  }
  if (enc.out_channels < 1) throw std::invalid_argument("encode: out_channels must be positive");
  const int64_t gh = H / s, gw = W / s;
  const int64_t in_dim = enc.kind == EncoderKind::Projection ? s * s * C : C;
  const Tensor proj = orthonormal_projection(enc.seed, enc.out_channels, in_dim);
  const auto& pv = proj.values();
  const auto& cv = clip.values();

  std::vector<double> out(static_cast<size_t>(T * gh * gw * enc.out_channels), 0.0);
  std::vector<double> patch(static_cast<size_t>(in_dim));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t gy = 0; gy < gh; ++gy) {
      for (int64_t gx = 0; gx < gw; ++gx) {
        // Patch descriptor in R^in_dim by kind.
        switch (enc.kind) {
          case EncoderKind::Lowpass:
            for (int64_t c = 0; c < C; ++c) {
              double acc = 0;
              for (int64_t dy = 0; dy < s; ++dy) {
                for (int64_t dx = 0; dx < s; ++dx) {
                  acc += clip_at(cv, H, W, C, t, gy * s + dy, gx * s + dx, c);
                }
              }
              patch[static_cast<size_t>(c)] = acc / static_cast<double>(s * s);
            }
            break;
          case EncoderKind::Highpass:
            for (int64_t c = 0; c < C; ++c) {
              double acc = 0;
              for (int64_t dy = 0; dy < s; ++dy) {
                for (int64_t dx = 0; dx < s; ++dx) {
                  acc += laplacian_at(cv, H, W, C, t, gy * s + dy, gx * s + dx, c);
                }
              }
              patch[static_cast<size_t>(c)] = acc / static_cast<double>(s * s);
            }
            break;
          case EncoderKind::Projection: {
            int64_t i = 0;
            for (int64_t dy = 0; dy < s; ++dy) {
              for (int64_t dx = 0; dx < s; ++dx) {
                for (int64_t c = 0; c < C; ++c) {
                  patch[static_cast<size_t>(i++)] = clip_at(cv, H, W, C, t, gy * s + dy, gx * s + dx, c);
                }
              }
            }
            break;
          }
        }
        const int64_t base = ((t * gh + gy) * gw + gx) * enc.out_channels;
        for (int64_t o = 0; o < enc.out_channels; ++o) {
          double acc = 0;
          for (int64_t j = 0; j < in_dim; ++j) {
            acc += pv[static_cast<size_t>(o * in_dim + j)] * patch[static_cast<size_t>(j)];
          }
          out[static_cast<size_t>(base + o)] = acc;
        }
      }
    }
  }
  return FeatureMap::from_tensor(Tensor({T, gh, gw, enc.out_channels}, std::move(out)));
}

// ---------------------------------------------------------------------------
// synthetic dataset

MotionKind motion_kind_from_string(const std::string& s) {
  if (s == "static") return MotionKind::Static;
  if (s == "linear") return MotionKind::Linear;
  if (s == "class-conditional") return MotionKind::ClassConditional;
  throw std::invalid_argument("unknown motion kind: " + s);
}

std::string to_string(MotionKind k) {
  switch (k) {
    case MotionKind::Static: return "static";
    case MotionKind::Linear: return "linear";
    case MotionKind::ClassConditional: return "class-conditional";
  }
  return "?";
}

std::vector<SyntheticClip> make_synthetic_dataset(const SyntheticDatasetConfig& cfg) {
  if (cfg.frames < 2 && cfg.motion != MotionKind::Static) {
    throw std::invalid_argument("make_synthetic_dataset: frames must be >= 2");
  }
  if (cfg.frames < 1 || cfg.height < 4 || cfg.width < 4 || cfg.channels < 1 || cfg.n_clips < 0) {
    throw std::invalid_argument("make_synthetic_dataset: degenerate sizes");
  }
  if (cfg.motion == MotionKind::ClassConditional && cfg.num_classes < 1) {
    throw std::invalid_argument("make_synthetic_dataset: class-conditional needs num_classes >= 1");
  }

  const int64_t T = cfg.frames, H = cfg.height, W = cfg.width, C = cfg.channels;
  std::vector<SyntheticClip> clips;
  clips.reserve(static_cast<size_t>(cfg.n_clips));

  for (int64_t i = 0; i < cfg.n_clips; ++i) {
    Rng rng = make_rng(cfg.seed, static_cast<uint64_t>(i));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> amp(0.3, 1.0);
    std::uniform_int_distribution<int64_t> pos_y(0, H - 1);
    std::uniform_int_distribution<int64_t> pos_x(0, W - 1);
    std::uniform_int_distribution<int> dir8(0, 7);

    // Static low-frequency background, one phase pair per clip.
    const double py = phase(rng), px = phase(rng);
    std::vector<double> bg_amp(static_cast<size_t>(C));
    std::vector<double> blob_amp(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) bg_amp[static_cast<size_t>(c)] = amp(rng);
    for (int64_t c = 0; c < C; ++c) {
      blob_amp[static_cast<size_t>(c)] = cfg.blob_amplitude * (0.5 + 0.5 * amp(rng));
    }

    const int64_t cy0 = pos_y(rng), cx0 = pos_x(rng);
    int64_t vy = 0, vx = 0;
    int class_id = 0;
    switch (cfg.motion) {
      case MotionKind::Static: break;
      case MotionKind::Linear: {
        static constexpr int64_t dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
        static constexpr int64_t dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
        const int d = dir8(rng);
        vy = dy[d] * cfg.speed;
        vx = dx[d] * cfg.speed;
        break;
      }
      case MotionKind::ClassConditional: {
        class_id = static_cast<int>(i % cfg.num_classes);
        const double theta = 2.0 * M_PI * static_cast<double>(class_id) /
                             static_cast<double>(cfg.num_classes);
        vy = static_cast<int64_t>(std::llround(std::sin(theta))) * cfg.speed;
        vx = static_cast<int64_t>(std::llround(std::cos(theta))) * cfg.speed;
        if (vy == 0 && vx == 0) vx = cfg.speed;
        break;
      }
    }

    std::vector<double> data(static_cast<size_t>(T * H * W * C));
    const double two_sigma_sq = 2.0 * cfg.blob_sigma * cfg.blob_sigma;
    for (int64_t t = 0; t < T; ++t) {
      const int64_t cy = ((cy0 + t * vy) % H + H) % H;
      const int64_t cx = ((cx0 + t * vx) % W + W) % W;
      for (int64_t y = 0; y < H; ++y) {
        // Toroidal offsets keep the blob shape intact when it wraps.
        const int64_t ry = std::min(std::abs(y - cy), H - std::abs(y - cy));
        for (int64_t x = 0; x < W; ++x) {
          const int64_t rx = std::min(std::abs(x - cx), W - std::abs(x - cx));
          const double blob = std::exp(-static_cast<double>(ry * ry + rx * rx) / two_sigma_sq);
          const double bgy = std::sin(2.0 * M_PI * static_cast<double>(y) / static_cast<double>(H) + py);
          const double bgx = std::cos(2.0 * M_PI * static_cast<double>(x) / static_cast<double>(W) + px);
          for (int64_t c = 0; c < C; ++c) {
            data[static_cast<size_t>(((t * H + y) * W + x) * C + c)] =
                0.5 * bg_amp[static_cast<size_t>(c)] * (bgy + bgx) +
                blob_amp[static_cast<size_t>(c)] * blob;
          }
        }
      }
    }
    clips.push_back(SyntheticClip{Tensor({T, H, W, C}, std::move(data)), class_id});
  }
  return clips;
}

Tensor framewise_mean_embedding(const FeatureMap& fm) {
  return mean(fm.values, {1, 2});
}

// ---------------------------------------------------------------------------
// manifests

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::ordered_json j;
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& it : m.items) {
    nlohmann::ordered_json e;
    e["path"] = it.path;
    e["class_id"] = it.class_id;
    if (it.seed_index >= 0) e["seed_index"] = it.seed_index;
    j["items"].push_back(e);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_manifest: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("read_manifest: invalid JSON in " + path.string() + ": " + e.what());
  }
  Manifest m;
  if (!j.contains("items") || !j["items"].is_array()) {
    throw IoError("read_manifest: missing items array in " + path.string());
  }
  for (const auto& e : j["items"]) {
    ManifestItem it;
    it.path = e.at("path").get<std::string>();
    it.class_id = e.value("class_id", 0);
    it.seed_index = e.value("seed_index", -1);
    m.items.push_back(std::move(it));
  }
  return m;
}

Manifest write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticClip>& clips) {
  std::filesystem::create_directories(dir);
  Manifest m;
  for (size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04zu.a4gt", i);
    write_tensor(dir / name, clips[i].video);
    m.items.push_back(ManifestItem{name, clips[i].class_id, -1});
  }
  write_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace a4g
