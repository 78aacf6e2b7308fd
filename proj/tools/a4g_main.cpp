#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "a4g/ablation.hpp"
#include "a4g/analysis.hpp"
#include "a4g/config.hpp"
#include "a4g/genmetrics.hpp"
#include "a4g/io.hpp"
#include "a4g/sampling.hpp"
#include "a4g/training.hpp"
#include "a4g/vdit.hpp"

#ifndef A4G_VERSION
#define A4G_VERSION "v0.0.0-unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::string config_path;
  uint64_t seed = 0;
  fs::path out_dir;
  std::string started;
};

void finish_run_manifest(const RunManifest& rm) {
  const fs::path dir = rm.out_dir.empty() ? fs::path(".") : rm.out_dir;
  fs::create_directories(dir);
  ordered_json j{{"command", rm.command},     {"config", rm.config_path},
                 {"seed", rm.seed},           {"out_dir", dir.string()},
                 {"version", A4G_VERSION},    {"started", rm.started},
                 {"finished", iso_now()}};
  std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
  if (!out) throw a4g::IoError("cannot write run manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_report(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw a4g::IoError("cannot write report: " + path);
  return out;
}

// Feature inputs: a single tensor file or a directory with a manifest.
std::vector<a4g::FeatureMap> load_feature_inputs(const fs::path& in) {
  std::vector<a4g::FeatureMap> maps;
  if (fs::is_directory(in)) {
    const a4g::Manifest m = a4g::read_manifest(in / "manifest.json");
    for (const auto& item : m.items) {
      maps.push_back(a4g::FeatureMap::from_tensor(a4g::read_tensor(in / item.path)));
    }
  } else {
    maps.push_back(a4g::FeatureMap::from_tensor(a4g::read_tensor(in)));
  }
  if (maps.empty()) throw a4g::ConfigError("no feature inputs found in " + in.string());
  return maps;
}

a4g::ParamMap train_extras(const a4g::TrainResult& result, const a4g::TrainConfig& tcfg) {
  a4g::ParamMap extras = result.head;
  extras.emplace("opt.step", a4g::Tensor::scalar(static_cast<double>(result.opt.step)));
  for (const auto& [name, m] : result.opt.m) {
    extras.emplace("opt.m." + name, a4g::Tensor({static_cast<int64_t>(m.size())}, m));
  }
  for (const auto& [name, v] : result.opt.v) {
    extras.emplace("opt.v." + name, a4g::Tensor({static_cast<int64_t>(v.size())}, v));
  }
  extras.emplace("meta.objective",
                 a4g::Tensor::scalar(tcfg.objective == a4g::Objective::Flow ? 1.0 : 0.0));
  extras.emplace("meta.t_steps", a4g::Tensor::scalar(static_cast<double>(tcfg.t_steps)));
  extras.emplace("meta.beta_start", a4g::Tensor::scalar(tcfg.beta_start));
  extras.emplace("meta.beta_end", a4g::Tensor::scalar(tcfg.beta_end));
  return extras;
}

void write_train_log(const fs::path& path, const std::vector<a4g::TrainLogRow>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw a4g::IoError("cannot write log: " + path.string());
  out << "step,denoise,align,total,cosine\n";
  for (const auto& row : log) {
    out << row.step << ',' << fmt_double(row.denoise) << ',' << fmt_double(row.align) << ','
        << fmt_double(row.total) << ',' << fmt_double(row.cosine) << '\n';
  }
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const a4g::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const a4g::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-aligned video diffusion toolkit"};
  app.set_version_flag("--version", A4G_VERSION);
  app.require_subcommand(1);

  std::function<int()> action;

  // ---- dataset ----
  {
    auto* cmd = app.add_subcommand("dataset", "generate a synthetic video dataset");
    auto config_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--config", *config_path, "dataset config JSON")->required();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->callback([&action, config_path, out_dir] {
      action = [config_path, out_dir] {
        return run_guarded([&] {
          const auto cfg = a4g::parse_dataset_config(a4g::load_json_file(*config_path));
          RunManifest rm{"dataset", *config_path, cfg.seed, *out_dir, iso_now()};
          const auto clips = a4g::make_synthetic_dataset(cfg);
          a4g::write_dataset(*out_dir, clips);
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- encode ----
  {
    auto* cmd = app.add_subcommand("encode", "run an oracle encoder over a dataset");
    auto in_dir = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("projection");
    auto seed = std::make_shared<uint64_t>(0);
    auto channels = std::make_shared<int64_t>(8);
    auto stride = std::make_shared<int64_t>(2);
    auto mode = std::make_shared<std::string>("features");
    cmd->add_option("--in", *in_dir, "dataset directory")->required();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->add_option("--encoder", *kind, "lowpass|highpass|projection");
    cmd->add_option("--seed", *seed, "encoder seed");
    cmd->add_option("--channels", *channels, "encoder output channels");
    cmd->add_option("--stride", *stride, "encoder patch stride");
    cmd->add_option("--mode", *mode, "features (maps [T,h,w,c]) or embeddings (series [T,c])");
    cmd->callback([&action, in_dir, out_dir, kind, seed, channels, stride, mode] {
      action = [in_dir, out_dir, kind, seed, channels, stride, mode] {
        return run_guarded([&] {
          a4g::OracleEncoder enc;
          try {
            enc.kind = a4g::encoder_kind_from_string(*kind);
          } catch (const std::invalid_argument& e) {
            throw a4g::ConfigError(e.what());
          }
          enc.seed = *seed;
          enc.out_channels = *channels;
          enc.stride = *stride;
          if (*mode != "features" && *mode != "embeddings") {
            throw a4g::ConfigError("encode: --mode must be features or embeddings");
          }
          RunManifest rm{"encode", "", enc.seed, *out_dir, iso_now()};
          const a4g::Manifest src = a4g::read_manifest(fs::path(*in_dir) / "manifest.json");
          fs::create_directories(*out_dir);
          a4g::Manifest dst;
          for (size_t i = 0; i < src.items.size(); ++i) {
            const a4g::Tensor clip = a4g::read_tensor(fs::path(*in_dir) / src.items[i].path);
            const a4g::FeatureMap fm = a4g::encode(enc, clip);
            char name[32];
            if (*mode == "features") {
              std::snprintf(name, sizeof(name), "feat_%04zu.a4gt", i);
              a4g::write_tensor(fs::path(*out_dir) / name, fm.values);
            } else {
              std::snprintf(name, sizeof(name), "emb_%04zu.a4gt", i);
              a4g::write_tensor(fs::path(*out_dir) / name, a4g::framewise_mean_embedding(fm));
            }
            dst.items.push_back(a4g::ManifestItem{name, src.items[i].class_id, -1});
          }
          a4g::write_manifest(fs::path(*out_dir) / "manifest.json", dst);
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- train ----
  {
    auto* cmd = app.add_subcommand("train", "train a model per Algorithm-style loop");
    auto config_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--config", *config_path, "train config JSON")->required();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->callback([&action, config_path, out_dir] {
      action = [config_path, out_dir] {
        return run_guarded([&] {
          const fs::path cfg_file(*config_path);
          const auto bundle = a4g::parse_train_bundle(a4g::load_json_file(cfg_file),
                                                      cfg_file.parent_path());
          RunManifest rm{"train", *config_path, bundle.train.seed, *out_dir, iso_now()};
          const auto dataset = a4g::load_dataset(bundle.dataset_dir);
          fs::create_directories(*out_dir);

          const a4g::TrainConfig& tcfg = bundle.train;
          a4g::CheckpointHook hook = [&](int64_t step, const a4g::VDiTModel& model,
                                         const a4g::ParamMap& head) {
            if (step == tcfg.steps) return;  // final checkpoint written after the loop
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_%06lld", static_cast<long long>(step));
            a4g::ParamMap extras = head;
            a4g::save_checkpoint(fs::path(*out_dir) / name, model, extras);
          };
          const a4g::TrainResult result = a4g::train(bundle.model, tcfg, dataset, hook);

          write_train_log(fs::path(*out_dir) / "log.csv", result.log);
          a4g::save_checkpoint(fs::path(*out_dir) / "ckpt_final", result.model,
                               train_extras(result, tcfg));
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- sample ----
  {
    auto* cmd = app.add_subcommand("sample", "generate clips from a checkpoint");
    auto ckpt_dir = std::make_shared<std::string>();
    auto config_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--ckpt", *ckpt_dir, "checkpoint directory")->required();
    cmd->add_option("--config", *config_path, "sampler config JSON")->required();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->callback([&action, ckpt_dir, config_path, out_dir] {
      action = [ckpt_dir, config_path, out_dir] {
        return run_guarded([&] {
          auto gen = a4g::parse_sample_config(a4g::load_json_file(*config_path));
          const a4g::Checkpoint ck = a4g::load_checkpoint(*ckpt_dir);
          // checkpoints trained here carry their objective; reject a
          // mismatched sampler family instead of silently mis-sampling
          const auto meta = ck.extras.find("meta.objective");
          if (meta != ck.extras.end()) {
            const a4g::Objective trained =
                meta->second.value() == 1.0 ? a4g::Objective::Flow : a4g::Objective::Diffusion;
            if (trained != gen.objective) {
              throw a4g::ConfigError("sampler kind does not match the checkpoint's objective (" +
                                     a4g::to_string(trained) + ")");
            }
            if (gen.objective == a4g::Objective::Diffusion) {
              gen.t_steps = static_cast<int64_t>(ck.extras.at("meta.t_steps").value());
              gen.beta_start = ck.extras.at("meta.beta_start").value();
              gen.beta_end = ck.extras.at("meta.beta_end").value();
            }
          }
          RunManifest rm{"sample", *config_path, gen.sampler.seed, *out_dir, iso_now()};
          a4g::generate_batch(ck.model, gen, *out_dir);
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- analyze ----
  {
    auto* cmd = app.add_subcommand("analyze", "feature analyses over encoded inputs");
    cmd->require_subcommand(1);

    auto in_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto ks = std::make_shared<std::string>("2,4,8");
    auto seed = std::make_shared<uint64_t>(0);
    auto aggregate = std::make_shared<std::string>("mean");
    auto eps = std::make_shared<double>(1e-8);
    auto dims = std::make_shared<int64_t>(3);

    auto* iicr_cmd = cmd->add_subcommand("iicr", "IICR sweep over k");
    iicr_cmd->add_option("--in", *in_path, "feature file or directory")->required();
    iicr_cmd->add_option("--out", *out_dir, "output directory")->required();
    iicr_cmd->add_option("--k", *ks, "comma-separated cluster counts");
    iicr_cmd->add_option("--seed", *seed, "clustering seed");
    iicr_cmd->add_option("--aggregate", *aggregate, "mean|per-video");
    iicr_cmd->callback([&action, in_path, out_dir, ks, seed, aggregate] {
      action = [in_path, out_dir, ks, seed, aggregate] {
        return run_guarded([&] {
          if (*aggregate != "mean" && *aggregate != "per-video") {
            throw a4g::ConfigError("analyze iicr: --aggregate must be mean or per-video");
          }
          std::vector<int> kvals;
          {
            std::stringstream ss(*ks);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
              try {
                kvals.push_back(std::stoi(tok));
              } catch (const std::exception&) {
                throw a4g::ConfigError("analyze iicr: bad k value '" + tok + "'");
              }
            }
            if (kvals.empty()) throw a4g::ConfigError("analyze iicr: empty k list");
          }
          RunManifest rm{"analyze iicr", *in_path, *seed, *out_dir, iso_now()};
          const auto maps = load_feature_inputs(*in_path);
          fs::create_directories(*out_dir);
          std::ofstream csv(fs::path(*out_dir) / "iicr.csv", std::ios::trunc);
          if (*aggregate == "mean") {
            csv << "k,iicr\n";
            for (int k : kvals) {
              double acc = 0;
              for (const auto& fm : maps) acc += a4g::iicr(fm, k, *seed).ratio();
              csv << k << ',' << fmt_double(acc / static_cast<double>(maps.size())) << '\n';
            }
          } else {
            csv << "k,video,iicr\n";
            for (int k : kvals) {
              for (size_t v = 0; v < maps.size(); ++v) {
                csv << k << ',' << v << ',' << fmt_double(a4g::iicr(maps[v], k, *seed).ratio())
                    << '\n';
              }
            }
          }
          finish_run_manifest(rm);
        });
      };
    });

    auto* freq_cmd = cmd->add_subcommand("freq", "frequency-gap report");
    freq_cmd->add_option("--in", *in_path, "feature file or directory")->required();
    freq_cmd->add_option("--out", *out_dir, "output directory")->required();
    freq_cmd->add_option("--eps", *eps, "log-magnitude epsilon");
    freq_cmd->callback([&action, in_path, out_dir, eps] {
      action = [in_path, out_dir, eps] {
        return run_guarded([&] {
          RunManifest rm{"analyze freq", *in_path, 0, *out_dir, iso_now()};
          const auto maps = load_feature_inputs(*in_path);
          fs::create_directories(*out_dir);
          std::ofstream csv(fs::path(*out_dir) / "freq.csv", std::ios::trunc);
          csv << "video,dc_log,hf_mean,delta_freq\n";
          double acc = 0;
          for (size_t v = 0; v < maps.size(); ++v) {
            const auto rep = a4g::frequency_gap(maps[v], *eps);
            acc += rep.delta_freq;
            csv << v << ',' << fmt_double(rep.dc_log) << ',' << fmt_double(rep.hf_mean) << ','
                << fmt_double(rep.delta_freq) << '\n';
          }
          std::ofstream summary(fs::path(*out_dir) / "freq.json", std::ios::trunc);
          summary << ordered_json{{"mean_delta_freq", acc / static_cast<double>(maps.size())},
                                  {"videos", maps.size()}}
                         .dump(2)
                  << '\n';
          finish_run_manifest(rm);
        });
      };
    });

    auto* pca_cmd = cmd->add_subcommand("pca", "PCA color export per frame");
    pca_cmd->add_option("--in", *in_path, "feature file or directory")->required();
    pca_cmd->add_option("--out", *out_dir, "output directory")->required();
    pca_cmd->add_option("--dims", *dims, "number of components (3 for ppm export)");
    pca_cmd->callback([&action, in_path, out_dir, dims] {
      action = [in_path, out_dir, dims] {
        return run_guarded([&] {
          RunManifest rm{"analyze pca", *in_path, 0, *out_dir, iso_now()};
          const auto maps = load_feature_inputs(*in_path);
          fs::create_directories(*out_dir);
          for (size_t v = 0; v < maps.size(); ++v) {
            const auto pca = a4g::pca_project(maps[v], static_cast<int>(*dims));
            fs::path dir = *out_dir;
            if (maps.size() > 1) {
              char sub[32];
              std::snprintf(sub, sizeof(sub), "video_%04zu", v);
              dir /= sub;
            }
            a4g::export_pca_ppm(pca, dir);
          }
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- eval ----
  {
    auto* cmd = app.add_subcommand("eval", "evaluation metrics over embeddings");
    cmd->require_subcommand(1);

    auto real_dir = std::make_shared<std::string>();
    auto fake_dir = std::make_shared<std::string>();
    auto config_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto probs_path = std::make_shared<std::string>();
    auto with_fid = std::make_shared<bool>(false);

    auto* fvd_cmd = cmd->add_subcommand("fvd", "Frechet distance over clip embeddings");
    fvd_cmd->add_option("--real", *real_dir, "real embeddings directory")->required();
    fvd_cmd->add_option("--fake", *fake_dir, "generated embeddings directory")->required();
    fvd_cmd->add_option("--config", *config_path, "eval config JSON");
    fvd_cmd->add_option("--out", *out_path, "report JSON path")->required();
    fvd_cmd->add_flag("--fid", *with_fid, "add a clip_len=1 frame-protocol pass as fid");
    fvd_cmd->callback([&action, real_dir, fake_dir, config_path, out_path, with_fid] {
      action = [real_dir, fake_dir, config_path, out_path, with_fid] {
        return run_guarded([&] {
          a4g::EvalConfig cfg;
          if (!config_path->empty()) cfg = a4g::parse_eval_config(a4g::load_json_file(*config_path));
          RunManifest rm{"eval fvd", *config_path, cfg.seed, fs::path(*out_path).parent_path(),
                         iso_now()};
          auto rep = a4g::eval_protocol(*real_dir, *fake_dir, cfg);
          if (*with_fid) {
            a4g::EvalConfig frame_cfg = cfg;
            frame_cfg.clip_len = 1;
            rep.fid = a4g::eval_protocol(*real_dir, *fake_dir, frame_cfg).fvd;
          }
          std::ofstream out = open_report(*out_path);
          out << rep.to_json() << '\n';
          finish_run_manifest(rm);
        });
      };
    });

    auto* is_cmd = cmd->add_subcommand("is", "inception score from a probability matrix");
    is_cmd->add_option("--probs", *probs_path, "[n,C] probability tensor file")->required();
    is_cmd->add_option("--config", *config_path, "eval config JSON");
    is_cmd->add_option("--out", *out_path, "report JSON path")->required();
    is_cmd->callback([&action, probs_path, config_path, out_path] {
      action = [probs_path, config_path, out_path] {
        return run_guarded([&] {
          a4g::EvalConfig cfg;
          if (!config_path->empty()) cfg = a4g::parse_eval_config(a4g::load_json_file(*config_path));
          RunManifest rm{"eval is", *config_path, cfg.seed, fs::path(*out_path).parent_path(),
                         iso_now()};
          const auto pm = a4g::ProbMatrix::from_tensor(a4g::read_tensor(*probs_path));
          ordered_json j{{"is", a4g::inception_score(pm)},
                         {"n", pm.probs.dim(0)},
                         {"classes", pm.probs.dim(1)},
                         {"seed", cfg.seed}};
          std::ofstream out = open_report(*out_path);
          out << j.dump(2) << '\n';
          finish_run_manifest(rm);
        });
      };
    });

    auto* clip_cmd = cmd->add_subcommand("clipsim", "frame-wise similarity over embeddings");
    clip_cmd->add_option("--fake", *fake_dir, "per-video embedding directory")->required();
    clip_cmd->add_option("--config", *config_path, "eval config JSON");
    clip_cmd->add_option("--out", *out_path, "report JSON path")->required();
    clip_cmd->callback([&action, fake_dir, config_path, out_path] {
      action = [fake_dir, config_path, out_path] {
        return run_guarded([&] {
          a4g::EvalConfig cfg;
          if (!config_path->empty()) cfg = a4g::parse_eval_config(a4g::load_json_file(*config_path));
          RunManifest rm{"eval clipsim", *config_path, cfg.seed,
                         fs::path(*out_path).parent_path(), iso_now()};
          const a4g::Manifest m = a4g::read_manifest(fs::path(*fake_dir) / "manifest.json");
          if (m.items.empty()) throw a4g::ConfigError("eval clipsim: empty manifest");
          double acc = 0;
          for (const auto& item : m.items) {
            acc += a4g::framewise_clip_similarity(a4g::read_tensor(fs::path(*fake_dir) / item.path));
          }
          ordered_json j{{"clip_sim", acc / static_cast<double>(m.items.size())},
                         {"n", m.items.size()},
                         {"seed", cfg.seed}};
          std::ofstream out = open_report(*out_path);
          out << j.dump(2) << '\n';
          finish_run_manifest(rm);
        });
      };
    });
  }

  // ---- ablate ----
  {
    auto* cmd = app.add_subcommand("ablate", "run the alignment ablation grid");
    auto config_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--config", *config_path, "ablation config JSON")->required();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->callback([&action, config_path, out_dir] {
      action = [config_path, out_dir] {
        return run_guarded([&] {
          const fs::path cfg_file(*config_path);
          const json j = a4g::load_json_file(cfg_file);
          const auto bundle = a4g::parse_train_bundle(j, cfg_file.parent_path());
          std::vector<int64_t> depths;
          if (j.contains("depths")) {
            for (const auto& d : j["depths"]) depths.push_back(d.get<int64_t>());
          }
          RunManifest rm{"ablate", *config_path, bundle.train.seed, *out_dir, iso_now()};
          const auto dataset = a4g::load_dataset(bundle.dataset_dir);
          const auto result = a4g::run_ablation_grid(bundle.model, bundle.train, dataset, depths);
          fs::create_directories(*out_dir);
          std::ofstream csv(fs::path(*out_dir) / "ablation.csv", std::ios::trunc);
          if (!csv) throw a4g::IoError("cannot write ablation.csv");
          csv << result.csv;
          finish_run_manifest(rm);
        });
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are exit 2; --help/--version stay 0
  }
  return action ? action() : 2;
}
