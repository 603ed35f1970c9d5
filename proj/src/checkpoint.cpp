#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sgan/networks.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sgan {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'A', 'N'};
constexpr uint32_t kVersion = 1;

json cfg_to_json(const GeneratorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"base_width", c.base_width},
          {"n_downsample", c.n_downsample},
          {"n_residual_blocks", c.n_residual_blocks},
          {"n_upsample", c.n_upsample}};
}

json cfg_to_json(const DiscriminatorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_width", c.base_width},
          {"n_strided", c.n_strided},
          {"n_plain", c.n_plain},
          {"leaky_slope", c.leaky_slope}};
}

json cfg_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"total_epochs", c.total_epochs},
          {"decay_start_epoch", c.decay_start_epoch},
          {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

GeneratorConfig g_cfg_from_json(const json& j) {
  GeneratorConfig c;
  c.in_channels = j.at("in_channels");
  c.out_channels = j.at("out_channels");
  c.base_width = j.at("base_width");
  c.n_downsample = j.at("n_downsample");
  c.n_residual_blocks = j.at("n_residual_blocks");
  c.n_upsample = j.at("n_upsample");
  return c;
}

DiscriminatorConfig d_cfg_from_json(const json& j) {
  DiscriminatorConfig c;
  c.in_channels = j.at("in_channels");
  c.base_width = j.at("base_width");
  c.n_strided = j.at("n_strided");
  c.n_plain = j.at("n_plain");
  c.leaky_slope = j.at("leaky_slope");
  return c;
}

TrainConfig t_cfg_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.total_epochs = j.at("total_epochs");
  c.decay_start_epoch = j.at("decay_start_epoch");
  c.batch_size = j.at("batch_size");
  c.seed = j.at("seed");
  return c;
}

struct BlobEntry {
  std::string name;
  std::vector<int> shape;
  const std::vector<double>* data;
};

// Full list of serialized arrays, in a fixed deterministic order.
std::vector<BlobEntry> collect_blobs(TrainState& state) {
  std::vector<BlobEntry> blobs;
  auto add_params = [&](auto& net, std::vector<AdamState>& opt) {
    auto named = net.named_params();
    for (size_t i = 0; i < named.size(); ++i) {
      auto& [name, t] = named[i];
      blobs.push_back({name, t.shape(), &t.node()->value});
      if (opt[i].first_moment.empty()) {
        opt[i].first_moment.assign(t.size(), 0.0);
        opt[i].second_moment.assign(t.size(), 0.0);
      }
      const int n = static_cast<int>(t.size());
      blobs.push_back({"opt." + name + ".m", {n}, &opt[i].first_moment});
      blobs.push_back({"opt." + name + ".v", {n}, &opt[i].second_moment});
    }
  };
  add_params(state.generator, state.g_opt);
  add_params(state.discriminator, state.d_opt);
  auto add_stats = [&](auto& net) {
    for (auto& [name, stats] : net.named_stats()) {
      const int n = static_cast<int>(stats->mean.size());
      blobs.push_back({"stats." + name + ".mean", {n}, &stats->mean});
      blobs.push_back({"stats." + name + ".var", {n}, &stats->var});
    }
  };
  add_stats(state.generator);
  add_stats(state.discriminator);
  return blobs;
}

// Running-stat buffers are sized lazily; give every BN layer concrete
// buffers before serialization so the manifest is stable.
void materialize_stats(TrainState& state) {
  auto fix = [&](auto& net) {
    auto named = net.named_params();
    auto stats = net.named_stats();
    for (auto& [sname, s] : stats) {
      if (!s->mean.empty()) continue;
      for (auto& [pname, t] : named) {
        if (pname == sname + ".gamma") {
          s->mean.assign(t.size(), 0.0);
          s->var.assign(t.size(), 1.0);
          break;
        }
      }
    }
  };
  fix(state.generator);
  fix(state.discriminator);
}

}  // namespace

void checkpoint_save(TrainState& state, const std::string& path) {
  materialize_stats(state);
  auto blobs = collect_blobs(state);

  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& b : blobs) {
    manifest.push_back(
        {{"name", b.name}, {"shape", b.shape}, {"offset", offset}});
    offset += b.data->size() * sizeof(double);
  }

  json opt_steps_g = json::array(), opt_steps_d = json::array();
  for (const auto& s : state.g_opt) opt_steps_g.push_back(s.step_count);
  for (const auto& s : state.d_opt) opt_steps_d.push_back(s.step_count);
  json stats_init = json::array();
  for (auto& [name, s] : state.generator.named_stats()) {
    if (s->initialized) stats_init.push_back(name);
  }
  for (auto& [name, s] : state.discriminator.named_stats()) {
    if (s->initialized) stats_init.push_back(name);
  }

  json header{
      {"epochs_completed", state.epochs_completed},
      {"g_cfg", cfg_to_json(state.g_cfg)},
      {"d_cfg", cfg_to_json(state.d_cfg)},
      {"train_cfg", cfg_to_json(state.train_cfg)},
      {"weights",
       {{"lambda_adv", state.weights.lambda_adv},
        {"lambda_rec", state.weights.lambda_rec},
        {"lambda_steer", state.weights.lambda_steer}}},
      {"adv_mode", state.adv_mode == AdvMode::NonSaturating ? "non_saturating"
                                                            : "saturating"},
      {"norm",
       {{"t1_mean", state.norm.t1.mean},
        {"t1_std", state.norm.t1.std},
        {"t2_mean", state.norm.t2.mean},
        {"t2_std", state.norm.t2.std}}},
      {"opt_steps_g", opt_steps_g},
      {"opt_steps_d", opt_steps_d},
      {"stats_initialized", stats_init},
      {"manifest", manifest}};

  const std::string header_str = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kMagic, 4);
    const uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const uint64_t hlen = header_str.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header_str.data(), static_cast<std::streamsize>(hlen));
    for (const auto& b : blobs) {
      f.write(reinterpret_cast<const char*>(b.data->data()),
              static_cast<std::streamsize>(b.data->size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
  }
  fs::rename(tmp, path);
}

TrainState checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not an SGAN checkpoint: " + path);
  }
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!f || version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + ": " + path);
  }
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  std::string header_str(hlen, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (f.gcount() != static_cast<std::streamsize>(hlen)) {
    throw std::runtime_error("truncated checkpoint header: " + path);
  }
  json header = json::parse(header_str, nullptr, false);
  if (header.is_discarded()) {
    throw std::runtime_error("corrupt checkpoint header: " + path);
  }

  TrainState state;
  state.g_cfg = g_cfg_from_json(header.at("g_cfg"));
  state.d_cfg = d_cfg_from_json(header.at("d_cfg"));
  state.train_cfg = t_cfg_from_json(header.at("train_cfg"));
  state.weights.lambda_adv = header.at("weights").at("lambda_adv");
  state.weights.lambda_rec = header.at("weights").at("lambda_rec");
  state.weights.lambda_steer = header.at("weights").at("lambda_steer");
  state.adv_mode = header.at("adv_mode") == "saturating"
                       ? AdvMode::Saturating
                       : AdvMode::NonSaturating;
  state.norm.t1 = {header.at("norm").at("t1_mean"),
                   header.at("norm").at("t1_std")};
  state.norm.t2 = {header.at("norm").at("t2_mean"),
                   header.at("norm").at("t2_std")};
  state.epochs_completed = header.at("epochs_completed");

  TrainState fresh = make_train_state(state.g_cfg, state.d_cfg,
                                      state.train_cfg, state.weights,
                                      state.norm);
  fresh.adv_mode = state.adv_mode;
  fresh.epochs_completed = state.epochs_completed;
  materialize_stats(fresh);
  auto blobs = collect_blobs(fresh);

  const json& manifest = header.at("manifest");
  if (manifest.size() != blobs.size()) {
    throw std::runtime_error("checkpoint manifest does not match the "
                             "configured architecture: " + path);
  }
  // read the whole blob section, then validate before applying
  std::string blob_bytes((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  uint64_t expected = 0;
  for (const auto& b : blobs) expected += b.data->size() * sizeof(double);
  if (blob_bytes.size() != expected) {
    throw std::runtime_error("truncated checkpoint data (" +
                             std::to_string(blob_bytes.size()) + " of " +
                             std::to_string(expected) + " bytes): " + path);
  }
  for (size_t i = 0; i < blobs.size(); ++i) {
    const auto& entry = manifest[i];
    if (entry.at("name") != blobs[i].name) {
      throw std::runtime_error("checkpoint manifest mismatch at entry " +
                               std::to_string(i) + ": expected " +
                               blobs[i].name);
    }
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != blobs[i].shape) {
      throw std::runtime_error("checkpoint shape mismatch for " +
                               blobs[i].name);
    }
    const uint64_t off = entry.at("offset");
    auto* dst = const_cast<std::vector<double>*>(blobs[i].data);
    std::memcpy(dst->data(), blob_bytes.data() + off,
                dst->size() * sizeof(double));
  }

  // optimizer step counts and BN initialization flags
  const auto& sg = header.at("opt_steps_g");
  const auto& sd = header.at("opt_steps_d");
  if (sg.size() != fresh.g_opt.size() || sd.size() != fresh.d_opt.size()) {
    throw std::runtime_error("checkpoint optimizer state mismatch: " + path);
  }
  for (size_t i = 0; i < fresh.g_opt.size(); ++i) {
    fresh.g_opt[i].step_count = sg[i];
  }
  for (size_t i = 0; i < fresh.d_opt.size(); ++i) {
    fresh.d_opt[i].step_count = sd[i];
  }
  std::vector<std::string> init_names =
      header.at("stats_initialized").get<std::vector<std::string>>();
  auto mark = [&](auto& net) {
    for (auto& [name, s] : net.named_stats()) {
      s->initialized = std::find(init_names.begin(), init_names.end(), name) !=
                       init_names.end();
    }
  };
  mark(fresh.generator);
  mark(fresh.discriminator);
  return fresh;
}

}  // namespace sgan
