#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgan/evaluation.hpp"
#include "sgan/networks.hpp"
#include "sgan/phantom.hpp"
#include "sgan/steerable.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sgan;

namespace {

// JSON config file with flag overrides: config supplies a value only for
// options the user did not pass on the command line.
void apply_config(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream f(config_path);
  if (!f) throw std::runtime_error("cannot open config file: " + config_path);
  json cfg = json::parse(f, nullptr, false);
  if (cfg.is_discarded()) {
    throw std::runtime_error("config file is not valid JSON: " + config_path);
  }
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw std::runtime_error("config key not recognized by this command: " +
                               key);
    }
    if (opt->count() > 0) continue;  // flags win
    std::string text =
        value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

void write_run_config(const fs::path& out_dir, const json& resolved) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "run_config.json");
  f << resolved.dump(2) << "\n";
}

json phantom_params_json(const PhantomParams& p) {
  return {{"size", p.size},
          {"min_vessels", p.min_vessels},
          {"max_vessels", p.max_vessels},
          {"min_width", p.min_width},
          {"max_width", p.max_width},
          {"tissue_blob_count", p.tissue_blob_count},
          {"noise_std", p.noise_std},
          {"seed", p.seed}};
}

// --- gen-data ----------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int n_train = 200;
  int n_test = 20;
  uint64_t seed = 1;
  int size = 64;
  double noise_std = 0.02;
  bool overwrite = false;
};

int run_gen_data(const GenDataArgs& a) {
  PhantomParams params;
  params.size = a.size;
  params.seed = a.seed;
  params.noise_std = a.noise_std;
  DatasetManifest manifest =
      build_dataset(params, a.n_train, a.n_test, a.out, a.overwrite);
  write_run_config(a.out, json{{"command", "gen-data"},
                               {"out", a.out},
                               {"train", a.n_train},
                               {"test", a.n_test},
                               {"params", phantom_params_json(params)}});
  std::cout << "wrote " << manifest.train.size() << " train + "
            << manifest.test.size() << " test samples to " << a.out << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string mode = "sgan";
  std::string resume;
  int epochs = 50;
  int decay_start = 30;
  uint64_t seed = 1;
  int batch_size = 4;
  int base_width = 64;
  int n_residual_blocks = 9;
  int d_strided = 3;
  double learning_rate = 2e-4;
  int checkpoint_every = 10;
};

std::vector<SamplePair> load_split(const std::string& dir,
                                   const std::vector<std::string>& stems) {
  std::vector<SamplePair> out;
  out.reserve(stems.size());
  for (const auto& stem : stems) out.push_back(read_sample(dir, stem));
  return out;
}

int run_train(const TrainArgs& a) {
  if (a.mode != "baseline" && a.mode != "sgan") {
    std::cerr << "train: --mode must be 'baseline' or 'sgan', got '" << a.mode
              << "'\n";
    return 2;
  }
  DatasetManifest manifest = read_manifest(a.data);
  std::vector<SamplePair> train_data = load_split(a.data, manifest.train);

  LossWeights weights;
  if (a.mode == "baseline") weights.lambda_steer = 0.0;

  TrainConfig tc;
  tc.learning_rate = a.learning_rate;
  tc.total_epochs = a.epochs;
  tc.decay_start_epoch = std::min(a.decay_start, a.epochs);
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;

  GeneratorConfig gc;
  gc.base_width = a.base_width;
  gc.n_residual_blocks = a.n_residual_blocks;
  DiscriminatorConfig dc;
  dc.base_width = a.base_width;
  dc.n_strided = a.d_strided;

  TrainState state;
  if (!a.resume.empty()) {
    state = checkpoint_load(a.resume);
    if (state.epochs_completed >= a.epochs) {
      std::cerr << "train: checkpoint already has " << state.epochs_completed
                << " epochs, nothing to do\n";
      return 1;
    }
    // rebase the schedule on the requested horizon
    state.train_cfg.total_epochs = a.epochs;
    state.train_cfg.decay_start_epoch = std::min(a.decay_start, a.epochs);
  } else {
    std::vector<Image> t1s, t2s;
    for (const auto& s : train_data) {
      t1s.push_back(s.t1);
      t2s.push_back(s.t2);
    }
    InputNormalization norm;
    norm.t1 = normalize_volume(t1s);
    norm.t2 = normalize_volume(t2s);
    state = make_train_state(gc, dc, tc, weights, norm);
  }

  fs::create_directories(a.out);
  write_run_config(
      a.out,
      json{{"command", "train"},
           {"data", a.data},
           {"mode", a.mode},
           {"epochs", a.epochs},
           {"decay_start", state.train_cfg.decay_start_epoch},
           {"seed", state.train_cfg.seed},
           {"batch_size", state.train_cfg.batch_size},
           {"base_width", state.g_cfg.base_width},
           {"n_residual_blocks", state.g_cfg.n_residual_blocks},
           {"learning_rate", state.train_cfg.learning_rate},
           {"lambda_adv", state.weights.lambda_adv},
           {"lambda_rec", state.weights.lambda_rec},
           {"lambda_steer", state.weights.lambda_steer},
           {"resume", a.resume}});

  FilterBank bank = build_filter_bank();
  const fs::path loss_csv = fs::path(a.out) / "loss.csv";
  const bool fresh_csv = a.resume.empty() || !fs::exists(loss_csv);
  std::ofstream csv(loss_csv, fresh_csv ? std::ios::trunc : std::ios::app);
  if (fresh_csv) csv << "epoch,lr,d_loss,g_adv,g_rec,g_steer,g_total\n";
  csv.precision(17);

  for (int epoch = state.epochs_completed + 1; epoch <= a.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, state.train_cfg);
    StepLosses l = train_epoch(state, train_data, bank, epoch);
    csv << epoch << "," << lr << "," << l.d_loss << "," << l.g_adv << ","
        << l.g_rec << "," << l.g_steer << "," << l.g_total << "\n";
    csv.flush();
    std::cout << "epoch " << epoch << "/" << a.epochs << "  d " << l.d_loss
              << "  g " << l.g_total << "  rec " << l.g_rec << std::endl;
    if (a.checkpoint_every > 0 && epoch % a.checkpoint_every == 0 &&
        epoch != a.epochs) {
      checkpoint_save(state, (fs::path(a.out) /
                              ("ckpt_epoch" + std::to_string(epoch) + ".bin"))
                                 .string());
    }
  }
  checkpoint_save(state, (fs::path(a.out) / "checkpoint.bin").string());
  return 0;
}

// --- synthesize ----------------------------------------------------------------

struct SynthArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
};

int run_synthesize(const SynthArgs& a) {
  TrainState state = checkpoint_load(a.checkpoint);
  fs::create_directories(a.out);
  write_run_config(a.out, json{{"command", "synthesize"},
                               {"checkpoint", a.checkpoint},
                               {"input", a.input}});

  // every *_t1.pgm with a matching *_t2.pgm forms an input pair
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(a.input)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_t1.pgm";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) {
    std::cerr << "synthesize: no *_t1.pgm inputs in " << a.input << "\n";
    return 1;
  }

  int warnings = 0;
  int written = 0;
  for (const auto& stem : stems) {
    const fs::path t2_path = fs::path(a.input) / (stem + "_t2.pgm");
    if (!fs::exists(t2_path)) {
      std::cerr << "warning: " << stem << " has no _t2.pgm, skipped\n";
      ++warnings;
      continue;
    }
    SamplePair pair;
    pair.t1 = read_pgm16((fs::path(a.input) / (stem + "_t1.pgm")).string());
    pair.t2 = read_pgm16(t2_path.string());
    Tensor x = make_input_batch({&pair}, state.norm);
    Tensor y = state.generator.forward(x, BnMode::Train);
    Image out = target_to_image(y, 0);
    write_pgm16((fs::path(a.out) / (stem + "_mra_gen.pgm")).string(), out);
    ++written;
  }
  std::cout << "synthesized " << written << " images";
  if (warnings > 0) std::cout << " (" << warnings << " warnings)";
  std::cout << "\n";
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string generated;
  std::string reference;
  std::string out;
  double threshold = 0.15;
};

int run_eval(const EvalArgs& a) {
  SegmentationParams params;
  params.threshold = a.threshold;
  EvalReport report = evaluate_test_set(a.generated, a.reference, params);

  fs::create_directories(a.out);
  write_run_config(a.out, json{{"command", "eval"},
                               {"generated", a.generated},
                               {"reference", a.reference},
                               {"seg_threshold", a.threshold}});
  write_report_json(report, (fs::path(a.out) / "report.json").string());
  write_report_csv(report, (fs::path(a.out) / "report.csv").string());

  std::cout << "pairs:     " << report.pair_count << "\n";
  std::cout << "mean PSNR: " << report.mean_psnr << " dB (std "
            << report.std_psnr << ")\n";
  std::cout << "mean Dice: " << report.mean_dice << " (std " << report.std_dice
            << ")\n";
  if (report.infinite_psnr_count > 0) {
    std::cout << "infinite PSNR: " << report.infinite_psnr_count << "\n";
  }
  if (report.warning_count > 0) {
    std::cout << "warnings:  " << report.warning_count << "\n";
  }
  return 0;
}

// --- dump-filters ----------------------------------------------------------------

struct DumpArgs {
  std::string out;
  int k = 20;
  int size = 5;
  double sigma = 1.0;
};

int run_dump_filters(const DumpArgs& a) {
  FilterBank bank = build_filter_bank(a.k, a.size, a.sigma);
  fs::create_directories(a.out);

  json sidecar = json::array();
  for (int i = 0; i < bank.count(); ++i) {
    auto v = bank.kernels[i].values();
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    const double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    Image img(a.size, a.size);
    for (size_t j = 0; j < v.size(); ++j) img.pixels[j] = (v[j] - lo) * scale;

    char name[32];
    std::snprintf(name, sizeof(name), "filter_%02d.pgm", i);
    write_pgm16((fs::path(a.out) / name).string(), img);
    sidecar.push_back(
        {{"file", name},
         {"orientation", bank.orientations[i]},
         {"kind", bank.kinds[i] == KernelKind::Even ? "even" : "odd"},
         {"sigma", bank.sigma},
         // pixel = value * rescale_scale + rescale_offset inverts the PGM
         {"rescale_scale", hi - lo},
         {"rescale_offset", lo}});
  }
  std::ofstream f(fs::path(a.out) / "filters.json");
  f << sidecar.dump(2) << "\n";
  std::cout << "wrote " << bank.count() << " kernels to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steerable-filter conditional GAN for MRA synthesis"};
  app.require_subcommand(1);

  GenDataArgs gd;
  TrainArgs tr;
  SynthArgs sy;
  EvalArgs ev;
  DumpArgs df;
  std::string config_path;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a phantom dataset");
  gen->add_option("--out", gd.out, "output directory")->required();
  gen->add_option("--train", gd.n_train, "number of training pairs");
  gen->add_option("--test", gd.n_test, "number of test pairs");
  gen->add_option("--seed", gd.seed, "dataset seed");
  gen->add_option("--size", gd.size, "image size (divisible by 8)");
  gen->add_option("--noise-std", gd.noise_std, "additive noise level");
  gen->add_flag("--overwrite", gd.overwrite, "allow a non-empty directory");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", tr.data, "dataset directory")->required();
  train->add_option("--out", tr.out, "run output directory")->required();
  train->add_option("--mode", tr.mode, "baseline | sgan");
  train->add_option("--epochs", tr.epochs, "total epochs");
  train->add_option("--decay-start", tr.decay_start,
                    "epoch after which the learning rate decays");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--batch-size", tr.batch_size, "batch size");
  train->add_option("--base-width", tr.base_width, "first-layer channels");
  train->add_option("--res-blocks", tr.n_residual_blocks, "residual blocks");
  train->add_option("--d-strided", tr.d_strided,
                    "strided layers in the discriminator");
  train->add_option("--lr", tr.learning_rate, "initial learning rate");
  train->add_option("--checkpoint-every", tr.checkpoint_every,
                    "periodic checkpoint interval in epochs (0 = off)");
  train->add_option("--resume", tr.resume, "checkpoint to continue from");

  CLI::App* synth = app.add_subcommand("synthesize", "run the generator");
  synth->add_option("--checkpoint", sy.checkpoint, "trained model")->required();
  synth->add_option("--input", sy.input, "directory of *_t1/_t2 PGM pairs")
      ->required();
  synth->add_option("--out", sy.out, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "score generated images");
  eval->add_option("--generated", ev.generated, "directory of *_mra_gen.pgm")
      ->required();
  eval->add_option("--reference", ev.reference, "directory of *_mra.pgm")
      ->required();
  eval->add_option("--out", ev.out, "report directory")->required();
  eval->add_option("--seg-threshold", ev.threshold, "vesselness threshold");

  CLI::App* dump = app.add_subcommand("dump-filters", "write kernel images");
  dump->add_option("--out", df.out, "output directory")->required();
  dump->add_option("--k", df.k, "number of kernels (even)");
  dump->add_option("--size", df.size, "kernel size (odd)");
  dump->add_option("--sigma", df.sigma, "Gaussian scale");

  for (CLI::App* cmd : {gen, train, synth, eval, dump}) {
    cmd->add_option("--config", config_path,
                    "JSON config file; explicit flags override it");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    apply_config(cmd, config_path);
    if (cmd == gen) return run_gen_data(gd);
    if (cmd == train) return run_train(tr);
    if (cmd == synth) return run_synthesize(sy);
    if (cmd == eval) return run_eval(ev);
    return run_dump_filters(df);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
