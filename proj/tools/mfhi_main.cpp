// mfhi: synthetic data generation, episodic training, protocol evaluation,
// hyperparameter sweeps and attention dumps behind one binary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfhi/config.hpp"
#include "mfhi/dataset.hpp"
#include "mfhi/recognition.hpp"
#include "mfhi/trainer.hpp"

namespace fs = std::filesystem;
using namespace mfhi;

namespace {

// Exit codes: 0 success, 2 usage, 3 validation, 4 numeric, 5 I/O.
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitIo = 5;

const KvConfig::Schema& schema() {
  static const KvConfig::Schema kSchema = {
      {"gen",
       {"train_identities", "test_identities", "attributes", "channels", "height", "width",
        "images_per_identity", "flip_prob", "noise_scale", "seed", "flavor"}},
      {"train",
       {"mode", "episodes", "identities_per_episode", "shots", "r", "d", "stability", "top_d",
        "hidden", "normalize_attention", "use_attention", "cea_coef", "dcm_coef",
        "learning_rate", "weight_decay", "beta1", "beta2", "adam_eps", "decay_biases", "seed",
        "checkpoint_every"}},
      {"eval", {"protocol", "top"}},
      {"sweep", {"r", "d", "top_d", "seeds", "episodes"}},
      {"dump", {"images"}},
  };
  return kSchema;
}

KvConfig load_config(const std::string& path) {
  if (path.empty()) return KvConfig::parse_string("", schema());
  return KvConfig::parse_file(path, schema());
}

// Seed precedence: explicit flag, then MFHI_SEED, then the config file.
uint64_t resolve_seed(const std::optional<uint64_t>& flag, const KvConfig& config,
                      const std::string& section, uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MFHI_SEED")) {
    try {
      size_t used = 0;
      const uint64_t value = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return value;
    } catch (const std::exception&) {
      throw ConfigError("MFHI_SEED is not an integer: \"" + std::string(env) + "\"");
    }
  }
  return config.get_u64(section, "seed", fallback);
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    try {
      out.push_back(std::stoi(token));
    } catch (const std::exception&) {
      throw ConfigError(what + ": \"" + token + "\" is not an integer");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    try {
      out.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ConfigError(what + ": \"" + token + "\" is not a number");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- gen ------------------------------------------------------------------

struct GenArgs {
  std::string config_path;
  std::string out;
  std::optional<uint64_t> seed;
  bool force = false;
};

SyntheticConfig resolve_gen(const GenArgs& args, std::map<std::string, std::string>* resolved) {
  KvConfig config = load_config(args.config_path);
  SyntheticConfig cfg;
  cfg.train_identities = config.get_int("gen", "train_identities", cfg.train_identities);
  cfg.test_identities = config.get_int("gen", "test_identities", cfg.test_identities);
  cfg.attributes = config.get_int("gen", "attributes", cfg.attributes);
  cfg.channels = config.get_int("gen", "channels", cfg.channels);
  cfg.height = config.get_int("gen", "height", cfg.height);
  cfg.width = config.get_int("gen", "width", cfg.width);
  cfg.images_per_identity = config.get_int("gen", "images_per_identity", cfg.images_per_identity);
  cfg.flip_prob = config.get_double("gen", "flip_prob", cfg.flip_prob);
  cfg.noise_scale = config.get_double("gen", "noise_scale", cfg.noise_scale);
  cfg.flavor = flavor_from_string(config.get_string("gen", "flavor", "face-style"));
  cfg.seed = resolve_seed(args.seed, config, "gen", cfg.seed);
  if (resolved) {
    (*resolved)["gen.train_identities"] = std::to_string(cfg.train_identities);
    (*resolved)["gen.test_identities"] = std::to_string(cfg.test_identities);
    (*resolved)["gen.attributes"] = std::to_string(cfg.attributes);
    (*resolved)["gen.channels"] = std::to_string(cfg.channels);
    (*resolved)["gen.height"] = std::to_string(cfg.height);
    (*resolved)["gen.width"] = std::to_string(cfg.width);
    (*resolved)["gen.images_per_identity"] = std::to_string(cfg.images_per_identity);
    (*resolved)["gen.flip_prob"] = format_double(cfg.flip_prob);
    (*resolved)["gen.noise_scale"] = format_double(cfg.noise_scale);
    (*resolved)["gen.flavor"] = to_string(cfg.flavor);
    (*resolved)["gen.seed"] = std::to_string(cfg.seed);
  }
  return cfg;
}

int cmd_gen(const GenArgs& args) {
  const fs::path out(args.out);
  if (fs::exists(out) && !fs::is_empty(out) && !args.force)
    throw ConfigError("gen: output directory " + out.string() +
                      " is not empty (pass --force to overwrite)");
  SyntheticConfig cfg = resolve_gen(args, nullptr);
  if (args.force) fs::remove_all(out);
  generate_synthetic(cfg, out);
  std::printf("generated %s: K=%d L=%d Q=%d feature=%dx%dx%d images/identity=%d flavor=%s\n",
              out.string().c_str(), cfg.train_identities, cfg.test_identities, cfg.attributes,
              cfg.channels, cfg.height, cfg.width, cfg.images_per_identity,
              to_string(cfg.flavor).c_str());
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data;
  std::string out;
  std::string mode;
  std::optional<int> episodes;
  std::optional<uint64_t> seed;
  std::string resume;
};

TrainConfig resolve_train(const TrainArgs& args, std::string* hash) {
  KvConfig config = load_config(args.config_path);
  TrainConfig cfg;
  const std::string mode =
      !args.mode.empty() ? args.mode : config.get_string("train", "mode", "i2a");
  cfg.mode = train_mode_from_string(mode);
  cfg.episodes = args.episodes ? *args.episodes : config.get_int("train", "episodes", cfg.episodes);
  cfg.identities_per_episode =
      config.get_int("train", "identities_per_episode", cfg.identities_per_episode);
  cfg.shots = config.get_int("train", "shots", cfg.shots);
  cfg.r = config.get_double("train", "r", cfg.r);
  cfg.d = config.get_double("train", "d", cfg.d);
  const std::string stability = config.get_string("train", "stability", "arcface-fallback");
  if (stability == "arcface-fallback")
    cfg.stability = DcmStability::arcface_fallback;
  else if (stability == "strict")
    cfg.stability = DcmStability::strict;
  else
    throw ConfigError("train: unknown stability mode \"" + stability + "\"");
  cfg.top_d = config.get_int("train", "top_d", cfg.top_d);
  cfg.hidden = config.get_int("train", "hidden", cfg.hidden);
  cfg.normalize_attention =
      config.get_bool("train", "normalize_attention", cfg.normalize_attention);
  cfg.use_attention = config.get_bool("train", "use_attention", cfg.use_attention);
  cfg.cea_coef = config.get_double("train", "cea_coef", cfg.cea_coef);
  cfg.dcm_coef = config.get_double("train", "dcm_coef", cfg.dcm_coef);
  cfg.learning_rate = config.get_double("train", "learning_rate", cfg.learning_rate);
  cfg.weight_decay = config.get_double("train", "weight_decay", cfg.weight_decay);
  cfg.beta1 = config.get_double("train", "beta1", cfg.beta1);
  cfg.beta2 = config.get_double("train", "beta2", cfg.beta2);
  cfg.adam_eps = config.get_double("train", "adam_eps", cfg.adam_eps);
  cfg.decay_biases = config.get_bool("train", "decay_biases", cfg.decay_biases);
  cfg.checkpoint_every = config.get_int("train", "checkpoint_every", cfg.checkpoint_every);
  cfg.seed = resolve_seed(args.seed, config, "train", cfg.seed);

  std::map<std::string, std::string> resolved;
  resolved["train.mode"] = to_string(cfg.mode);
  resolved["train.episodes"] = std::to_string(cfg.episodes);
  resolved["train.identities_per_episode"] = std::to_string(cfg.identities_per_episode);
  resolved["train.shots"] = std::to_string(cfg.shots);
  resolved["train.r"] = format_double(cfg.r);
  resolved["train.d"] = format_double(cfg.d);
  resolved["train.stability"] = stability;
  resolved["train.top_d"] = std::to_string(cfg.top_d);
  resolved["train.hidden"] = std::to_string(cfg.hidden);
  resolved["train.normalize_attention"] = cfg.normalize_attention ? "true" : "false";
  resolved["train.use_attention"] = cfg.use_attention ? "true" : "false";
  resolved["train.cea_coef"] = format_double(cfg.cea_coef);
  resolved["train.dcm_coef"] = format_double(cfg.dcm_coef);
  resolved["train.learning_rate"] = format_double(cfg.learning_rate);
  resolved["train.weight_decay"] = format_double(cfg.weight_decay);
  resolved["train.beta1"] = format_double(cfg.beta1);
  resolved["train.beta2"] = format_double(cfg.beta2);
  resolved["train.adam_eps"] = format_double(cfg.adam_eps);
  resolved["train.decay_biases"] = cfg.decay_biases ? "true" : "false";
  resolved["train.checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  resolved["train.seed"] = std::to_string(cfg.seed);
  if (hash) *hash = config_hash(resolved);
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  std::string hash;
  TrainConfig cfg = resolve_train(args, &hash);
  Dataset dataset = Dataset::load(args.data);
  FitResult result = fit(dataset, cfg, args.out, hash,
                         args.resume.empty() ? fs::path{} : fs::path(args.resume));
  std::printf("trained %d episodes (config %s)\n", result.episodes_run, hash.c_str());
  if (result.episodes_run > 0)
    std::printf("total loss: first %.6f last %.6f\n", result.first_total, result.last_total);
  std::printf("checkpoint: %s\n", result.final_checkpoint.string().c_str());
  return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string config_path;
  std::string checkpoint;
  std::string data;
  std::string protocol;
  std::string top;
  std::string out = ".";
};

int cmd_eval(const EvalArgs& args) {
  KvConfig config = load_config(args.config_path);
  const std::string protocol =
      !args.protocol.empty() ? args.protocol : config.get_string("eval", "protocol", "");
  const std::string top =
      !args.top.empty() ? args.top : config.get_string("eval", "top", "1,5,10");
  if (protocol.empty()) {
    std::fprintf(stderr, "eval: --protocol is required (or set protocol in [eval])\n");
    return kExitUsage;
  }
  if (protocol != "i2a" && protocol != "a2i" && protocol != "i2i") {
    std::fprintf(stderr, "eval: unknown protocol \"%s\" (expected i2a, a2i or i2i)\n",
                 protocol.c_str());
    return kExitUsage;
  }
  Checkpoint checkpoint = load_checkpoint(args.checkpoint);
  Dataset dataset = Dataset::load(args.data);
  EvalConfig cfg;
  cfg.p_values = parse_int_list(top, "eval: --top");

  std::map<std::string, std::string> resolved;
  resolved["eval.protocol"] = protocol;
  resolved["eval.top"] = top;
  resolved["eval.checkpoint_hash"] = checkpoint.config_hash;
  const std::string hash = config_hash(resolved);

  MetricsReport report =
      evaluate(protocol, checkpoint.model, dataset, cfg, checkpoint.train_seed, hash);
  const fs::path json_path = save_report(args.out, report);
  std::fputs(report_text_table(report).c_str(), stdout);
  std::printf("report: %s\n", json_path.string().c_str());
  return 0;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string config_path;
  std::string data;
  std::string checkpoint_dir;
  std::vector<std::string> grid;
  std::string seeds;
};

int cmd_sweep(const SweepArgs& args) {
  KvConfig config = load_config(args.config_path);
  std::vector<double> r_values = {0};
  std::vector<double> d_values = {0};
  std::vector<int> top_d_values = {0};
  bool r_set = false, d_set = false, top_d_set = false;
  if (config.has("sweep", "r")) {
    r_values = parse_double_list(config.get_string("sweep", "r", ""), "sweep: r");
    r_set = true;
  }
  if (config.has("sweep", "d")) {
    d_values = parse_double_list(config.get_string("sweep", "d", ""), "sweep: d");
    d_set = true;
  }
  if (config.has("sweep", "top_d")) {
    top_d_values = parse_int_list(config.get_string("sweep", "top_d", ""), "sweep: top_d");
    top_d_set = true;
  }
  for (const std::string& token : args.grid) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw ConfigError("sweep: grid token \"" + token + "\" is not axis=v1,v2,...");
    const std::string axis = token.substr(0, eq);
    const std::string values = token.substr(eq + 1);
    if (axis == "r") {
      r_values = parse_double_list(values, "sweep: r");
      r_set = true;
    } else if (axis == "d") {
      d_values = parse_double_list(values, "sweep: d");
      d_set = true;
    } else if (axis == "D" || axis == "top_d") {
      top_d_values = parse_int_list(values, "sweep: D");
      top_d_set = true;
    } else {
      throw ConfigError("sweep: unknown grid axis \"" + axis + "\" (expected r, d or D)");
    }
  }
  std::vector<uint64_t> seeds = {0};
  {
    std::string seed_list = args.seeds;
    if (seed_list.empty()) seed_list = config.get_string("sweep", "seeds", "");
    if (!seed_list.empty()) {
      seeds.clear();
      for (int s : parse_int_list(seed_list, "sweep: seeds"))
        seeds.push_back(static_cast<uint64_t>(s));
    }
  }

  Dataset dataset = Dataset::load(args.data);
  fs::create_directories(args.checkpoint_dir);

  TrainArgs base_args;
  base_args.config_path = args.config_path;
  std::string base_hash;
  TrainConfig base = resolve_train(base_args, &base_hash);
  if (config.has("sweep", "episodes"))
    base.episodes = config.get_int("sweep", "episodes", base.episodes);

  const std::vector<int> p_values = {1, 5, 10};
  nlohmann::json rows = nlohmann::json::array();
  std::string table;
  table += "r\td\tD\tseed\ttop1\ttop5\ttop10\tr@1\tr@5\tr@10\tmap\n";

  for (double r : r_values)
    for (double d : d_values)
      for (int top_d : top_d_values)
        for (uint64_t seed : seeds) {
          TrainConfig cfg = base;
          if (r_set) cfg.r = r;
          if (d_set) cfg.d = d;
          if (top_d_set) cfg.top_d = top_d;
          cfg.seed = seed;

          char point[128];
          std::snprintf(point, sizeof(point), "point_r%g_d%g_D%d_seed%llu", cfg.r, cfg.d,
                        cfg.top_d, static_cast<unsigned long long>(seed));
          const fs::path point_dir = fs::path(args.checkpoint_dir) / point;

          std::map<std::string, std::string> resolved;
          resolved["sweep.base"] = base_hash;
          resolved["sweep.r"] = format_double(cfg.r);
          resolved["sweep.d"] = format_double(cfg.d);
          resolved["sweep.top_d"] = std::to_string(cfg.top_d);
          resolved["sweep.seed"] = std::to_string(seed);
          const std::string hash = config_hash(resolved);

          FitResult trained = fit(dataset, cfg, point_dir, hash);
          Checkpoint checkpoint = load_checkpoint(trained.final_checkpoint);
          EvalConfig eval_cfg;
          eval_cfg.p_values = p_values;
          MetricsReport i2a =
              evaluate("i2a", checkpoint.model, dataset, eval_cfg, seed, hash);
          MetricsReport a2i =
              evaluate("a2i", checkpoint.model, dataset, eval_cfg, seed, hash);
          save_report(point_dir, i2a);
          save_report(point_dir, a2i);

          auto metric = [](const MetricsReport& report, const std::string& name) {
            const auto v = report.value(name);
            return v ? *v : 0.0;
          };
          char line[256];
          std::snprintf(line, sizeof(line),
                        "%g\t%g\t%d\t%llu\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\n", cfg.r,
                        cfg.d, cfg.top_d, static_cast<unsigned long long>(seed),
                        metric(i2a, "top1"), metric(i2a, "top5"), metric(i2a, "top10"),
                        metric(a2i, "r@1"), metric(a2i, "r@5"), metric(a2i, "r@10"),
                        metric(a2i, "map"));
          table += line;

          nlohmann::json row;
          row["r"] = cfg.r;
          row["d"] = cfg.d;
          row["D"] = cfg.top_d;
          row["seed"] = seed;
          row["config_hash"] = hash;
          row["i2a"] = {{"top1", metric(i2a, "top1")},
                        {"top5", metric(i2a, "top5")},
                        {"top10", metric(i2a, "top10")}};
          row["a2i"] = {{"r@1", metric(a2i, "r@1")},
                        {"r@5", metric(a2i, "r@5")},
                        {"r@10", metric(a2i, "r@10")},
                        {"map", metric(a2i, "map")}};
          rows.push_back(std::move(row));
        }

  {
    std::ofstream out(fs::path(args.checkpoint_dir) / "sweep_table.txt", std::ios::trunc);
    if (!out) throw IoError("sweep: cannot write the table");
    out << table;
  }
  {
    std::ofstream out(fs::path(args.checkpoint_dir) / "sweep_table.json", std::ios::trunc);
    if (!out) throw IoError("sweep: cannot write the json table");
    out << rows.dump(2) << "\n";
  }
  std::fputs(table.c_str(), stdout);
  return 0;
}

// --- dump-attention -----------------------------------------------------------

struct DumpArgs {
  std::string config_path;
  std::string checkpoint;
  std::string data;
  std::string images;
  std::string out = ".";
};

int cmd_dump_attention(const DumpArgs& args) {
  KvConfig config = load_config(args.config_path);
  const std::string images =
      !args.images.empty() ? args.images : config.get_string("dump", "images", "");
  if (images.empty()) {
    std::fprintf(stderr, "dump-attention: --images is required (or set images in [dump])\n");
    return kExitUsage;
  }
  Checkpoint checkpoint = load_checkpoint(args.checkpoint);
  Dataset dataset = Dataset::load(args.data);
  fs::create_directories(args.out);

  std::vector<std::string> unknown;
  std::stringstream stream(images);
  std::string image_id;
  int dumped = 0;
  while (std::getline(stream, image_id, ',')) {
    const ImageRecord* image = dataset.find_image(image_id);
    if (!image) {
      unknown.push_back(image_id);
      continue;
    }
    Tensor<float> feature_map = dataset.load_feature(*image);
    AttentionOutput<float> output =
        visual_feature(feature_map, checkpoint.model.apm, checkpoint.model.top_d,
                       checkpoint.model.normalize_attention, static_cast<Tape<float>*>(nullptr));
    write_attention_dump(fs::path(args.out) / (image_id + ".attn"), image_id, output);
    write_attention_pgm(fs::path(args.out) / (image_id + ".pgm"), output.attention);
    dumped += 1;
  }
  std::printf("dumped %d attention map(s) to %s\n", dumped, args.out.c_str());
  if (!unknown.empty()) {
    for (const auto& id : unknown)
      std::fprintf(stderr, "dump-attention: unknown image id \"%s\" (skipped)\n", id.c_str());
    return kExitValidation;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MFHI: modality-free human identification engine"};
  app.name("mfhi");
  app.require_subcommand(1);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a planted synthetic dataset");
  gen->add_option("--config", gen_args.config_path, "Config file ([gen] section)");
  gen->add_option("--out", gen_args.out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_args.seed, "Generator seed (overrides config and MFHI_SEED)");
  gen->add_flag("--force", gen_args.force, "Overwrite a non-empty output directory");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train on a dataset's seen identities");
  train->add_option("--config", train_args.config_path, "Config file ([train] section)");
  train->add_option("--data", train_args.data, "Dataset directory")->required();
  train->add_option("--out", train_args.out, "Output directory for checkpoints and logs")
      ->required();
  train->add_option("--mode", train_args.mode, "Prototype source: i2a (PLM) or i2i (fc rows)")
      ->check(CLI::IsMember({"i2a", "i2i"}));
  train->add_option("--episodes", train_args.episodes, "Episode count (overrides config)");
  train->add_option("--seed", train_args.seed, "Training seed (overrides config and MFHI_SEED)");
  train->add_option("--resume", train_args.resume, "Checkpoint directory to resume from");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint under one protocol");
  eval->add_option("--config", eval_args.config_path, "Config file ([eval] section)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval->add_option("--protocol", eval_args.protocol, "Protocol: i2a, a2i or i2i");
  eval->add_option("--top", eval_args.top, "Comma-separated rank cutoffs (default 1,5,10)");
  eval->add_option("--out", eval_args.out, "Report output directory")->capture_default_str();

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over a hyperparameter grid");
  sweep->add_option("--config", sweep_args.config_path, "Config file ([train]/[sweep] sections)");
  sweep->add_option("--data", sweep_args.data, "Dataset directory")->required();
  sweep->add_option("--checkpoint-dir", sweep_args.checkpoint_dir,
                    "Directory for per-point checkpoints and the sweep tables")
      ->required();
  sweep->add_option("--grid", sweep_args.grid,
                    "Axes as axis=v1,v2 tokens (axes: r, d, D), e.g. r=8,64 d=0.15,0.3");
  sweep->add_option("--seeds", sweep_args.seeds, "Comma-separated seeds, one run per seed");

  DumpArgs dump_args;
  auto* dump = app.add_subcommand("dump-attention", "Write attention maps for chosen images");
  dump->add_option("--config", dump_args.config_path, "Config file ([dump] section)");
  dump->add_option("--checkpoint", dump_args.checkpoint, "Checkpoint directory")->required();
  dump->add_option("--data", dump_args.data, "Dataset directory")->required();
  dump->add_option("--images", dump_args.images, "Comma-separated image ids");
  dump->add_option("--out", dump_args.out, "Dump output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (dump->parsed()) return cmd_dump_attention(dump_args);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitUsage;
}
