// Command-line surface: synthetic data generation, training, inference,
// evaluation sweeps, and static PPM rendering.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rac/rac.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  rac::NetworkConfig network;
  rac::TrainConfig train;
  rac::SyntheticSpec synthetic;
  fs::path data_dir;
  fs::path checkpoint;
  fs::path out_dir = ".";
};

void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::runtime_error("config: unknown key \"" + key + "\" in " + where);
  }
}

rac::SimilarityMeasure parse_measure_name(const std::string& name, double beta) {
  if (name == "hamming") return rac::SimilarityMeasure::hamming(beta);
  if (name == "euclidean") return rac::SimilarityMeasure::euclidean();
  if (name == "correlation") return rac::SimilarityMeasure::correlation();
  throw std::runtime_error("config: unknown similarity measure \"" + name + "\"");
}

rac::TargetMode parse_target_mode(const std::string& name) {
  if (name == "start") return rac::TargetMode::kStart;
  if (name == "periodicity") return rac::TargetMode::kPeriodicity;
  throw std::runtime_error("config: unknown target mode \"" + name + "\"");
}

template <typename T>
void load_field(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

void load_range(const json& obj, const char* key, std::size_t& lo, std::size_t& hi) {
  if (!obj.contains(key)) return;
  const json& r = obj.at(key);
  if (!r.is_array() || r.size() != 2)
    throw std::runtime_error(std::string("config: ") + key + " must be a [min, max] pair");
  lo = r[0].get<std::size_t>();
  hi = r[1].get<std::size_t>();
}

RunConfig load_config(const fs::path& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("config file " + path.string() + ": " + e.what());
  }
  check_keys(doc, {"network", "train", "synthetic", "paths"}, "root");

  if (doc.contains("network")) {
    const json& n = doc["network"];
    check_keys(n,
               {"input_dim", "aggregator", "stages", "layers_per_stage", "channels", "dilation_base",
                "target_mode", "similarity", "lambda", "seed"},
               "network");
    load_field(n, "input_dim", cfg.network.input_dim);
    if (n.contains("aggregator")) {
      const json& a = n["aggregator"];
      check_keys(a, {"kernel_size", "out_dim"}, "network.aggregator");
      load_field(a, "kernel_size", cfg.network.aggregator.kernel_size);
      load_field(a, "out_dim", cfg.network.aggregator.out_dim);
    }
    load_field(n, "stages", cfg.network.stages);
    load_field(n, "layers_per_stage", cfg.network.layers_per_stage);
    load_field(n, "channels", cfg.network.channels);
    load_field(n, "dilation_base", cfg.network.dilation_base);
    if (n.contains("target_mode")) cfg.network.target_mode = parse_target_mode(n["target_mode"].get<std::string>());
    if (n.contains("similarity")) {
      const json& s = n["similarity"];
      check_keys(s, {"measure", "beta"}, "network.similarity");
      double beta = 4.0;
      load_field(s, "beta", beta);
      cfg.network.similarity = parse_measure_name(s.at("measure").get<std::string>(), beta);
    }
    load_field(n, "lambda", cfg.network.lambda);
    load_field(n, "seed", cfg.network.seed);
  }

  if (doc.contains("train")) {
    const json& t = doc["train"];
    check_keys(t,
               {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon", "stride",
                "gaussian_sigma", "tsm_sigma", "prominence_threshold"},
               "train");
    load_field(t, "learning_rate", cfg.train.learning_rate);
    load_field(t, "batch_size", cfg.train.batch_size);
    load_field(t, "epochs", cfg.train.epochs);
    load_field(t, "beta1", cfg.train.beta1);
    load_field(t, "beta2", cfg.train.beta2);
    load_field(t, "epsilon", cfg.train.epsilon);
    load_field(t, "stride", cfg.train.stride);
    load_field(t, "gaussian_sigma", cfg.train.gaussian_sigma);
    load_field(t, "tsm_sigma", cfg.train.tsm_sigma);
    load_field(t, "prominence_threshold", cfg.train.prominence_threshold);
  }

  if (doc.contains("synthetic")) {
    const json& s = doc["synthetic"];
    check_keys(s,
               {"rng_seed", "t_range", "dim", "reps_range", "duration_range", "gap_range",
                "noise_sigma", "motif_dim"},
               "synthetic");
    load_field(s, "rng_seed", cfg.synthetic.rng_seed);
    load_range(s, "t_range", cfg.synthetic.t_min, cfg.synthetic.t_max);
    load_field(s, "dim", cfg.synthetic.dim);
    load_range(s, "reps_range", cfg.synthetic.reps_min, cfg.synthetic.reps_max);
    load_range(s, "duration_range", cfg.synthetic.duration_min, cfg.synthetic.duration_max);
    load_range(s, "gap_range", cfg.synthetic.gap_min, cfg.synthetic.gap_max);
    load_field(s, "noise_sigma", cfg.synthetic.noise_sigma);
    load_field(s, "motif_dim", cfg.synthetic.motif_dim);
  }

  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    check_keys(p, {"data_dir", "checkpoint", "out_dir"}, "paths");
    if (p.contains("data_dir")) cfg.data_dir = p["data_dir"].get<std::string>();
    if (p.contains("checkpoint")) cfg.checkpoint = p["checkpoint"].get<std::string>();
    if (p.contains("out_dir")) cfg.out_dir = p["out_dir"].get<std::string>();
  }
  return cfg;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- dataset manifest -------------------------------------------------------

struct ManifestItem {
  std::string embeddings;
  std::string annotations;
  std::uint64_t seed = 0;
};

void write_manifest(const std::vector<ManifestItem>& items, const fs::path& path) {
  json doc = json::array();
  for (const ManifestItem& item : items) {
    json j;
    j["embeddings"] = item.embeddings;
    j["annotations"] = item.annotations;
    j["seed"] = item.seed;
    doc.push_back(std::move(j));
  }
  rac::io::atomic_write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

rac::Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw std::runtime_error("manifest must be a JSON array");
  const fs::path base = manifest_path.parent_path();
  rac::Dataset dataset;
  for (const json& item : doc) {
    check_keys(item, {"embeddings", "annotations", "seed"}, "manifest item");
    rac::EmbeddingSequence seq = rac::read_embeddings(base / item.at("embeddings").get<std::string>());
    rac::AnnotationTrack track = rac::read_annotations(base / item.at("annotations").get<std::string>());
    if (track.total_frames != seq.frames)
      throw std::runtime_error("manifest item " + item.at("embeddings").get<std::string>() +
                               ": annotation frame count does not match embeddings");
    dataset.emplace_back(std::move(seq), std::move(track));
  }
  return dataset;
}

// --- probability CSV --------------------------------------------------------

void write_probability_csv(const std::vector<double>& probs, std::size_t stride, const fs::path& path) {
  rac::io::atomic_write_file(path, [&](std::ostream& out) {
    out << "frame,probability\n";
    for (std::size_t i = 0; i < probs.size(); ++i)
      out << i * stride << "," << format_double(probs[i]) << "\n";
  });
}

std::vector<double> read_probability_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open probability file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame,probability")
    throw std::runtime_error("probability file " + path.string() +
                             ": expected header \"frame,probability\"");
  std::vector<double> probs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("probability file " + path.string() + ": malformed line " +
                               std::to_string(line_no));
    try {
      probs.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw std::runtime_error("probability file " + path.string() + ": bad value on line " +
                               std::to_string(line_no));
    }
  }
  return probs;
}

// --- commands ----------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, std::size_t count) {
  cfg.synthetic.validate();
  fs::create_directories(cfg.out_dir);
  std::vector<ManifestItem> items;
  for (std::size_t i = 0; i < count; ++i) {
    rac::SyntheticSpec spec = cfg.synthetic;
    spec.rng_seed = cfg.synthetic.rng_seed + i;
    auto [seq, track] = rac::generate_sequence(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%04zu", i);
    ManifestItem item;
    item.embeddings = std::string(name) + ".race";
    item.annotations = std::string(name) + ".json";
    item.seed = spec.rng_seed;
    rac::write_embeddings(seq, cfg.out_dir / item.embeddings);
    rac::write_annotations(track, cfg.out_dir / item.annotations);
    items.push_back(std::move(item));
  }
  write_manifest(items, cfg.out_dir / "manifest.json");
  std::cout << "wrote " << count << " sequence pair(s) and manifest.json to " << cfg.out_dir.string()
            << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const fs::path& manifest, const fs::path& resume) {
  rac::Dataset dataset = load_dataset(manifest);
  if (dataset.empty()) throw std::runtime_error("train: manifest lists no sequences");
  if (cfg.network.input_dim == 0) cfg.network.input_dim = dataset.front().first.dim;
  cfg.network.validate();
  cfg.train.validate();

  rac::NetworkState state = resume.empty() ? rac::NetworkState::initialize(cfg.network)
                                           : rac::load_checkpoint(resume);
  if (!resume.empty()) {
    // architecture comes from the checkpoint; ablation knobs may be overridden
    state.config.lambda = cfg.network.lambda;
    state.config.similarity = cfg.network.similarity;
    state.config.target_mode = cfg.network.target_mode;
  }

  rac::TrainResult result = rac::train_from(std::move(state), dataset, cfg.train);

  fs::create_directories(cfg.out_dir);
  rac::save_checkpoint(result.state, cfg.out_dir / "checkpoint.racw");
  rac::io::atomic_write_file(cfg.out_dir / "loss_history.csv", [&](std::ostream& out) {
    out << "epoch,sse,treco,total\n";
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      const rac::LossReport& r = result.history[e];
      out << e << "," << format_double(r.sse) << "," << format_double(r.treco) << ","
          << format_double(r.total) << "\n";
    }
  });
  if (!result.history.empty()) {
    const rac::LossReport& last = result.history.back();
    std::cout << "trained " << result.history.size() << " epoch(s); final sse=" << format_double(last.sse)
              << " treco=" << format_double(last.treco) << " total=" << format_double(last.total) << "\n";
  } else {
    std::cout << "trained 0 epochs; checkpoint written unchanged\n";
  }
  std::cout << "checkpoint: " << (cfg.out_dir / "checkpoint.racw").string() << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, const fs::path& embeddings_path, double threshold,
              std::size_t stride) {
  rac::NetworkState state = rac::load_checkpoint(cfg.checkpoint);
  rac::EmbeddingSequence seq = rac::read_embeddings(embeddings_path);
  const rac::Matrix input = rac::strided_input(seq, stride);
  // inference path: forward and peak counting only, no TSM work
  rac::ForwardOutput out = rac::forward(state, input);
  auto [count, kept] = rac::count_repetitions(out.probs, threshold);
  (void)kept;
  fs::create_directories(cfg.out_dir);
  write_probability_csv(out.probs, stride, cfg.out_dir / "probabilities.csv");
  std::cout << count << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& manifest, std::vector<double> thresholds,
             std::size_t stride, bool oracle) {
  if (thresholds.empty()) thresholds.push_back(cfg.train.prominence_threshold);
  rac::Dataset dataset = load_dataset(manifest);
  rac::EvalConfig eval_cfg;
  eval_cfg.stride = stride;
  eval_cfg.gaussian_sigma = cfg.train.gaussian_sigma;
  eval_cfg.target_mode = cfg.network.target_mode;

  std::optional<rac::NetworkState> state;
  rac::Predictor predictor;
  if (oracle) {
    predictor = rac::oracle_predictor(eval_cfg);
  } else {
    state = rac::load_checkpoint(cfg.checkpoint);
    predictor = rac::model_predictor(*state);
  }

  const std::vector<rac::EvalResult> results =
      rac::evaluate_sweep(predictor, dataset, eval_cfg, thresholds);
  fs::create_directories(cfg.out_dir);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof(name), "eval_%.2f.json", thresholds[i]);
    rac::io::atomic_write_file(cfg.out_dir / name, [&](std::ostream& out) {
      out << rac::eval_to_json(results[i]).dump(2) << '\n';
    });
    std::cout << "threshold=" << format_double(thresholds[i]) << " mae=" << format_double(results[i].mae)
              << " oboa=" << format_double(results[i].oboa) << " n=" << results[i].n << "\n";
  }
  return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& what, const fs::path& embeddings_path,
               const fs::path& annotations_path, const fs::path& probs_path, const fs::path& out_file,
               double threshold, double sigma_s) {
  rac::Image image;
  if (what == "tsm-predicted") {
    if (embeddings_path.empty()) throw std::runtime_error("render tsm-predicted needs --embeddings");
    rac::EmbeddingSequence seq = rac::read_embeddings(embeddings_path);
    rac::SimilarityMatrix tsm = [&] {
      if (cfg.checkpoint.empty()) return rac::predicted_tsm(seq, cfg.network.similarity);
      rac::NetworkState state = rac::load_checkpoint(cfg.checkpoint);
      rac::ForwardOutput out = rac::forward(state, seq);
      return rac::predicted_tsm(out.embeddings(), state.config.similarity);
    }();
    image = rac::render_heatmap(tsm.values);
  } else if (what == "tsm-reference") {
    if (annotations_path.empty()) throw std::runtime_error("render tsm-reference needs --annotations");
    rac::AnnotationTrack track = rac::read_annotations(annotations_path);
    image = rac::render_heatmap(rac::reference_tsm(track, sigma_s).values);
  } else if (what == "probs") {
    if (probs_path.empty()) throw std::runtime_error("render probs needs --probs");
    const std::vector<double> probs = read_probability_csv(probs_path);
    auto [count, kept] = rac::count_repetitions(probs, threshold);
    (void)count;
    image = rac::render_probability_trace(probs, kept);
  } else {
    throw std::runtime_error("render: unknown target \"" + what + "\"");
  }
  write_ppm(image, out_file);
  std::cout << "wrote " << out_file.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"repetition counting over frame-embedding sequences"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--out", out_dir, "output directory");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic sequences and a manifest");
  std::size_t gen_count = 10;
  add_common(gen);
  gen->add_option("--n", gen_count, "number of sequences");

  // train
  auto* train = app.add_subcommand("train", "train a model from a data manifest");
  std::string train_manifest, resume_path, similarity_name, target_name;
  double lambda_flag = 0.0, lr_flag = 0.0, beta_flag = 0.0;
  std::size_t stride_flag = 1, epochs_flag = 0, batch_flag = 0;
  add_common(train);
  train->add_option("--data", train_manifest, "manifest.json of the training data")->required();
  train->add_option("--lambda", lambda_flag, "consistency loss weight");
  train->add_option("--similarity", similarity_name, "similarity measure")
      ->check(CLI::IsMember({"hamming", "euclidean", "correlation"}));
  train->add_option("--beta", beta_flag, "hamming sharpness");
  train->add_option("--stride", stride_flag, "temporal subsampling stride");
  train->add_option("--target", target_name, "training target")->check(CLI::IsMember({"start", "periodicity"}));
  train->add_option("--lr", lr_flag, "learning rate");
  train->add_option("--epochs", epochs_flag, "number of epochs");
  train->add_option("--batch-size", batch_flag, "sequences per optimizer step");
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  // infer
  auto* infer = app.add_subcommand("infer", "predict a repetition count for one embedding file");
  std::string infer_checkpoint, infer_embeddings;
  double infer_threshold = -1.0;
  std::size_t infer_stride = 0;
  add_common(infer);
  infer->add_option("--checkpoint", infer_checkpoint, "trained checkpoint");
  infer->add_option("--embeddings", infer_embeddings, "embedding file")->required();
  infer->add_option("--threshold", infer_threshold, "prominence threshold");
  infer->add_option("--stride", infer_stride, "temporal subsampling stride");

  // eval
  auto* eval = app.add_subcommand("eval", "compute MAE and OBOA over a manifest");
  std::string eval_checkpoint, eval_manifest;
  std::vector<double> eval_thresholds;
  std::size_t eval_stride = 0;
  bool eval_oracle = false;
  add_common(eval);
  eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint");
  eval->add_option("--data", eval_manifest, "manifest.json of the evaluation data")->required();
  eval->add_option("--threshold", eval_thresholds, "prominence threshold(s)")->expected(-1);
  eval->add_option("--stride", eval_stride, "temporal subsampling stride");
  eval->add_flag("--oracle", eval_oracle, "use the training targets as predictions");

  // render
  auto* render = app.add_subcommand("render", "emit a PPM visualization");
  std::string render_what, render_embeddings, render_annotations, render_probs, render_out,
      render_checkpoint;
  double render_threshold = -1.0, render_sigma_s = -1.0;
  add_common(render);
  render->add_option("--what", render_what, "tsm-predicted | tsm-reference | probs")
      ->required()
      ->check(CLI::IsMember({"tsm-predicted", "tsm-reference", "probs"}));
  render->add_option("--embeddings", render_embeddings, "embedding file (tsm-predicted)");
  render->add_option("--annotations", render_annotations, "annotation file (tsm-reference)");
  render->add_option("--probs", render_probs, "probability CSV (probs)");
  render->add_option("--checkpoint", render_checkpoint, "optional checkpoint for learned embeddings");
  render->add_option("--out-file", render_out, "output PPM path")->required();
  render->add_option("--threshold", render_threshold, "prominence threshold for peak markers");
  render->add_option("--sigma-s", render_sigma_s, "reference TSM smoothing");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (gen->parsed()) {
      if (gen->count("--seed") > 0) cfg.synthetic.rng_seed = seed;
      return cmd_gen_data(cfg, gen_count);
    }

    if (train->parsed()) {
      if (train->count("--seed") > 0) cfg.network.seed = seed;
      if (train->count("--lambda") > 0) cfg.network.lambda = lambda_flag;
      if (train->count("--similarity") > 0) {
        const double beta = train->count("--beta") > 0 ? beta_flag : cfg.network.similarity.beta;
        cfg.network.similarity = parse_measure_name(similarity_name, beta);
      } else if (train->count("--beta") > 0) {
        cfg.network.similarity.beta = beta_flag;
      }
      if (train->count("--stride") > 0) cfg.train.stride = stride_flag;
      if (train->count("--target") > 0) cfg.network.target_mode = parse_target_mode(target_name);
      if (train->count("--lr") > 0) cfg.train.learning_rate = lr_flag;
      if (train->count("--epochs") > 0) cfg.train.epochs = epochs_flag;
      if (train->count("--batch-size") > 0) cfg.train.batch_size = batch_flag;
      return cmd_train(cfg, train_manifest, resume_path);
    }

    if (infer->parsed()) {
      if (!infer_checkpoint.empty()) cfg.checkpoint = infer_checkpoint;
      if (cfg.checkpoint.empty()) throw std::runtime_error("infer: no checkpoint given");
      const double threshold =
          infer->count("--threshold") > 0 ? infer_threshold : cfg.train.prominence_threshold;
      const std::size_t stride = infer->count("--stride") > 0 ? infer_stride : cfg.train.stride;
      return cmd_infer(cfg, infer_embeddings, threshold, stride);
    }

    if (eval->parsed()) {
      if (!eval_checkpoint.empty()) cfg.checkpoint = eval_checkpoint;
      if (!eval_oracle && cfg.checkpoint.empty()) throw std::runtime_error("eval: no checkpoint given");
      const std::size_t stride = eval->count("--stride") > 0 ? eval_stride : cfg.train.stride;
      return cmd_eval(cfg, eval_manifest, eval_thresholds, stride, eval_oracle);
    }

    if (render->parsed()) {
      if (!render_checkpoint.empty()) cfg.checkpoint = render_checkpoint;
      if (render_what != "tsm-predicted") cfg.checkpoint.clear();
      const double threshold =
          render->count("--threshold") > 0 ? render_threshold : cfg.train.prominence_threshold;
      const double sigma_s = render->count("--sigma-s") > 0 ? render_sigma_s : cfg.train.tsm_sigma;
      return cmd_render(cfg, render_what, render_embeddings, render_annotations, render_probs,
                        render_out, threshold, sigma_s);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
