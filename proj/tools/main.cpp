#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bernflow/checkpoint.hpp"
#include "bernflow/data.hpp"
#include "bernflow/errors.hpp"
#include "bernflow/eval.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/graph.hpp"
#include "bernflow/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bernflow;

namespace {

std::string sha256_bytes(const void* data, std::size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[md[i] >> 4];
    out[2 * i + 1] = hex[md[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for hashing");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string body = ss.str();
  return sha256_bytes(body.data(), body.size());
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << body;
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Run configuration (JSON file + --set overrides)

struct RunConfig {
  // data
  std::string data_path;
  std::string target;
  std::string toy;  // "", or sinusoidal | bimodal | hetero_gaussian
  std::size_t toy_n = 2000;
  std::uint64_t toy_seed = 7;
  // model
  std::string kind = "dl_mlt";
  ModelConfig model;
  json l2_raw = "auto";  // "auto": 0.01 when dataset rows < 1500, else 0
  // train
  TrainConfig train;
  // folds
  std::size_t fold_count = 20;
  std::uint64_t fold_seed = 1;
  std::string folds_dir;
  std::size_t fold_limit = 0;  // 0: all folds
  // misc
  std::vector<double> quantiles{0.025, 0.5, 0.975};
  std::string out_dir = "runs/run";
};

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_override(json& cfg, const std::string& kv, std::vector<std::string>& errors) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    errors.push_back("--set '" + kv + "': expected key.path=value");
    return;
  }
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (...) {
    value = raw;  // unquoted strings pass through verbatim
  }
  json* cur = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) {
      errors.push_back("--set '" + kv + "': empty key segment");
      return;
    }
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    if (!cur->contains(part)) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    if (!cur->is_object()) {
      errors.push_back("--set '" + kv + "': '" + part + "' is not an object");
      return;
    }
    start = dot + 1;
  }
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed,
                std::vector<std::string>& errors) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      errors.push_back(section + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read_key(const json& obj, const std::string& section, const char* key, T& dst,
              std::vector<std::string>& errors) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(dst);
  } catch (...) {
    errors.push_back(section + "." + key + ": wrong type");
  }
}

RunConfig parse_run_config(const json& cfg, std::vector<std::string>& errors) {
  RunConfig rc;
  if (!cfg.is_object()) {
    errors.push_back("config root must be a JSON object");
    return rc;
  }
  check_keys(cfg, "config", {"data", "model", "train", "folds", "quantiles", "out_dir"},
             errors);

  const json data = cfg.value("data", json::object());
  check_keys(data, "data", {"path", "target", "toy", "toy_n", "toy_seed"}, errors);
  read_key(data, "data", "path", rc.data_path, errors);
  read_key(data, "data", "target", rc.target, errors);
  if (data.contains("toy") && !data["toy"].is_null()) {
    read_key(data, "data", "toy", rc.toy, errors);
  }
  read_key(data, "data", "toy_n", rc.toy_n, errors);
  read_key(data, "data", "toy_seed", rc.toy_seed, errors);
  if (rc.data_path.empty() == rc.toy.empty()) {
    errors.push_back("data: exactly one of data.path and data.toy is required");
  }
  if (!rc.toy.empty() && rc.toy != "sinusoidal" && rc.toy != "bimodal" &&
      rc.toy != "hetero_gaussian") {
    errors.push_back("data.toy: unknown generator '" + rc.toy + "'");
  }
  if (!rc.toy.empty() && rc.toy_n < 2) errors.push_back("data.toy_n: need >= 2 rows");

  const json model = cfg.value("model", json::object());
  check_keys(model, "model",
             {"kind", "order", "hidden_layers", "activation", "l2", "constant_groups",
              "use_f3", "seed"},
             errors);
  read_key(model, "model", "kind", rc.kind, errors);
  if (rc.kind != "dl_mlt" && rc.kind != "ltm") {
    errors.push_back("model.kind: must be 'dl_mlt' or 'ltm'");
  }
  read_key(model, "model", "order", rc.model.order, errors);
  read_key(model, "model", "hidden_layers", rc.model.hidden_layers, errors);
  read_key(model, "model", "activation", rc.model.activation, errors);
  if (model.contains("l2")) {
    rc.l2_raw = model["l2"];
    const bool auto_l2 = rc.l2_raw.is_string() && rc.l2_raw.get<std::string>() == "auto";
    const bool num_l2 = rc.l2_raw.is_number() && rc.l2_raw.get<double>() >= 0.0;
    if (!auto_l2 && !num_l2) {
      errors.push_back("model.l2: must be \"auto\" or a number >= 0");
    }
  }
  std::vector<std::string> groups;
  read_key(model, "model", "constant_groups", groups, errors);
  rc.model.constant_groups.insert(groups.begin(), groups.end());
  read_key(model, "model", "use_f3", rc.model.use_f3, errors);
  read_key(model, "model", "seed", rc.model.seed, errors);
  try {
    ModelConfig probe = rc.model;
    probe.l2 = 0.0;
    probe.validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("model: ") + e.what());
  }

  const json train = cfg.value("train", json::object());
  check_keys(train, "train",
             {"iterations", "learning_rate", "halve_lr", "batch_size", "seed",
              "log_every"},
             errors);
  read_key(train, "train", "iterations", rc.train.iterations, errors);
  read_key(train, "train", "learning_rate", rc.train.learning_rate, errors);
  read_key(train, "train", "halve_lr", rc.train.halve_lr, errors);
  read_key(train, "train", "batch_size", rc.train.batch_size, errors);
  read_key(train, "train", "seed", rc.train.seed, errors);
  read_key(train, "train", "log_every", rc.train.log_every, errors);
  try {
    rc.train.validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("train: ") + e.what());
  }

  const json folds = cfg.value("folds", json::object());
  check_keys(folds, "folds", {"count", "seed", "dir", "limit"}, errors);
  read_key(folds, "folds", "count", rc.fold_count, errors);
  read_key(folds, "folds", "seed", rc.fold_seed, errors);
  if (folds.contains("dir") && !folds["dir"].is_null()) {
    read_key(folds, "folds", "dir", rc.folds_dir, errors);
  }
  read_key(folds, "folds", "limit", rc.fold_limit, errors);
  if (rc.folds_dir.empty() && rc.fold_count < 2) {
    errors.push_back("folds.count: need >= 2 generated folds (or folds.dir)");
  }

  if (cfg.contains("quantiles")) {
    try {
      rc.quantiles = cfg.at("quantiles").get<std::vector<double>>();
    } catch (...) {
      errors.push_back("quantiles: wrong type");
    }
    for (double q : rc.quantiles) {
      if (!(q > 0.0 && q < 1.0)) {
        errors.push_back("quantiles: level " + std::to_string(q) + " outside (0, 1)");
      }
    }
  }
  read_key(cfg, "config", "out_dir", rc.out_dir, errors);
  if (rc.out_dir.empty()) errors.push_back("out_dir: must not be empty");
  return rc;
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& sets,
                          const std::string& out_override,
                          const std::string& folds_dir_override) {
  json cfg = load_json_file(config_path);
  std::vector<std::string> errors;
  for (const auto& kv : sets) apply_override(cfg, kv, errors);
  RunConfig rc = parse_run_config(cfg, errors);
  if (!out_override.empty()) rc.out_dir = out_override;
  if (!folds_dir_override.empty()) rc.folds_dir = folds_dir_override;
  if (!errors.empty()) {
    std::cerr << "invalid configuration (" << errors.size() << " problem"
              << (errors.size() == 1 ? "" : "s") << "):\n";
    for (const auto& e : errors) std::cerr << "  - " << e << "\n";
    throw ConfigError("configuration rejected");
  }
  return rc;
}

Dataset load_run_data(const RunConfig& rc) {
  if (!rc.toy.empty()) {
    if (rc.toy == "sinusoidal") return gen_toy_sinusoidal(rc.toy_n, rc.toy_seed);
    if (rc.toy == "bimodal") return gen_toy_bimodal(rc.toy_n, rc.toy_seed);
    return gen_toy_hetero_gaussian(rc.toy_n, rc.toy_seed);
  }
  return load_csv(rc.data_path, rc.target);
}

double resolve_l2(const json& l2_raw, std::size_t n_rows) {
  if (l2_raw.is_string()) return n_rows < 1500 ? 0.01 : 0.0;
  return l2_raw.get<double>();
}

json resolved_config_json(const RunConfig& rc, double l2) {
  json data{{"target", rc.target}, {"toy_n", rc.toy_n}, {"toy_seed", rc.toy_seed}};
  data["path"] = rc.data_path.empty() ? json{} : json(rc.data_path);
  data["toy"] = rc.toy.empty() ? json{} : json(rc.toy);
  return json{
      {"data", data},
      {"model",
       {{"kind", rc.kind},
        {"order", rc.model.order},
        {"hidden_layers", rc.model.hidden_layers},
        {"activation", rc.model.activation},
        {"l2", l2},
        {"constant_groups",
         std::vector<std::string>(rc.model.constant_groups.begin(),
                                  rc.model.constant_groups.end())},
        {"use_f3", rc.model.use_f3},
        {"seed", rc.model.seed}}},
      {"train",
       {{"iterations", rc.train.iterations},
        {"learning_rate", rc.train.learning_rate},
        {"halve_lr", rc.train.halve_lr},
        {"batch_size", rc.train.batch_size},
        {"seed", rc.train.seed},
        {"log_every", rc.train.log_every}}},
      {"folds",
       {{"count", rc.fold_count},
        {"seed", rc.fold_seed},
        {"dir", rc.folds_dir.empty() ? json{} : json(rc.folds_dir)},
        {"limit", rc.fold_limit}}},
      {"quantiles", rc.quantiles},
      {"out_dir", rc.out_dir}};
}

json input_hashes(const RunConfig& rc) {
  json inputs = json::object();
  if (!rc.data_path.empty()) inputs[rc.data_path] = sha256_file(rc.data_path);
  if (!rc.folds_dir.empty() && fs::is_directory(rc.folds_dir)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(rc.folds_dir)) {
      if (e.path().filename().string().rfind("index_test_", 0) == 0) {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) inputs[f] = sha256_file(f);
  }
  return inputs;
}

void write_manifest(const std::string& path, const std::string& command,
                    const json& config, const json& inputs,
                    const std::vector<std::string>& output_files,
                    const json& results) {
  json outputs = json::object();
  for (const auto& f : output_files) outputs[f] = sha256_file(f);
  const json manifest{{"command", command},
                      {"config", config},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"results", results}};
  write_text_file(path, manifest.dump(2) + "\n");
}

FoldSplit resolve_folds(const RunConfig& rc, std::size_t n) {
  FoldSplit folds = rc.folds_dir.empty() ? split_folds(n, rc.fold_count, rc.fold_seed)
                                         : load_folds(rc.folds_dir, n);
  if (rc.fold_limit != 0 && rc.fold_limit < folds.folds.size()) {
    folds.folds.resize(rc.fold_limit);
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_toy(const std::string& name, std::size_t n, std::uint64_t seed,
                const std::string& out) {
  Dataset d;
  std::string desc;
  if (name == "sinusoidal") {
    d = gen_toy_sinusoidal(n, seed);
    desc = "y = 0.3*x + sin(x) + (0.1 + 0.05*x)*Exponential(1), x ~ Uniform(0, 10)";
  } else if (name == "bimodal") {
    d = gen_toy_bimodal(n, seed);
    desc = "y = s*(0.25 + 0.25*x) + 0.1*Normal(0,1), s ~ {-1,+1} equiprobable, "
           "x ~ Uniform(0, 5)";
  } else if (name == "hetero_gaussian") {
    d = gen_toy_hetero_gaussian(n, seed);
    desc = "y = 2*x + (0.5 + x)*Normal(0,1), x ~ Uniform(0, 1)";
  } else {
    throw ConfigError("unknown generator '" + name +
                      "' (expected sinusoidal, bimodal, or hetero_gaussian)");
  }
  write_csv(out, d);
  std::cout << "generator: " << desc << "\n"
            << "wrote " << d.n << " rows to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_override) {
  const RunConfig rc = load_run_config(config_path, sets, out_override, "");
  Dataset data = load_run_data(rc);
  const double l2 = resolve_l2(rc.l2_raw, data.n);
  const json config_echo = resolved_config_json(rc, l2);
  const json inputs = input_hashes(rc);

  fs::create_directories(rc.out_dir);
  const std::string ckpt_path = (fs::path(rc.out_dir) / "checkpoint.json").string();
  const std::string log_path = (fs::path(rc.out_dir) / "train_log.ndjson").string();
  const std::string manifest_path = (fs::path(rc.out_dir) / "manifest.json").string();

  const Scaler scaler = Scaler::fit(data);
  const Dataset scaled = scaler.apply(data);
  TrainConfig tc = rc.train;
  tc.log_path = log_path;
  if (tc.log_every == 0) tc.log_every = 200;

  FitResult fr;
  if (rc.kind == "dl_mlt") {
    ModelConfig mc = rc.model;
    mc.l2 = l2;
    TransformationModel model(mc, data.p);
    fr = fit(model, scaled, tc);
    save_checkpoint(ckpt_path, model, scaler);
  } else {
    LtmModel model(data.p, rc.model.order, l2);
    fr = fit(model, scaled, tc);
    save_checkpoint(ckpt_path, model, scaler);
  }

  const double original_nll = fr.final_train_nll + scaler.nll_correction();
  const json results{{"final_train_nll_scaled", fr.final_train_nll},
                     {"final_train_nll", original_nll},
                     {"iterations", fr.iterations},
                     {"n_rows", data.n}};
  write_manifest(manifest_path, "train", config_echo, inputs, {ckpt_path, log_path},
                 results);
  std::cout << "final train NLL (original scale): " << original_nll << "\n"
            << "checkpoint: " << ckpt_path << "\n"
            << "manifest:   " << manifest_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& target, const std::string& folds_dir,
                 int fold_index, const std::string& split, const std::string& out) {
  if (split != "train" && split != "test") {
    throw ConfigError("--split must be 'train' or 'test'");
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  Dataset data = load_csv(data_path, target);
  std::string scope = "all rows";
  if (!folds_dir.empty()) {
    const FoldSplit folds = load_folds(folds_dir, data.n);
    if (fold_index < 0 || static_cast<std::size_t>(fold_index) >= folds.folds.size()) {
      throw ConfigError("--fold " + std::to_string(fold_index) +
                        " out of range (have " + std::to_string(folds.folds.size()) +
                        " folds)");
    }
    const auto& fold = folds.folds[static_cast<std::size_t>(fold_index)];
    data = data.subset(split == "train" ? fold.train : fold.test);
    scope = split + " of fold " + std::to_string(fold_index);
  }

  const double nll = ckpt.dl ? test_nll(*ckpt.dl, ckpt.scaler, data)
                             : test_nll(*ckpt.ltm, ckpt.scaler, data);
  const json j{{"checkpoint", ckpt_path},
               {"data", data_path},
               {"scope", scope},
               {"n_rows", data.n},
               {"test_nll", nll}};
  const std::string body = j.dump(2) + "\n";
  std::cout << body;
  if (!out.empty()) write_text_file(out, body);
  return 0;
}

int cmd_predict_cpd(const std::string& ckpt_path, const std::vector<std::string>& xs,
                    std::size_t points, const std::vector<double>& quantiles,
                    const std::string& out_prefix) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (xs.empty()) throw ConfigError("need at least one --x row");
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) {
      throw ConfigError("quantile level " + std::to_string(q) + " outside (0, 1)");
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> x;
    std::stringstream ss(xs[i]);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        x.push_back(std::stod(cell));
      } catch (...) {
        throw ConfigError("--x '" + xs[i] + "': non-numeric component '" + cell + "'");
      }
    }
    if (x.size() != ckpt.input_dim()) {
      throw ConfigError("--x '" + xs[i] + "': expected " +
                        std::to_string(ckpt.input_dim()) + " components, got " +
                        std::to_string(x.size()));
    }
    const CpdGrid grid =
        ckpt.dl ? cpd_export(*ckpt.dl, ckpt.scaler, x, points, quantiles)
                : cpd_export(*ckpt.ltm, ckpt.scaler, x, points, quantiles);
    const std::string csv_path = out_prefix + "_" + std::to_string(i) + ".csv";
    const std::string side_path =
        out_prefix + "_" + std::to_string(i) + ".quantiles.json";
    write_cpd_csv(csv_path, grid);
    write_cpd_sidecar_json(side_path, grid);
    std::cout << "x[" << i << "]: y in [" << grid.y.front() << ", " << grid.y.back()
              << "], trapezoid mass " << grid.trapezoid_mass() << ", modes "
              << grid.mode_count() << ", attainable z (" << grid.z_lo << ", "
              << grid.z_hi << ") -> " << csv_path << "\n";
  }
  return 0;
}

int cmd_benchmark(const std::string& config_path, const std::vector<std::string>& sets,
                  const std::string& out_override,
                  const std::string& folds_dir_override, std::size_t jobs) {
  const RunConfig rc =
      load_run_config(config_path, sets, out_override, folds_dir_override);
  Dataset data = load_run_data(rc);
  const double l2 = resolve_l2(rc.l2_raw, data.n);
  const json config_echo = resolved_config_json(rc, l2);
  const json inputs = input_hashes(rc);
  const FoldSplit folds = resolve_folds(rc, data.n);

  ModelConfig mc = rc.model;
  mc.l2 = l2;
  const std::string name = rc.toy.empty() ? rc.data_path : "toy:" + rc.toy;
  const BenchmarkReport report =
      benchmark_run(name, data, folds, mc, rc.train, rc.kind, jobs);

  fs::create_directories(rc.out_dir);
  const std::string report_path = (fs::path(rc.out_dir) / "benchmark.json").string();
  const std::string manifest_path = (fs::path(rc.out_dir) / "manifest.json").string();
  write_benchmark_report(report_path, report);
  const json results{{"mean_test_nll", report.mean_nll},
                     {"stderr_test_nll", report.stderr_nll},
                     {"folds_failed", report.folds_failed}};
  write_manifest(manifest_path, "benchmark", config_echo, inputs, {report_path},
                 results);

  std::cout << report.dataset << ": mean test NLL " << report.mean_nll << " +- "
            << report.stderr_nll << " over "
            << (report.folds_requested - report.folds_failed) << "/"
            << report.folds_requested << " folds";
  if (report.folds_failed > 0) {
    std::cout << " (" << report.folds_failed << " FAILED";
    for (const auto& f : report.per_fold) {
      if (!f.ok) std::cout << "; fold " << f.fold << ": " << f.error;
    }
    std::cout << ")";
  }
  std::cout << "\nreport: " << report_path << "\n";
  return report.folds_failed == report.folds_requested ? 4 : 0;
}

int cmd_grad_check(const std::string& config_path, const std::vector<std::string>& sets,
                   double tol) {
  const RunConfig rc = load_run_config(config_path, sets, "", "");
  Dataset data = load_run_data(rc);
  const double l2 = resolve_l2(rc.l2_raw, data.n);
  const Scaler scaler = Scaler::fit(data);
  const Dataset scaled = scaler.apply(data);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min<std::size_t>(8, scaled.n); ++i) idx.push_back(i);
  const Dataset batch = scaled.subset(idx);
  const Tensor X = batch.feature_tensor();
  const Tensor y = batch.target_tensor();

  ad::GradCheckResult res;
  if (rc.kind == "dl_mlt") {
    ModelConfig mc = rc.model;
    mc.l2 = l2;
    TransformationModel model(mc, data.p);
    res = ad::grad_check(
        [&](ad::Graph& g) { return model.build_loss(g, g.leaf(X), g.leaf(y)).loss; },
        model.parameters(), 1e-5);
  } else {
    LtmModel model(data.p, rc.model.order, l2);
    res = ad::grad_check(
        [&](ad::Graph& g) { return model.build_loss(g, g.leaf(X), g.leaf(y)).loss; },
        model.parameters(), 1e-5);
  }

  const json j{{"max_rel_error", res.max_rel_error},
               {"worst_parameter", res.worst_parameter},
               {"worst_index", res.worst_index},
               {"rows_checked", batch.n},
               {"tolerance", tol},
               {"ok", res.message.empty() && res.max_rel_error < tol}};
  std::cout << j.dump(2) << "\n";
  if (!res.message.empty()) {
    std::cerr << res.message << "\n";
    return 4;
  }
  return res.max_rel_error < tol ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bernstein-flow conditional density estimation"};
  app.require_subcommand(1);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Generate a toy dataset CSV");
  std::string gen_name;
  std::size_t gen_n = 1000;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "toy.csv";
  gen->add_option("--name", gen_name, "sinusoidal | bimodal | hetero_gaussian")
      ->required();
  gen->add_option("--n", gen_n, "number of rows");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output CSV path");

  // train
  auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
  std::string train_config;
  std::vector<std::string> train_sets;
  std::string train_out;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--set", train_sets, "override config key, e.g. model.order=20");
  train->add_option("--out", train_out, "output directory (overrides out_dir)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_target, eval_folds_dir, eval_out;
  std::string eval_split = "test";
  int eval_fold = 0;
  bool eval_fold_set = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint JSON")->required();
  eval->add_option("--data", eval_data, "dataset CSV")->required();
  eval->add_option("--target", eval_target, "target column (default: last)");
  eval->add_option("--folds-dir", eval_folds_dir, "fold index directory");
  eval->add_option("--fold", eval_fold, "fold index (with --folds-dir)")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--split", eval_split, "train | test (with --folds-dir)");
  eval->add_option("--out", eval_out, "also write the JSON result here");

  // predict-cpd
  auto* cpd = app.add_subcommand("predict-cpd", "Export CPD grids at given inputs");
  std::string cpd_ckpt, cpd_out = "cpd";
  std::vector<std::string> cpd_xs;
  std::size_t cpd_points = 512;
  std::string cpd_quantiles = "0.025,0.5,0.975";
  cpd->add_option("--checkpoint", cpd_ckpt, "checkpoint JSON")->required();
  cpd->add_option("--x", cpd_xs, "comma-separated feature row (repeatable)")
      ->required();
  cpd->add_option("--points", cpd_points, "grid points");
  cpd->add_option("--quantiles", cpd_quantiles, "comma-separated quantile levels");
  cpd->add_option("--out", cpd_out, "output path prefix");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Multi-fold train/test protocol");
  std::string bench_config, bench_out, bench_folds_dir;
  std::vector<std::string> bench_sets;
  std::size_t bench_jobs = 1;
  bench->add_option("--config", bench_config, "run config JSON")->required();
  bench->add_option("--set", bench_sets, "override config key");
  bench->add_option("--out", bench_out, "output directory (overrides out_dir)");
  bench->add_option("--folds-dir", bench_folds_dir, "fold index directory override");
  bench->add_option("--jobs", bench_jobs, "parallel fold workers");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  std::string gc_config;
  std::vector<std::string> gc_sets;
  double gc_tol = 1e-5;
  gc->add_option("--config", gc_config, "run config JSON")->required();
  gc->add_option("--set", gc_sets, "override config key");
  gc->add_option("--tol", gc_tol, "max relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_toy(gen_name, gen_n, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(train_config, train_sets, train_out);
    if (eval->parsed()) {
      eval_fold_set = eval->count("--fold") > 0;
      if (!eval_folds_dir.empty() && !eval_fold_set) {
        throw ConfigError("--folds-dir requires --fold");
      }
      return cmd_evaluate(eval_ckpt, eval_data, eval_target, eval_folds_dir, eval_fold,
                          eval_split, eval_out);
    }
    if (cpd->parsed()) {
      std::vector<double> levels;
      std::stringstream ss(cpd_quantiles);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        try {
          levels.push_back(std::stod(cell));
        } catch (...) {
          throw ConfigError("--quantiles: non-numeric level '" + cell + "'");
        }
      }
      return cmd_predict_cpd(cpd_ckpt, cpd_xs, cpd_points, levels, cpd_out);
    }
    if (bench->parsed()) {
      return cmd_benchmark(bench_config, bench_sets, bench_out, bench_folds_dir,
                           bench_jobs);
    }
    if (gc->parsed()) return cmd_grad_check(gc_config, gc_sets, gc_tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
