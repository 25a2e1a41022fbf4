#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gakan/data.hpp"
#include "gakan/evolution.hpp"
#include "gakan/genome.hpp"
#include "gakan/interpret.hpp"
#include "gakan/network.hpp"
#include "gakan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gakan;

namespace {

// exit codes: 0 ok, 1 runtime failure, 2 usage/config error, 3 not-ready
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotReadyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

struct RunConfig {
  // dataset
  std::string csv_path, label_column = "class";
  bool header = true;
  std::optional<ToyFormula> toy;
  int toy_train = 1000, toy_val = 1000, toy_test = 1000;
  // split
  SplitSpec split;
  bool split_seed_explicit = false;
  // space (inputs/outputs filled from the dataset)
  SearchSpace space;
  GaConfig ga;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
};

ToyFormula parse_toy_name(const std::string& name) {
  if (name == "eq6a") return ToyFormula::Eq6a;
  if (name == "eq6b") return ToyFormula::Eq6b;
  throw UsageError("unknown toy formula '" + name + "' (use eq6a or eq6b)");
}

LossKind parse_loss(const std::string& name) {
  if (name == "cross_entropy") return LossKind::CrossEntropy;
  if (name == "mse") return LossKind::MeanSquaredError;
  throw UsageError("train.loss must be 'cross_entropy' or 'mse'");
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config field '") + key + "' has the wrong type");
  }
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  if (!j.contains("dataset")) throw UsageError("config: missing 'dataset'");
  const json& ds = j.at("dataset");
  if (ds.contains("toy")) {
    cfg.toy = parse_toy_name(ds.at("toy").get<std::string>());
    cfg.toy_train = field_or(ds, "n_train", 1000);
    cfg.toy_val = field_or(ds, "n_val", 1000);
    cfg.toy_test = field_or(ds, "n_test", 1000);
    if (cfg.toy_train < 1 || cfg.toy_val < 1 || cfg.toy_test < 1)
      throw UsageError("config: dataset.n_* must be >= 1");
  } else if (ds.contains("csv")) {
    cfg.csv_path = ds.at("csv").get<std::string>();
    cfg.label_column = field_or<std::string>(ds, "label", "class");
    cfg.header = field_or(ds, "header", true);
  } else {
    throw UsageError("config: dataset needs either 'csv' or 'toy'");
  }

  if (j.contains("split")) {
    const json& sp = j.at("split");
    cfg.split.train_fraction = field_or(sp, "train", 0.8);
    cfg.split.val_fraction = field_or(sp, "val", 0.1);
    cfg.split.test_fraction = field_or(sp, "test", 0.1);
    cfg.split.stratified = field_or(sp, "stratified", true);
    if (sp.contains("seed")) {
      cfg.split.seed = sp.at("seed").get<std::uint64_t>();
      cfg.split_seed_explicit = true;
    }
  }

  if (j.contains("space")) {
    const json& sp = j.at("space");
    cfg.space.max_depth = field_or(sp, "max_depth", 4);
    cfg.space.max_width = field_or(sp, "max_width", 5);
    cfg.space.grid_bits = field_or(sp, "grid_bits", 6);
    cfg.space.depth_bits = field_or(sp, "depth_bits", 2);
    if (cfg.space.max_depth < 1 || cfg.space.max_width < 1 ||
        cfg.space.grid_bits < 1 || cfg.space.depth_bits < 1)
      throw UsageError("config: space dimensions must be >= 1");
  }

  if (j.contains("ga")) {
    const json& ga = j.at("ga");
    cfg.ga.population = field_or(ga, "population", 100);
    cfg.ga.generations = field_or(ga, "generations", 20);
    cfg.ga.crossover_rate = field_or(ga, "crossover_rate", 0.9);
    cfg.ga.mutation_rate = field_or(ga, "mutation_rate", 0.5);
    cfg.ga.neuron_swap_prob = field_or(ga, "neuron_swap_prob", 0.5);
    cfg.ga.per_bit_flip_prob = field_or(ga, "per_bit_flip_prob", -1.0);
    cfg.ga.tournament_size = field_or(ga, "tournament_size", 2);
    if (cfg.ga.population < 2 || cfg.ga.population % 2 != 0)
      throw UsageError("config: ga.population must be even and >= 2");
    if (cfg.ga.generations < 1)
      throw UsageError("config: ga.generations must be >= 1");
    for (double r : {cfg.ga.crossover_rate, cfg.ga.mutation_rate,
                     cfg.ga.neuron_swap_prob})
      if (r < 0.0 || r > 1.0)
        throw UsageError("config: ga rates must lie in [0, 1]");
  }

  if (j.contains("train")) {
    const json& tr = j.at("train");
    cfg.train.steps = field_or(tr, "steps", 20);
    cfg.train.history_size = field_or(tr, "history_size", 10);
    if (tr.contains("loss")) cfg.train.loss = parse_loss(tr.at("loss").get<std::string>());
    if (cfg.train.steps < 1) throw UsageError("config: train.steps must be >= 1");
  }

  cfg.seed = field_or<std::uint64_t>(j, "seed", 0);
  cfg.out_dir = field_or<std::string>(j, "out", "run");
  return cfg;
}

struct DataBundle {
  Dataset train, val, test;
  std::vector<std::string> feature_names;
  bool regression = false;
  int outputs = 1;
  std::optional<SplitResult> split;  // csv datasets only
  Dataset full;                      // csv datasets only
};

Dataset toy_dataset(ToyFormula formula, int n, std::uint64_t seed) {
  return toy_generate(formula, n, 1, seed).first;
}

DataBundle load_bundle(RunConfig& cfg) {
  DataBundle b;
  if (cfg.toy) {
    auto [train_set, val_set] =
        toy_generate(*cfg.toy, cfg.toy_train, cfg.toy_val, cfg.seed);
    b.train = std::move(train_set);
    b.val = std::move(val_set);
    b.test = toy_dataset(*cfg.toy, cfg.toy_test, mix_seed(cfg.seed, 0x7e57));
    b.regression = true;
    b.outputs = 1;
    b.feature_names = b.train.feature_names;
    cfg.train.loss = LossKind::MeanSquaredError;
    return b;
  }
  const Dataset full = load_csv(cfg.csv_path, cfg.label_column, cfg.header);
  if (!cfg.split_seed_explicit) cfg.split.seed = cfg.seed;
  SplitResult split_result = split(full, cfg.split);
  b.feature_names = full.feature_names;
  b.outputs = full.num_classes();
  b.full = full;
  b.train = std::move(split_result.train);
  b.val = std::move(split_result.val);
  b.test = std::move(split_result.test);
  b.split = std::move(split_result);
  if (cfg.train.loss == LossKind::MeanSquaredError)
    throw UsageError("config: MSE training needs a toy (regression) dataset");
  return b;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

double test_mse(const KanModel& model, const Dataset& ds) {
  return mean_squared_error(forward(model, ds.features), ds.targets);
}

KanModel finalize_best(const Individual& best, const SearchSpace& space,
                       const DataBundle& data, const RunConfig& cfg) {
  const DecodedNet net = decode(space, best.chromosome);
  const std::string key = bits_string(best.chromosome);
  const std::uint64_t model_seed =
      mix_seed(cfg.seed, fnv1a(key.data(), key.size()));
  KanModel model = init_model(net.spec, data.train.features, model_seed);
  train(model, data.train, data.val, cfg.train);
  return model;
}

int cmd_search(const std::string& config_path,
               std::optional<std::uint64_t> seed_flag,
               std::optional<int> workers_flag,
               std::optional<std::string> out_flag, bool with_symbolic,
               bool with_snapshot) {
  json config_json;
  {
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file " + config_path);
    try {
      config_json = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError(std::string("config parse error: ") + e.what());
    }
  }
  RunConfig cfg = parse_config(config_json);
  if (seed_flag) cfg.seed = *seed_flag;
  if (out_flag) cfg.out_dir = *out_flag;
  cfg.ga.seed = cfg.seed;
  cfg.ga.workers = workers_flag
                       ? *workers_flag
                       : static_cast<int>(std::thread::hardware_concurrency());
  if (cfg.ga.workers < 1) cfg.ga.workers = 1;

  DataBundle data = load_bundle(cfg);

  SearchSpace space = cfg.space;
  space.inputs = static_cast<int>(data.train.cols());
  space.outputs = data.regression ? 1 : data.outputs;

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  try {
    const GaResult result = run(space, data.train, data.val, cfg.ga, cfg.train);

    KanModel model = finalize_best(result.best, space, data, cfg);

    const DecodedNet net = decode(space, result.best.chromosome);
    write_file(out_dir / "genome.json",
               genome_json(space, result.best.chromosome, net) + "\n");
    save_model(model, (out_dir / "model.json").string());
    {
      std::ofstream hist(out_dir / "history.csv");
      write_history_csv(result, hist);
    }
    write_file(out_dir / "architecture.dot", to_dot(model, data.feature_names));

    json report;
    report["format_version"] = 1;
    config_json["seed"] = cfg.seed;
    config_json["out"] = cfg.out_dir;
    report["config"] = config_json;
    report["best"] = {{"bits", bits_string(result.best.chromosome)},
                      {"fitness", finite_or_null(result.best.fitness)},
                      {"layer_sizes", net.spec.layer_sizes},
                      {"grid", net.spec.grid},
                      {"active_edges", net.spec.active_edges()},
                      {"valid", net.valid}};
    report["param_count"] = param_count(model);
    if (data.regression) {
      report["test"] = {{"mse", test_mse(model, data.test)}};
    } else {
      const Metrics m =
          metrics(forward(model, data.test.features), data.test.labels);
      report["test"] = {{"accuracy", m.accuracy}};
      if (m.auc) report["test"]["auc"] = *m.auc;
    }
    report["evaluations"] = result.evaluations;
    report["cache_hits"] = result.cache_hits;
    report["wall_seconds"] = result.wall_seconds;
    report["fitness_history"] = "history.csv";

    if (with_symbolic) {
      KanModel sym = model;
      const auto fits = auto_symbolic(sym, data.train.features);
      const bool all = non_symbolic_edges(sym).empty();
      json jfits = json::array();
      for (const auto& f : fits)
        jfits.push_back({{"edge", {f.layer, f.row, f.col}},
                         {"primitive", primitive_info(f.primitive).name},
                         {"r2", finite_or_null(f.r2)},
                         {"accepted", f.accepted}});
      report["symbolic"] = {{"complete", all}, {"fits", jfits}};
      if (all) {
        const Formula formula = extract_formula(sym);
        write_file(out_dir / "formulas.txt", formula_text(formula));
        write_file(out_dir / "formulas.json", formula_json(formula) + "\n");
        json texts = json::array();
        for (const auto& e : formula.outputs) texts.push_back(render_expr(e));
        report["symbolic"]["formulas"] = texts;
      }
    }
    if (with_snapshot && data.split) {
      save_snapshot(data.full, *data.split,
                    (out_dir / "data_snapshot.csv").string(),
                    (out_dir / "data_snapshot.json").string());
    }

    write_file(out_dir / "report.json", report.dump(2) + "\n");
    std::cout << report.dump(2) << std::endl;
    return 0;
  } catch (const std::exception& e) {
    write_file(out_dir / "FAILED", std::string(e.what()) + "\n");
    std::cerr << "search failed: " << e.what() << std::endl;
    return 1;
  }
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& label, bool header, bool regression,
             const std::vector<double>& split_fractions,
             std::uint64_t split_seed, const std::string& part,
             bool stratified) {
  KanModel model;
  try {
    model = load_model(model_path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  Dataset ds = load_csv(data_path, label, header, regression);
  if (!split_fractions.empty()) {
    if (split_fractions.size() != 3)
      throw UsageError("--split needs train,val,test fractions");
    SplitSpec spec;
    spec.train_fraction = split_fractions[0];
    spec.val_fraction = split_fractions[1];
    spec.test_fraction = split_fractions[2];
    spec.seed = split_seed;
    spec.stratified = stratified;
    SplitResult r = split(ds, spec);
    if (part == "train") ds = std::move(r.train);
    else if (part == "val") ds = std::move(r.val);
    else if (part == "test") ds = std::move(r.test);
    else if (part != "all")
      throw UsageError("--part must be train|val|test|all");
  }
  if (ds.cols() != model.spec.inputs())
    throw UsageError("dataset has " + std::to_string(ds.cols()) +
                     " features but the model expects " +
                     std::to_string(model.spec.inputs()));

  json out;
  out["param_count"] = param_count(model);
  if (regression) {
    out["mse"] = test_mse(model, ds);
  } else {
    const Metrics m = metrics(forward(model, ds.features), ds.labels);
    out["accuracy"] = m.accuracy;
    if (m.auc) out["auc"] = *m.auc;
  }
  std::cout << out.dump(2) << std::endl;
  return 0;
}

struct FixSpec {
  int layer, row, col;
  Primitive primitive;
};

FixSpec parse_fix(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw UsageError("--fix expects l,j,i=primitive, got '" + text + "'");
  FixSpec fx{};
  if (std::sscanf(text.substr(0, eq).c_str(), "%d,%d,%d", &fx.layer, &fx.row,
                  &fx.col) != 3)
    throw UsageError("--fix expects l,j,i=primitive, got '" + text + "'");
  const auto prim = primitive_by_name(text.substr(eq + 1));
  if (!prim)
    throw UsageError("unknown primitive '" + text.substr(eq + 1) + "'");
  fx.primitive = *prim;
  return fx;
}

int cmd_symbolic(const std::string& model_path, const std::string& data_path,
                 const std::string& label, bool header, bool regression,
                 const std::vector<std::string>& fixes, bool force,
                 int finetune_steps, const std::string& out_dir_str) {
  KanModel model;
  try {
    model = load_model(model_path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const Dataset ds = load_csv(data_path, label, header, regression);
  if (ds.cols() != model.spec.inputs())
    throw UsageError("dataset feature count does not match the model");

  const fs::path out_dir(out_dir_str);
  fs::create_directories(out_dir);

  // attribution first; it only needs the spline model
  const Vector scores = feature_scores(model, ds.features);
  {
    std::ofstream att(out_dir / "attribution.csv");
    att << "feature_name,score\n";
    for (Index i = 0; i < scores.size(); ++i) {
      const std::string name =
          static_cast<std::size_t>(i) < ds.feature_names.size()
              ? ds.feature_names[static_cast<std::size_t>(i)]
              : "x" + std::to_string(i + 1);
      att << name << ',' << scores[i] << '\n';
    }
  }

  std::vector<FixSpec> fix_specs;
  for (const auto& text : fixes) fix_specs.push_back(parse_fix(text));
  const bool finetune = finetune_steps > 0 || !fix_specs.empty();
  for (const auto& fx : fix_specs) {
    if (model.edge_index(fx.layer, fx.row, fx.col) < 0)
      throw UsageError("--fix names an inactive edge (" +
                       std::to_string(fx.layer) + "," + std::to_string(fx.row) +
                       "," + std::to_string(fx.col) + ")");
    // seed the pinned primitive with its best data fit before fine-tuning
    const EdgeFit fit =
        fit_edge(model, ds.features, fx.layer, fx.row, fx.col, fx.primitive);
    fix_edge(model, fx.layer, fx.row, fx.col, fx.primitive);
    if (std::isfinite(fit.r2)) {
      const int idx = model.edge_index(fx.layer, fx.row, fx.col);
      EdgeParams& e = model.edges[static_cast<std::size_t>(idx)];
      e.sym_a = fit.a;
      e.sym_b = fit.b;
      e.sym_c = fit.c;
      e.sym_e = fit.e;
    }
  }

  SymbolicFitOptions options;
  options.force = force;
  const auto fits = auto_symbolic(model, ds.features, options);
  {
    json jfits = json::array();
    for (const auto& f : fits)
      jfits.push_back({{"edge", {f.layer, f.row, f.col}},
                       {"primitive", primitive_info(f.primitive).name},
                       {"r2", finite_or_null(f.r2)},
                       {"accepted", f.accepted}});
    write_file(out_dir / "edge_fits.json", jfits.dump(2) + "\n");
  }

  const auto holdouts = non_symbolic_edges(model);
  if (!holdouts.empty()) {
    std::string msg = "edges below the r2 threshold:";
    for (const auto& e : holdouts)
      msg += " (" + std::to_string(e[0]) + "," + std::to_string(e[1]) + "," +
             std::to_string(e[2]) + ")";
    throw NotReadyError(msg + "; rerun with --force to adopt the best fits");
  }

  if (finetune) {
    TrainConfig tc;
    tc.steps = finetune_steps > 0 ? finetune_steps : 20;
    tc.loss = regression ? LossKind::MeanSquaredError : LossKind::CrossEntropy;
    train(model, ds, ds, tc);
  }

  const Formula formula = extract_formula(model);
  write_file(out_dir / "formulas.txt", formula_text(formula));
  write_file(out_dir / "formulas.json", formula_json(formula) + "\n");
  save_model(model, (out_dir / "model_symbolic.json").string());
  std::cout << formula_text(formula);
  return 0;
}

int cmd_toy(const std::string& formula_name, int n, const std::string& out_path,
            std::uint64_t seed) {
  if (n < 1) throw UsageError("--n must be >= 1");
  const Dataset ds = toy_dataset(parse_toy_name(formula_name), n, seed);
  save_csv(ds, out_path);
  std::cout << "wrote " << n << " samples to " << out_path << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GA-driven sparse KAN architecture search"};
  app.require_subcommand(1);

  auto* search = app.add_subcommand("search", "evolve a KAN on a dataset");
  std::string config_path;
  search->add_option("--config", config_path, "run configuration JSON")
      ->required();
  std::optional<std::uint64_t> seed_flag;
  search->add_option("--seed", seed_flag, "override the config seed");
  std::optional<int> workers_flag;
  search->add_option("--workers", workers_flag,
                     "max concurrent fitness evaluations");
  std::optional<std::string> out_flag;
  search->add_option("--out", out_flag, "output directory");
  bool with_symbolic = false;
  search->add_flag("--symbolic", with_symbolic,
                   "also extract formulae from the best model");
  bool with_snapshot = false;
  search->add_flag("--snapshot", with_snapshot,
                   "write the dataset snapshot and split indices");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  std::string model_path, data_path, label = "class";
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--data", data_path, "dataset CSV")->required();
  eval->add_option("--label", label, "label column (name or index)");
  bool no_header = false;
  eval->add_flag("--no-header", no_header, "CSV has no header row");
  bool regression = false;
  eval->add_flag("--regression", regression, "label column holds targets");
  std::vector<double> split_fractions;
  eval->add_option("--split", split_fractions,
                   "train val test fractions for part selection")
      ->expected(3);
  std::uint64_t split_seed = 0;
  eval->add_option("--split-seed", split_seed, "split shuffle seed");
  std::string part = "all";
  eval->add_option("--part", part, "train|val|test|all (default all)");
  bool no_stratify = false;
  eval->add_flag("--no-stratify", no_stratify, "disable stratified splitting");

  auto* symbolic =
      app.add_subcommand("symbolic", "fit formulae to a trained model");
  std::string s_model, s_data, s_label = "class", s_out = ".";
  symbolic->add_option("--model", s_model, "model JSON")->required();
  symbolic->add_option("--data", s_data, "dataset CSV")->required();
  symbolic->add_option("--label", s_label, "label column (name or index)");
  bool s_no_header = false;
  symbolic->add_flag("--no-header", s_no_header, "CSV has no header row");
  bool s_regression = false;
  symbolic->add_flag("--regression", s_regression,
                     "label column holds targets");
  std::vector<std::string> fixes;
  symbolic->add_option("--fix", fixes, "pin an edge: l,j,i=primitive");
  bool force = false;
  symbolic->add_flag("--force", force, "adopt best fits below the threshold");
  int finetune_steps = 0;
  symbolic->add_option(
      "--finetune-steps", finetune_steps,
      "training steps after fixing edges (default 20 with --fix)");
  symbolic->add_option("--out", s_out, "output directory (default .)");

  auto* toy = app.add_subcommand("toy", "generate a toy regression CSV");
  std::string formula_name, toy_out = "toy.csv";
  toy->add_option("--formula", formula_name, "eq6a or eq6b")->required();
  int toy_n = 1000;
  toy->add_option("--n", toy_n, "sample count");
  toy->add_option("--out", toy_out, "output CSV path");
  std::uint64_t toy_seed = 0;
  toy->add_option("--seed", toy_seed, "sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << std::endl;
    return 2;
  }

  try {
    if (*search)
      return cmd_search(config_path, seed_flag, workers_flag, out_flag,
                        with_symbolic, with_snapshot);
    if (*eval)
      return cmd_eval(model_path, data_path, label, !no_header, regression,
                      split_fractions, split_seed, part, !no_stratify);
    if (*symbolic)
      return cmd_symbolic(s_model, s_data, s_label, !s_no_header, s_regression,
                          fixes, force, finetune_steps, s_out);
    if (*toy) return cmd_toy(formula_name, toy_n, toy_out, toy_seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const NotReadyError& e) {
    std::cerr << "not ready: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
