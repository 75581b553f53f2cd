// hybridtree: simulate portfolios, fit and tune hybrid trees, predict, score
// and compare models, export the classification tree as DOT.
//
// Commands that write to --out also write manifest.json with the resolved
// options; `hybridtree <command> --config <dir>/manifest.json --force`
// repeats the run.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hybridtree/hybridtree.hpp"

namespace fs = std::filesystem;
using namespace hybridtree;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

// ---------------------------------------------------------------------------
// Config files

std::string flag_of(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return hybridtree::detail::format_double(v.get<double>());
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw ValidationError("config values must be numbers, strings, booleans or lists of those");
}

// Splices the options of a JSON config file into the argument list; anything
// already on the command line wins. A manifest from an earlier run also works.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::ifstream in(*path);
  if (!in) throw ValidationError("cannot open config file '" + *path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config file '" + *path + "': " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
  if (j.contains("command") && j.contains("config")) {
    const auto cmd = j.at("command").get<std::string>();
    if (args.size() > 1 && args[1] != cmd)
      throw ValidationError("config file is a manifest for '" + cmd + "', not '" + args[1] + "'");
    j = j.at("config");
  }
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = flag_of(key);
    if (key == "config" || has_flag(args, flag) || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + json_scalar(v);
      if (!joined.empty()) extra.push_back(flag + "=" + joined);
    } else {
      extra.push_back(flag + "=" + json_scalar(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

ojson typed(const std::string& s) {
  static const std::string digits = "0123456789";
  const bool integral = !s.empty() && s.find_first_not_of(digits, s[0] == '-' ? 1 : 0) == std::string::npos &&
                        s != "-";
  if (integral) {
    try {
      if (s[0] == '-') return std::stoll(s);
      return std::stoull(s);
    } catch (const std::out_of_range&) {
    }
  }
  if (auto d = hybridtree::detail::parse_double(s); d && std::isfinite(*d)) return *d;
  return s;
}

// Every option of the command with its resolved value, keyed like the config file.
ojson resolved_options(const CLI::App& sub) {
  ojson out = ojson::object();
  for (const CLI::Option* opt : sub.get_options()) {
    std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "force") continue;
    std::replace(name.begin(), name.end(), '-', '_');
    if (opt->get_type_size_max() == 0) {
      out[name] = opt->count() > 0;
      continue;
    }
    std::vector<std::string> values = opt->results();
    if (values.empty()) {
      const std::string d = opt->get_default_str();
      if (d.empty()) continue;
      values.push_back(d);
    }
    if (opt->get_items_expected_max() > 1) {
      ojson arr = ojson::array();
      for (const auto& v : values) arr.push_back(typed(v));
      out[name] = arr;
    } else {
      out[name] = typed(values.back());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output files

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class OutputDir {
 public:
  OutputDir(const std::string& dir, std::vector<std::string> files, bool force) : dir_(dir), files_(std::move(files)) {
    if (dir.empty()) throw ValidationError("--out is required");
    if (fs::exists(dir_) && !fs::is_directory(dir_))
      throw ValidationError("--out '" + dir + "' exists and is not a directory");
    files_.push_back("manifest.json");
    for (const auto& f : files_)
      if (fs::exists(dir_ / f) && !force)
        throw ValidationError("'" + (dir_ / f).string() + "' already exists (use --force to overwrite)");
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content)) throw IngestionError("cannot write '" + (dir_ / name).string() + "'");
  }

  void write_manifest(const CLI::App& sub, std::uint64_t seed, ojson extra = ojson::object()) const {
    ojson m;
    m["command"] = sub.get_name();
    m["hybridtree_version"] = kVersionString;
    m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"cli11", CLI11_VERSION}};
    m["seed"] = seed;
    m["created_utc"] = utc_now();
    m["config"] = resolved_options(sub);
    ojson outputs = ojson::array();
    for (const auto& f : files_)
      if (f != "manifest.json" && fs::exists(dir_ / f)) outputs.push_back(f);
    m["outputs"] = outputs;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write("manifest.json", m.dump(2) + "\n");
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::string predictions_csv(const std::vector<Prediction>& preds) {
  std::ostringstream os;
  hybridtree::detail::write_csv_row(os, {"row", "terminal_id", "raw", "clipped"});
  for (std::size_t i = 0; i < preds.size(); ++i)
    hybridtree::detail::write_csv_row(os, {std::to_string(i + 1), std::to_string(preds[i].terminal_id),
                                           hybridtree::detail::format_double(preds[i].raw),
                                           hybridtree::detail::format_double(preds[i].clipped)});
  return os.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Hyperparameter flags shared by train, tune and compare

struct HyperparamFlags {
  HybridHyperparams hp;
  std::string severity = "ols";
  std::string glm_lambda = "lambda.min";

  void add(CLI::App* sub) {
    sub->add_option("--cp", hp.cp, "Complexity parameter for pruning");
    sub->add_option("--maxdepth", hp.maxdepth, "Maximum tree depth");
    sub->add_option("--minsplit", hp.minsplit, "Rows a node needs before it may split");
    sub->add_option("--zero-threshold", hp.zero_threshold, "Terminal zero fraction above which it predicts 0");
    sub->add_option("--severity", severity, "Terminal regression: ols or elastic_net");
    sub->add_option("--glm-which", hp.glm_which, "Elastic-net mixing (1 = LASSO, 0 = ridge)");
    sub->add_option("--glm-lambda", glm_lambda, "Penalty size, or lambda.min for cross-validation");
    sub->add_option("--min-node-linear", hp.min_node_linear, "Smallest terminal that gets a linear model");
    sub->add_option("--lambda-folds", hp.lambda_folds, "Folds used to pick lambda.min");
  }

  HybridHyperparams resolve() {
    hp.severity_learner = severity_learner_from_string(severity);
    if (glm_lambda == "lambda.min") {
      hp.glm_lambda.reset();
    } else {
      const auto v = hybridtree::detail::parse_double(glm_lambda);
      if (!v) throw ValidationError("--glm-lambda must be a number or lambda.min, got '" + glm_lambda + "'");
      hp.glm_lambda = *v;
    }
    validate(hp);
    return hp;
  }
};

Dataset load_dataset(const std::string& data, const std::string& schema) {
  if (data.empty()) throw ValidationError("--data is required");
  if (schema.empty()) throw ValidationError("--schema is required");
  return load_csv(data, load_schema(schema));
}

std::string variant_counts(const HybridModel& m) {
  std::map<std::string, int> counts;
  for (const auto& [id, tm] : m.terminals) ++counts[variant_name(tm.model)];
  std::string s;
  for (const auto& [k, v] : counts) s += (s.empty() ? "" : ", ") + std::to_string(v) + " " + k;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  CLI::App app{"Hybrid tree models for insurance claims", "hybridtree"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersionString);
  std::function<void()> run;
  std::string config_path;
  bool force = false;

  auto command = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->option_defaults()->always_capture_default();
    sub->add_option("--config", config_path, "JSON file of options; flags override it");
    sub->add_flag("--force", force, "Overwrite existing outputs");
    return sub;
  };

  // simulate ----------------------------------------------------------------
  sim::SimConfig sc;
  std::string sim_out;
  double noise_sd = 0.0;
  bool latents = false;
  std::vector<double> beta_poisson, beta_gamma;
  CLI::App* simulate = command("simulate", "Generate a synthetic compound Poisson-gamma portfolio");
  simulate->add_option("--n", sc.n, "Rows");
  simulate->add_option("--seed", sc.seed, "Random seed");
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--p-continuous", sc.p_continuous, "Correlated normal features");
  simulate->add_option("--p-categorical", sc.p_categorical, "Integer features on {-3,-2,1,4}");
  simulate->add_option("--rho", sc.rho, "Correlation decay, Cov = rho^|i-j|");
  simulate->add_option("--power", sc.power, "Tweedie power, in (1, 2)");
  simulate->add_option("--phi", sc.phi, "Dispersion");
  auto* noise_opt = simulate->add_option("--noise-sd", noise_sd, "Absolute sd of noise on positive claims");
  simulate->add_option("--noise-scale", sc.noise_scale, "Noise sd as a multiple of sd(positive claims)");
  simulate->add_option("--beta-poisson", beta_poisson, "Frequency coefficients, intercept first")->delimiter(',');
  simulate->add_option("--beta-gamma", beta_gamma, "Severity coefficients, intercept first")->delimiter(',');
  simulate->add_flag("--latents", latents, "Also write per-row latent variables");
  simulate->callback([&] {
    run = [&] {
      if (noise_opt->count() > 0) sc.noise_sd = noise_sd;
      sc.beta_poisson = beta_poisson.empty() ? sim::default_beta_poisson(sc.p_continuous, sc.p_categorical) : beta_poisson;
      sc.beta_gamma = beta_gamma.empty() ? sim::default_beta_gamma(sc.p_continuous, sc.p_categorical) : beta_gamma;
      sim::validate(sc);
      std::vector<std::string> files{"portfolio.csv", "schema.json"};
      if (latents) files.push_back("latents.csv");
      const OutputDir out(sim_out, files, force);
      const auto portfolio = sim::simulate(sc);
      std::ostringstream data;
      write_csv(data, portfolio.dataset);
      out.write("portfolio.csv", data.str());
      out.write("schema.json", schema_to_json(portfolio.dataset.schema).dump(2) + "\n");
      if (latents) {
        std::ostringstream lat;
        sim::write_latents_csv(lat, portfolio);
        out.write("latents.csv", lat.str());
      }
      const double zf = sim::zero_fraction(portfolio.dataset.y);
      out.write_manifest(*simulate, sc.seed,
                         {{"rng", sim::kRngName},
                          {"noise_sd_resolved", portfolio.noise_sd},
                          {"zero_fraction", zf},
                          {"simulation", sim::to_json(sc)}});
      std::cout << "simulated " << sc.n << " rows, zero fraction " << zf << ", noise sd " << portfolio.noise_sd
                << " -> " << out.path("portfolio.csv").string() << '\n';
    };
  });

  // train -------------------------------------------------------------------
  std::string data_path, schema_path, out_dir;
  HyperparamFlags train_flags;
  CLI::App* train = command("train", "Fit a hybrid tree");
  train->add_option("--data", data_path, "Training CSV")->required();
  train->add_option("--schema", schema_path, "Schema JSON")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", train_flags.hp.seed, "Seed for lambda.min cross-validation");
  train_flags.add(train);
  train->callback([&] {
    run = [&] {
      const auto hp = train_flags.resolve();
      const OutputDir out(out_dir, {"model.json", "terminals.csv", "coefficients.csv", "fitted.csv"}, force);
      const auto ds = load_dataset(data_path, schema_path);
      const auto model = fit(ds, hp);
      out.write("model.json", serialize(model));
      out.write("terminals.csv", terminal_summary_csv(model));
      out.write("coefficients.csv", coefficient_report(model).to_csv());
      const auto fitted = predict_batch(model, ds);
      out.write("fitted.csv", predictions_csv(fitted));
      Eigen::VectorXd pred(static_cast<Eigen::Index>(fitted.size()));
      for (std::size_t i = 0; i < fitted.size(); ++i) pred[static_cast<Eigen::Index>(i)] = fitted[i].clipped;
      const double train_rmse = ds.n() ? std::sqrt((pred - ds.y).squaredNorm() / static_cast<double>(ds.n())) : 0.0;
      out.write_manifest(*train, hp.seed,
                         {{"n_rows", ds.n()},
                          {"n_terminals", model.tree.n_terminals()},
                          {"cost_complexity_alpha", model.metadata.alpha},
                          {"train_rmse", train_rmse}});
      std::cout << "fitted " << ds.n() << " rows: " << model.tree.n_terminals() << " terminals ("
                << variant_counts(model) << "), training RMSE " << train_rmse << '\n';
    };
  });

  // tune --------------------------------------------------------------------
  std::string grid_arg;
  std::size_t folds = 10;
  HyperparamFlags tune_flags;
  CLI::App* tune = command("tune", "Grid search with k-fold cross-validation");
  tune->add_option("--data", data_path, "Training CSV")->required();
  tune->add_option("--schema", schema_path, "Schema JSON")->required();
  tune->add_option("--grid", grid_arg, "Grid JSON file (or inline JSON object)")->required();
  tune->add_option("--folds", folds, "Cross-validation folds");
  tune->add_option("--seed", tune_flags.hp.seed, "Seed for fold assignment");
  tune->add_option("--out", out_dir, "Output directory")->required();
  tune_flags.add(tune);
  tune->callback([&] {
    run = [&] {
      const auto base = tune_flags.resolve();
      const std::string text = !grid_arg.empty() && grid_arg.front() == '{' ? grid_arg : read_text(grid_arg);
      eval::GridSpec grid;
      try {
        grid = eval::grid_from_json(nlohmann::ordered_json::parse(text));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("grid: ") + e.what());
      }
      // reject bad cells before spending time on data
      for (const auto& cell : eval::expand_grid(grid)) eval::apply_params(base, cell);
      const OutputDir out(out_dir, {"cv_table.csv", "winner.json"}, force);
      const auto ds = load_dataset(data_path, schema_path);
      const auto result = eval::grid_search(ds, grid, eval::hybrid_learner_factory(base), folds, base.seed);
      out.write("cv_table.csv", eval::cv_table_csv(result));
      const auto& best = result.results[result.winner];
      ojson winner;
      winner["cell"] = result.winner + 1;
      winner["params"] = eval::to_json(result.cells[result.winner]);
      winner["mean_rmse"] = best.mean;
      winner["sd_rmse"] = best.sd;
      winner["hyperparams"] = to_json(eval::apply_params(base, result.cells[result.winner]));
      out.write("winner.json", winner.dump(2) + "\n");
      out.write_manifest(*tune, base.seed, {{"cells", result.cells.size()}});
      std::cout << "evaluated " << result.cells.size() << " cells with " << folds << "-fold CV; winner cell "
                << result.winner + 1 << " " << eval::to_json(result.cells[result.winner]).dump() << " mean RMSE "
                << best.mean << '\n';
    };
  });

  // predict -----------------------------------------------------------------
  std::string model_path;
  CLI::App* predict_cmd = command("predict", "Predict claims with a fitted model");
  predict_cmd->add_option("--model", model_path, "Model JSON")->required();
  predict_cmd->add_option("--data", data_path, "CSV to score")->required();
  predict_cmd->add_option("--schema", schema_path, "Schema JSON (default: the model's)");
  predict_cmd->add_option("--out", out_dir, "Output directory (default: stdout)");
  predict_cmd->callback([&] {
    run = [&] {
      std::optional<OutputDir> out;
      if (!out_dir.empty()) out.emplace(out_dir, std::vector<std::string>{"predictions.csv"}, force);
      const auto model = load(model_path);
      const Schema schema = schema_path.empty() ? model.schema : load_schema(schema_path);
      const auto ds = load_csv(data_path, schema, true);
      const std::string csv = predictions_csv(predict_batch(model, ds));
      if (!out) {
        std::cout << csv;
        return;
      }
      out->write("predictions.csv", csv);
      out->write_manifest(*predict_cmd, model.metadata.seed, {{"n_rows", ds.n()}});
    };
  });

  // evaluate ----------------------------------------------------------------
  std::string predictions_path, column = "clipped";
  CLI::App* evaluate = command("evaluate", "Validation measures for a predictions file");
  evaluate->add_option("--predictions", predictions_path, "Predictions CSV")->required();
  evaluate->add_option("--column", column, "Prediction column to score");
  evaluate->add_option("--data", data_path, "CSV holding the actual responses")->required();
  evaluate->add_option("--schema", schema_path, "Schema JSON")->required();
  evaluate->add_option("--out", out_dir, "Output directory (default: stdout)");
  evaluate->callback([&] {
    run = [&] {
      std::optional<OutputDir> out;
      if (!out_dir.empty()) out.emplace(out_dir, std::vector<std::string>{"metrics.json"}, force);
      const auto ds = load_dataset(data_path, schema_path);
      std::ifstream in(predictions_path, std::ios::binary);
      if (!in) throw IngestionError("cannot open predictions file '" + predictions_path + "'");
      hybridtree::detail::CsvRecord rec;
      std::size_t line = 0;
      if (!hybridtree::detail::read_csv_record(in, rec, line))
        throw IngestionError(predictions_path + ": missing header row");
      const auto col = std::find(rec.fields.begin(), rec.fields.end(), column);
      if (col == rec.fields.end()) throw ValidationError(predictions_path + ": no column '" + column + "'");
      const auto k = static_cast<std::size_t>(col - rec.fields.begin());
      std::vector<double> values;
      while (hybridtree::detail::read_csv_record(in, rec, line)) {
        if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
        const auto v = k < rec.fields.size() ? hybridtree::detail::parse_double(rec.fields[k]) : std::nullopt;
        if (!v) throw IngestionError(predictions_path + ": line " + std::to_string(rec.line) + ": bad value");
        values.push_back(*v);
      }
      if (values.size() != ds.n())
        throw ValidationError("predictions have " + std::to_string(values.size()) + " rows, data has " +
                              std::to_string(ds.n()));
      const Eigen::VectorXd yhat = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
      const auto report = eval::compute_metrics(ds.y, yhat);
      const std::string text = eval::to_json(report).dump(2) + "\n";
      if (!out) {
        std::cout << text;
        return;
      }
      out->write("metrics.json", text);
      out->write_manifest(*evaluate, 0);
    };
  });

  // compare -----------------------------------------------------------------
  std::vector<std::string> model_paths, model_names;
  std::string train_path, test_path;
  bool baselines = false;
  CLI::App* compare = command("compare", "Rescaled comparison table of several models");
  compare->add_option("--models", model_paths, "Model JSON files")->delimiter(',');
  compare->add_option("--names", model_names, "Display names, one per model")->delimiter(',');
  compare->add_option("--train", train_path, "Training CSV")->required();
  compare->add_option("--test", test_path, "Test CSV")->required();
  compare->add_option("--schema", schema_path, "Schema JSON")->required();
  compare->add_flag("--baselines", baselines, "Add the constant-mean and regression-tree baselines");
  compare->add_option("--out", out_dir, "Output directory")->required();
  compare->callback([&] {
    run = [&] {
      if (!model_names.empty() && model_names.size() != model_paths.size())
        throw ValidationError("--names needs one entry per model");
      if (model_paths.size() + (baselines ? 2 : 0) < 2)
        throw ValidationError("compare needs at least 2 models (add --baselines or more --models)");
      const OutputDir out(out_dir, {"comparison.csv", "train.svg", "test.svg"}, force);
      const auto schema = load_schema(schema_path);
      const auto train_ds = load_csv(train_path, schema);
      const auto test_ds = load_csv(test_path, schema);
      std::vector<eval::NamedPredictor> models;
      std::set<std::string> used;
      for (std::size_t i = 0; i < model_paths.size(); ++i) {
        auto model = std::make_shared<HybridModel>(load(model_paths[i]));
        std::string name = model_names.empty() ? fs::path(model_paths[i]).parent_path().filename().string() + "/" +
                                                     fs::path(model_paths[i]).stem().string()
                                               : model_names[i];
        if (model_names.empty() && name.front() == '/') name.erase(0, 1);
        if (!used.insert(name).second) name += "#" + std::to_string(i + 1);
        models.push_back({name, [model](const Dataset& ds) { return eval::clipped_predictions(*model, ds); }});
      }
      if (baselines) {
        models.push_back({"mean", eval::constant_mean_learner()(train_ds)});
        models.push_back({"regression_tree", eval::regression_tree_learner({})(train_ds)});
      }
      const auto [tr, te] = eval::comparison_table(models, train_ds, test_ds);
      std::string csv = tr.to_csv();
      const std::string test_csv = te.to_csv();
      csv += test_csv.substr(test_csv.find('\n') + 1);
      out.write("comparison.csv", csv);
      out.write("train.svg", tr.to_svg());
      out.write("test.svg", te.to_svg());
      std::vector<std::string> notes = tr.notes;
      notes.insert(notes.end(), te.notes.begin(), te.notes.end());
      out.write_manifest(*compare, 0, {{"notes", notes}});
      for (std::size_t i = 0; i < te.models.size(); ++i)
        std::cout << te.models[i] << ": test RMSE " << te.raw[i][3] << ", Gini " << te.raw[i][0] << '\n';
    };
  });

  // export-tree -------------------------------------------------------------
  std::vector<std::uint64_t> highlight;
  CLI::App* export_tree = command("export-tree", "Write the classification tree as Graphviz DOT");
  export_tree->add_option("--model", model_path, "Model JSON")->required();
  export_tree->add_option("--highlight", highlight, "Node ids whose root paths are filled")->delimiter(',');
  export_tree->add_option("--out", out_dir, "Output directory (default: stdout)");
  export_tree->callback([&] {
    run = [&] {
      std::optional<OutputDir> out;
      if (!out_dir.empty()) out.emplace(out_dir, std::vector<std::string>{"tree.dot"}, force);
      const auto model = load(model_path);
      std::vector<std::uint64_t> path;
      for (auto id : highlight) {
        model.tree.node(id);  // throws for unknown ids
        for (auto a = id; a >= 1; a /= 2) path.push_back(a);
      }
      const auto names = model.feature_names();
      const std::string dot = cart::to_dot(model.tree, names, path);
      if (!out) {
        std::cout << dot;
        return;
      }
      out->write("tree.dot", dot);
      out->write_manifest(*export_tree, model.metadata.seed);
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (run) run();
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
