#include "croco/cli.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "croco/error.hpp"
#include "croco/robustness.hpp"

namespace croco {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, _] : obj.items()) {
    if (!known.count(k)) {
      throw ConfigError("cli", where.empty() ? k : where + "." + k, "unknown config field",
                        "check the spelling against the README");
    }
  }
}

template <typename T>
T get(const json& obj, const char* field, const std::string& where, T fallback) {
  if (!obj.contains(field)) return fallback;
  try {
    return obj.at(field).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("cli", where.empty() ? field : where + "." + field,
                      "has the wrong type: " + obj.at(field).dump());
  }
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "uniform-ball") return NoiseKind::UniformBall;
  throw ConfigError("cli", "noise.kind", "unknown noise kind '" + name + "'",
                    "use gaussian or uniform-ball");
}

json vector_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

Vector vector_from(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw ParseError("cli", field, "missing or not an array");
  }
  const auto values = j[field].get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

MlpClassifier with_threshold(const MlpClassifier& model, double t) {
  return MlpClassifier(model.layers(), t);
}

}  // namespace

void RunConfig::validate() const {
  const bool has_csv = csv.has_value() || schema.has_value();
  if (has_csv == synthetic.has_value()) {
    throw ConfigError("cli", "data", "exactly one data source is required",
                      "give either data.csv + data.schema or data.synthetic");
  }
  if (has_csv && !(csv && schema)) {
    throw ConfigError("cli", "data", "a CSV source needs both data.csv and data.schema");
  }
  if (model_path.has_value() == train.has_value()) {
    throw ConfigError("cli", "model", "exactly one model source is required",
                      "give either model.path or model.train");
  }
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
    throw ConfigError("cli", "data.split", "must lie in (0, 1]");
  }
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw ConfigError("cli", "threshold", "must lie in [0, 1)");
  }
  if (methods.empty()) throw ConfigError("cli", "methods", "at least one method is required");
  if (noise_scales.empty()) throw ConfigError("cli", "noise", "the noise grid is empty");
  for (const double s : noise_scales) {
    if (!(s > 0.0)) throw ConfigError("cli", "noise", fmt::format("scale {} must be > 0", s));
  }
  const bool targeted = std::any_of(methods.begin(), methods.end(),
                                    [](Method m) { return m != Method::Wachter; });
  if (targeted && targets.empty()) throw ConfigError("cli", "targets", "the target grid is empty");
  for (const double target : targets) {
    if (!(target > 0.0 && target < 1.0)) {
      throw ConfigError("cli", "targets", fmt::format("target {} is outside (0, 1)", target));
    }
  }
  if (samples < 1) throw ConfigError("cli", "K", "must be >= 1");
  if (!(tightness > 0.0)) throw ConfigError("cli", "m", "must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("cli", "learning_rate", "must be > 0");
  if (!(lambda_init >= 0.0) || !(lambda_decrement >= 0.0)) {
    throw ConfigError("cli", "lambda_init", "lambda settings must be >= 0");
  }
  if (max_inner_iters < 1 || max_outer_steps < 1) {
    throw ConfigError("cli", "max_inner_iters", "iteration budgets must be >= 1");
  }
  if (instances < 1) throw ConfigError("cli", "instances", "must be >= 1");
  if (k_eval < 1) throw ConfigError("cli", "k_eval", "must be >= 1");
  if (jobs < 1) throw ConfigError("cli", "jobs", "must be >= 1");
  const bool has_probe = std::find(methods.begin(), methods.end(), Method::Probe) != methods.end();
  if (has_probe && noise_kind != NoiseKind::Gaussian) {
    throw ConfigError("cli", "noise.kind", "PROBE needs Gaussian noise");
  }
  const bool has_croco = std::find(methods.begin(), methods.end(), Method::Croco) != methods.end();
  if (has_croco && !allow_unreachable_targets) {
    const double floor = tightness / (1.0 - threshold);
    for (const double target : targets) {
      if (!(target > floor)) {
        throw ConfigError(
            "cli", "targets",
            fmt::format("CROCO target {} is unreachable: the bound is at least m / (1 - t) = {}",
                        target, floor),
            "drop the target, lower m, or set allow_unreachable_targets");
      }
    }
  }
}

GenerationConfig RunConfig::generation_config(std::size_t dimension,
                                               const std::vector<bool>& frozen) const {
  GenerationConfig g;
  g.method = methods.front();
  g.target = targets.empty() ? 0.5 : targets.front();
  g.noise = noise_kind == NoiseKind::Gaussian
                ? NoiseSpec::gaussian(noise_scales.front(), dimension, seed)
                : NoiseSpec::uniform_ball(noise_scales.front(), dimension, seed);
  if (!frozen.empty()) g.noise.frozen = frozen;
  g.samples = samples;
  g.tightness = tightness;
  g.learning_rate = learning_rate;
  g.lambda_init = lambda_init;
  g.lambda_decrement = lambda_decrement;
  g.max_inner_iters = max_inner_iters;
  g.max_outer_steps = max_outer_steps;
  g.validity_loss = validity_loss;
  g.allow_unreachable_target = allow_unreachable_targets;
  return g;
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("cli", "config", "expected a JSON object");
  reject_unknown(doc,
                 {"data", "model", "threshold", "methods", "noise", "targets", "K", "m",
                  "learning_rate", "lambda_init", "lambda_decrement", "max_inner_iters",
                  "max_outer_steps", "validity_loss", "allow_unreachable_targets", "instances",
                  "k_eval", "seed", "jobs", "out"},
                 "");
  RunConfig c;
  c.seed = get<std::uint64_t>(doc, "seed", "", c.seed);

  if (doc.contains("data")) {
    const auto& d = doc["data"];
    reject_unknown(d, {"csv", "schema", "synthetic", "split"}, "data");
    if (d.contains("csv")) c.csv = get<std::string>(d, "csv", "data", "");
    if (d.contains("schema")) c.schema = get<std::string>(d, "schema", "data", "");
    c.split_fraction = get<double>(d, "split", "data", c.split_fraction);
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      reject_unknown(s, {"rows", "separation", "seed"}, "data.synthetic");
      SyntheticSpec spec;
      spec.rows = get<std::size_t>(s, "rows", "data.synthetic", spec.rows);
      spec.separation = get<double>(s, "separation", "data.synthetic", spec.separation);
      spec.seed = get<std::uint64_t>(s, "seed", "data.synthetic", c.seed);
      c.synthetic = spec;
    }
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    reject_unknown(m, {"path", "train"}, "model");
    if (m.contains("path")) c.model_path = get<std::string>(m, "path", "model", "");
    if (m.contains("train")) {
      const auto& t = m["train"];
      reject_unknown(t, {"hidden", "learning_rate", "epochs", "batch_size", "seed"}, "model.train");
      TrainParams p;
      p.hidden = get<std::vector<int>>(t, "hidden", "model.train", p.hidden);
      p.learning_rate = get<double>(t, "learning_rate", "model.train", p.learning_rate);
      p.epochs = get<int>(t, "epochs", "model.train", p.epochs);
      p.batch_size = get<int>(t, "batch_size", "model.train", p.batch_size);
      p.seed = get<std::uint64_t>(t, "seed", "model.train", c.seed);
      c.train = p;
    }
  }
  c.threshold = get<double>(doc, "threshold", "", c.threshold);
  if (c.train) c.train->threshold = c.threshold;

  if (doc.contains("methods")) {
    c.methods.clear();
    for (const auto& name : get<std::vector<std::string>>(doc, "methods", "", {})) {
      c.methods.push_back(parse_method(name));
    }
  }
  if (doc.contains("noise")) {
    const auto& n = doc["noise"];
    reject_unknown(n, {"kind", "variances", "radii"}, "noise");
    c.noise_kind = parse_noise_kind(get<std::string>(n, "kind", "noise", "gaussian"));
    const char* grid = c.noise_kind == NoiseKind::Gaussian ? "variances" : "radii";
    c.noise_scales = get<std::vector<double>>(n, grid, "noise", c.noise_scales);
  }
  c.targets = get<std::vector<double>>(doc, "targets", "", c.targets);
  c.samples = get<std::size_t>(doc, "K", "", c.samples);
  c.tightness = get<double>(doc, "m", "", c.tightness);
  c.learning_rate = get<double>(doc, "learning_rate", "", c.learning_rate);
  c.lambda_init = get<double>(doc, "lambda_init", "", c.lambda_init);
  c.lambda_decrement = get<double>(doc, "lambda_decrement", "", c.lambda_decrement);
  c.max_inner_iters = get<int>(doc, "max_inner_iters", "", c.max_inner_iters);
  c.max_outer_steps = get<int>(doc, "max_outer_steps", "", c.max_outer_steps);
  if (doc.contains("validity_loss")) {
    c.validity_loss = parse_validity_loss(get<std::string>(doc, "validity_loss", "", ""));
  }
  c.allow_unreachable_targets =
      get<bool>(doc, "allow_unreachable_targets", "", c.allow_unreachable_targets);
  c.instances = get<std::size_t>(doc, "instances", "", c.instances);
  c.k_eval = get<std::size_t>(doc, "k_eval", "", c.k_eval);
  c.jobs = get<int>(doc, "jobs", "", c.jobs);
  c.out = get<std::string>(doc, "out", "", c.out.string());
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cli", "--config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("cli", "--config", e.what());
  }
  RunConfig c = parse_run_config(doc);
  // Input paths are relative to the config file.
  const auto base = path.parent_path();
  auto resolve = [&](std::optional<std::filesystem::path>& p) {
    if (p && p->is_relative()) p = base / *p;
  };
  resolve(c.csv);
  resolve(c.schema);
  resolve(c.model_path);
  return c;
}

Workspace prepare_workspace(const RunConfig& config) {
  config.validate();
  Dataset raw = config.synthetic
                    ? synth_two_gaussians(config.synthetic->rows, config.synthetic->separation,
                                          config.synthetic->seed)
                    : load_csv(*config.csv, load_schema(*config.schema));
  Dataset data = normalize(raw);
  auto [train_set, test_set] = split(data, config.split_fraction, config.seed);

  std::optional<MlpClassifier> model;
  if (config.model_path) {
    model = with_threshold(load_weights(*config.model_path), config.threshold);
    if (static_cast<std::size_t>(model->input_dim()) != data.dimension()) {
      throw ConfigError("cli", "model.path",
                        fmt::format("model expects {} features, data has {}", model->input_dim(),
                                    data.dimension()));
    }
  } else {
    spdlog::info("training on {} rows", train_set.rows());
    model = train(train_set.features, train_set.labels, *config.train).model;
  }
  Workspace ws{std::move(data), std::move(train_set), std::move(test_set), std::move(*model)};
  ws.train_accuracy = accuracy(ws.model, ws.train.features, ws.train.labels);
  ws.test_accuracy = accuracy(ws.model, ws.test.features, ws.test.labels);
  spdlog::info("accuracy: train {:.4f}, test {:.4f}", ws.train_accuracy, ws.test_accuracy);
  return ws;
}

std::vector<std::size_t> negative_instances(const Workspace& ws, std::size_t limit) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ws.test.rows() && rows.size() < limit; ++i) {
    if (ws.model.predict_class(ws.test.row(i)) == 0) rows.push_back(i);
  }
  return rows;
}

TrainSummary cmd_train(const RunConfig& config) {
  if (!config.train) {
    throw ConfigError("cli", "model.train", "the train command needs training hyperparameters");
  }
  const auto ws = prepare_workspace(config);
  std::filesystem::create_directories(config.out);
  TrainSummary summary{config.out / "model.json", ws.train_accuracy, ws.test_accuracy};
  save_weights(ws.model, summary.weights);
  json metrics = {{"train_accuracy", ws.train_accuracy},
                  {"test_accuracy", ws.test_accuracy},
                  {"train_rows", ws.train.rows()},
                  {"test_rows", ws.test.rows()},
                  {"cross_entropy", cross_entropy(ws.model, ws.train.features, ws.train.labels)}};
  std::ofstream(config.out / "train_metrics.json") << metrics.dump(2) << '\n';
  return summary;
}

std::filesystem::path cmd_generate(const RunConfig& config, std::optional<std::size_t> instance) {
  const auto ws = prepare_workspace(config);
  std::vector<std::size_t> rows;
  if (instance) {
    if (*instance >= ws.test.rows()) {
      throw ConfigError("cli", "--instance",
                        fmt::format("{} is out of range; the test set has {} rows", *instance,
                                    ws.test.rows()));
    }
    rows.push_back(*instance);
  } else {
    rows = negative_instances(ws, config.instances);
  }

  const auto frozen = ws.data.frozen_mask();
  json results = json::array();
  for (const Method method : config.methods) {
    GenerationConfig g = config.generation_config(ws.data.dimension(), frozen);
    g.method = method;
    for (const std::size_t row : rows) {
      g.stream = stream_key({config.seed, static_cast<std::uint64_t>(method), row});
      const Vector x = ws.test.row(row);
      const auto r = generate(ws.model, x, g);
      json trace = json::array();
      for (const auto& e : r.trace) {
        trace.push_back({{"iteration", e.iteration},
                         {"outer_step", e.outer_step},
                         {"lambda", e.lambda},
                         {"robustness", e.robustness},
                         {"validity", e.validity},
                         {"proximity", e.proximity},
                         {"total", e.total},
                         {"probability", e.probability},
                         {"estimate", e.estimate},
                         {"bound", e.bound}});
      }
      results.push_back({{"method", to_string(method)},
                         {"instance", row},
                         {"noise_scale", g.noise.scale},
                         {"target", method == Method::Wachter ? json(nullptr) : json(g.target)},
                         {"x", vector_json(denormalize(ws.data, x))},
                         {"x_cf", vector_json(denormalize(ws.data, r.x_cf))},
                         {"x_normalized", vector_json(x)},
                         {"x_cf_normalized", vector_json(r.x_cf)},
                         {"delta", vector_json(r.delta)},
                         {"converged", r.converged},
                         {"lambda", r.lambda},
                         {"iterations", r.iterations},
                         {"gamma_tilde", r.estimate.gamma_tilde},
                         {"theta_tilde", r.estimate.theta_tilde},
                         {"bound", r.estimate.upper_bound},
                         {"confidence", r.estimate.confidence},
                         {"probe_estimate", r.probe_estimate},
                         {"trace", std::move(trace)}});
    }
  }
  std::filesystem::create_directories(config.out);
  const auto path = config.out / "counterfactuals.json";
  std::ofstream(path) << results.dump(1) << '\n';
  return path;
}

std::vector<SweepRecord> cmd_sweep(const RunConfig& config) {
  const auto ws = prepare_workspace(config);
  const auto rows = negative_instances(ws, config.instances);
  if (rows.size() < config.instances) {
    spdlog::warn("only {} of the requested {} class-0 test instances exist", rows.size(),
                 config.instances);
  }
  std::vector<Vector> instances;
  for (const auto row : rows) instances.push_back(ws.test.row(row));

  SweepOptions options;
  options.base = config.generation_config(ws.data.dimension(), ws.data.frozen_mask());
  options.grid.variances = config.noise_scales;
  options.grid.targets = config.targets;
  options.methods = config.methods;
  options.base_seed = config.seed;
  options.k_eval = config.k_eval;
  options.jobs = config.jobs;
  const auto records = run_sweep(ws.model, instances, options);

  std::filesystem::create_directories(config.out);
  emit_tradeoff(records, config.out / "tradeoff.csv");
  emit_validity_heatmap(records, config.out / "validity_heatmap.csv");
  emit_target_comparison(records, config.out / "target_comparison.csv");
  emit_bound_check(records, config.out / "bound_check.csv");
  return records;
}

void cmd_bound_table(const std::vector<double>& tightness, const std::vector<double>& levels,
                     std::ostream& out) {
  if (tightness.empty() || levels.empty()) {
    throw ConfigError("cli", "bound-table", "give at least one m and one confidence level");
  }
  out << "m,confidence,K\n";
  for (const double m : tightness) {
    for (const double c : levels) {
      out << fmt::format("{:.6g},{:.6g},{}\n", m, c, min_samples(m, c));
    }
  }
}

std::filesystem::path cmd_evaluate(const RunConfig& config, const std::filesystem::path& results) {
  const auto ws = prepare_workspace(config);
  std::ifstream in(results);
  if (!in) throw ConfigError("cli", "--input", "cannot open " + results.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("cli", "--input", e.what());
  }
  if (!doc.is_array()) throw ParseError("cli", "--input", "expected an array of results");

  const auto frozen = ws.data.frozen_mask();
  std::filesystem::create_directories(config.out);
  const auto path = config.out / "evaluation.csv";
  std::ofstream out(path);
  out << "method,instance,noise_scale,validity,distance,gamma_eval,theta_eval,bound\n";
  std::size_t index = 0;
  for (const auto& entry : doc) {
    const Vector x = vector_from(entry, "x_normalized");
    const Vector x_cf = vector_from(entry, "x_cf_normalized");
    if (static_cast<std::size_t>(x.size()) != ws.data.dimension() || x_cf.size() != x.size()) {
      throw ParseError("cli", "x_normalized", "dimension does not match the dataset");
    }
    const double scale = entry.value("noise_scale", config.noise_scales.front());
    NoiseSpec spec = config.noise_kind == NoiseKind::Gaussian
                         ? NoiseSpec::gaussian(scale, x.size(), config.seed)
                         : NoiseSpec::uniform_ball(scale, x.size(), config.seed);
    spec.frozen = frozen;
    const auto stream = stream_key({config.seed, 0xEBA1ULL, index++});
    const auto est = estimate_robustness(ws.model, x_cf, spec, config.k_eval, config.tightness,
                                         stream);
    const int validity = ws.model.predict_class(x_cf) != ws.model.predict_class(x) ? 1 : 0;
    out << fmt::format("{},{},{:.6g},{},{:.6g},{:.6g},{:.6g},{:.6g}\n",
                       entry.value("method", std::string("unknown")),
                       entry.value("instance", std::size_t{0}), scale, validity,
                       (x_cf - x).lpNorm<1>(), est.gamma_tilde, est.theta_tilde, est.upper_bound);
  }
  return path;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 2;
  return 3;
}

}  // namespace croco
