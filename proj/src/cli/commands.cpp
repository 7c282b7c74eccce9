#include "probdr/cli/commands.hpp"

#include "probdr/cli/csv.hpp"
#include "probdr/eval.hpp"
#include "probdr/graph_gp.hpp"
#include "probdr/neighbor_embed.hpp"
#include "probdr/spectral_map.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace probdr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string required_path(const json& config, const std::string& key) {
  if (!config.at(key).is_string()) throw ConfigError("config key '" + key + "' (an input path) is required");
  return config.at(key).get<std::string>();
}

fs::path prepare_out(const json& config) {
  const fs::path out = config.at("out").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path.string() + "' for writing");
  out << value.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

LaplacianKind parse_laplacian(const std::string& name) {
  if (name == "normalized") return LaplacianKind::normalized;
  if (name == "ordinary") return LaplacianKind::ordinary;
  throw ConfigError("unknown laplacian '" + name + "' (expected normalized or ordinary)");
}

InitMethod parse_init(const std::string& name) {
  if (name == "random") return InitMethod::random_gaussian;
  if (name == "spectral") return InitMethod::spectral;
  throw ConfigError("unknown init '" + name + "' (expected random or spectral)");
}

KernelSpec parse_kernel(const json& c) {
  const std::string type = c.at("kernel").get<std::string>();
  if (type == "rbf") return KernelSpec::rbf(c.at("kernel_lengthscale").get<double>());
  if (type == "linear") return KernelSpec::linear();
  if (type == "polynomial") return KernelSpec::polynomial(c.at("kernel_degree").get<int>(), c.at("kernel_offset").get<double>());
  throw ConfigError("unknown kernel '" + type + "' (expected rbf, linear or polynomial)");
}

GraphSpec parse_graph(const json& c) {
  const std::string mode = c.at("graph").get<std::string>();
  if (mode == "knn") return GraphSpec::knn(c.at("k").get<int>());
  if (mode == "epsilon") return GraphSpec::epsilon_ball(c.at("epsilon").get<double>());
  throw ConfigError("unknown graph mode '" + mode + "' (expected knn or epsilon)");
}

EmbedConfig embed_config(const json& c) {
  EmbedConfig e;
  e.q = c.at("q").get<int>();
  e.a = c.at("a").get<double>();
  e.b = c.at("b").get<double>();
  e.learning_rate = c.at("learning_rate").get<double>();
  e.momentum = c.at("momentum").get<double>();
  e.max_iters = c.at("max_iters").get<int>();
  e.seed = c.at("seed").get<std::uint64_t>();
  e.init = parse_init(c.at("init").get<std::string>());
  e.init_scale = c.at("init_scale").get<double>();
  return e;
}

json warnings_json(const PerplexityCalibration& calibration) {
  json out = json::array();
  for (const auto& w : calibration.warnings) out.push_back({{"point", w.point}, {"message", w.message}});
  return out;
}

// The resolved config minus the output directory, so files written to
// different directories from the same inputs stay byte-identical.
json provenance(const json& c) {
  json out = c;
  out.erase("out");
  return out;
}

void run_embed(const json& c) {
  const std::string input = required_path(c, "input");
  const CsvTable table = read_csv(input);
  const DataMatrix y(table.values);
  const fs::path out = prepare_out(c);
  const std::string algorithm = c.at("algorithm").get<std::string>();
  const int q = c.at("q").get<int>();

  json meta = {{"format_version", kFormatVersion}, {"command", "embed"}, {"algorithm", algorithm},
               {"seed", c.at("seed")},             {"n", y.n()},         {"d", y.d()},
               {"q", q},                           {"config", provenance(c)}};
  Matrix x;
  if (algorithm == "sne" || algorithm == "tsne" || algorithm == "umap") {
    AffinityResult v;
    if (algorithm == "umap") {
      v = umap_affinities(y, c.at("n_neighbors").get<int>());
    } else if (algorithm == "sne") {
      v = sne_affinities(y, c.at("perplexity").get<double>());
    } else {
      v = tsne_affinities(y, c.at("perplexity").get<double>());
    }
    EmbedConfig e = embed_config(c);
    e.trace_path = (out / "loss_trace.jsonl").string();
    const EmbedResult result = optimize_embedding(v.affinity, e);
    x = result.embedding.values();
    meta["loss_trace"] = "loss_trace.jsonl";
    meta["initial_loss"] = result.trace.front().loss;
    meta["final_loss"] = result.trace.back().loss;
    meta["calibration_warnings"] = warnings_json(v.calibration);
  } else {
    AlgoSpec spec;
    spec.name = parse_spectral_algo(algorithm);
    spec.center = c.at("center").get<bool>();
    spec.k = c.at("k").get<int>();
    spec.graph = parse_graph(c);
    spec.laplacian = parse_laplacian(c.at("laplacian").get<std::string>());
    spec.kernel = parse_kernel(c);
    spec.lle_ridge = c.at("lle_ridge").get<double>();
    spec.gamma = c.at("gamma").get<double>();
    spec.lengthscale = c.at("lengthscale").get<double>();
    spec.steps = c.at("steps").get<int>();
    spec.precision_ridge = c.at("precision_ridge").get<double>();
    const MomentMatrix moment = compute_moment(y, spec);
    const MapEmbedding fit = two_step_map(y, spec, q);
    x = fit.embedding.values();
    const bool precision = moment.kind == MomentKind::precision;
    meta["moment"] = precision ? "precision" : "covariance";
    meta[precision ? "beta_hat" : "sigma2_hat"] = fit.noise;
    meta["used_components"] = fit.used_components;
    meta["clamped"] = fit.clamped;
  }
  write_csv((out / "embedding.csv").string(), x, numbered_header("x", x.cols()));
  write_json(out / "metadata.json", meta);
}

void run_predict(const json& c) {
  const CsvTable train = read_csv(required_path(c, "train"));
  const CsvTable test = read_csv(required_path(c, "test"));
  std::optional<CsvTable> truth;
  if (c.at("truth").is_string()) truth = read_csv(c.at("truth").get<std::string>());
  const fs::path out = prepare_out(c);

  PredictConfig p;
  p.n_neighbors = c.at("n_neighbors").get<int>();
  p.embed = embed_config(c);
  const std::string mode = c.at("graph_mode").get<std::string>();
  if (mode == "latent_knn") {
    p.graph = PredictGraphMode::latent_knn;
  } else if (mode == "data") {
    p.graph = PredictGraphMode::data;
  } else {
    throw ConfigError("unknown graph_mode '" + mode + "' (expected latent_knn or data)");
  }
  p.init.kappa = c.at("kappa").get<double>();
  p.init.sigma_s = c.at("sigma_s").get<double>();
  p.init.sigma_n = c.at("sigma_n").get<double>();
  p.fit.max_iters = c.at("fit_iters").get<int>();
  p.fit.learning_rate = c.at("fit_learning_rate").get<double>();
  if (c.at("prediction_sigma_n").is_number()) p.sigma_n_override = c.at("prediction_sigma_n").get<double>();
  if (c.at("prediction_sigma_n").is_string()) throw ConfigError("prediction_sigma_n must be a number");
  p.graph_samples = c.at("graph_samples").get<int>();
  p.with_variances = c.at("variances").get<bool>();

  const PredictOutcome result = predict_pipeline(DataMatrix(train.values), DataMatrix(test.values), p);
  const auto header = train.header.empty() ? numbered_header("f", train.values.cols()) : train.header;
  write_csv((out / "predictions.csv").string(), result.prediction.mean, header);
  if (p.with_variances) {
    write_csv((out / "predictive_variance.csv").string(), result.prediction.variances, {"variance"});
  }

  json report = {{"format_version", kFormatVersion},
                 {"command", "predict"},
                 {"n_train", train.values.rows()},
                 {"n_test", test.values.rows()},
                 {"hyperparameters",
                  {{"kappa", result.fit.hyper.kappa},
                   {"sigma_s", result.fit.hyper.sigma_s},
                   {"sigma_n", result.fit.hyper.sigma_n}}},
                 {"prediction_sigma_n", p.sigma_n_override >= 0.0 ? p.sigma_n_override : result.fit.hyper.sigma_n},
                 {"fit_converged", result.fit.converged},
                 {"fit_log_likelihood", result.fit.trace.back()},
                 {"rmse", nullptr},
                 {"baseline_rmse", nullptr},
                 {"config", provenance(c)}};
  if (truth) {
    const Matrix baseline = train.values.colwise().mean().replicate(test.values.rows(), 1);
    report["rmse"] = rmse(result.prediction.mean, truth->values);
    report["baseline_rmse"] = rmse(baseline, truth->values);
  }
  write_json(out / "report.json", report);
}

void run_sample(const json& c) {
  const fs::path out = prepare_out(c);
  LatentSpec latent{c.at("n").get<int>(), c.at("q").get<int>(), c.at("low").get<double>(), c.at("high").get<double>()};
  PriorChain chain;
  chain.family = parse_affinity_family(c.at("family").get<std::string>());
  chain.a = c.at("a").get<double>();
  chain.b = c.at("b").get<double>();
  chain.laplacian = parse_laplacian(c.at("laplacian").get<std::string>());
  const std::string nu = c.at("nu").get<std::string>();
  if (nu == "inf") {
    chain.nu = MaternNu::inf;
  } else if (nu == "1") {
    chain.nu = MaternNu::one;
  } else {
    throw ConfigError("unknown nu '" + nu + "' (expected inf or 1)");
  }
  chain.hyper.t = c.at("t").get<double>();
  chain.hyper.beta = c.at("beta").get<double>();
  chain.columns = c.at("columns").get<int>();

  SeededRng rng(c.at("seed").get<std::uint64_t>());
  const Matrix x = sample_uniform_latent(latent, rng);
  const PriorSample s = prior_sample(x, chain, rng);

  std::vector<std::array<double, 2>> edges;
  for (Index i = 0; i < s.graph.a_sym.rows(); ++i)
    for (Index j = i + 1; j < s.graph.a_sym.cols(); ++j)
      if (s.graph.a_sym(i, j) != 0.0) edges.push_back({static_cast<double>(i), static_cast<double>(j)});
  Matrix edge_matrix(static_cast<Index>(edges.size()), 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    edge_matrix(static_cast<Index>(k), 0) = edges[k][0];
    edge_matrix(static_cast<Index>(k), 1) = edges[k][1];
  }
  write_csv((out / "latent.csv").string(), x, numbered_header("x", x.cols()));
  write_csv((out / "edges.csv").string(), edge_matrix, {"i", "j"});
  write_csv((out / "samples.csv").string(), s.y, numbered_header("y", s.y.cols()));
  write_json(out / "metadata.json", {{"format_version", kFormatVersion},
                                     {"command", "sample"},
                                     {"rng", SeededRng::algorithm()},
                                     {"edges", edges.size()},
                                     {"config", provenance(c)}});
}

void run_compare(const json& c) {
  const CsvTable first = read_csv(required_path(c, "first"));
  const CsvTable second = read_csv(required_path(c, "second"));
  const fs::path out = prepare_out(c);
  const bool scale = c.at("scale").get<bool>();
  const ProcrustesResult pr = procrustes(first.values, second.values, scale);
  json report = {{"format_version", kFormatVersion},
                 {"command", "compare"},
                 {"procrustes_residual", pr.residual},
                 {"with_scale", scale},
                 {"config", provenance(c)}};
  if (c.at("labels").is_string()) {
    const auto labels = read_labels(c.at("labels").get<std::string>());
    report["silhouette_first"] = silhouette(first.values, labels);
    report["silhouette_second"] = silhouette(second.values, labels);
  }
  write_json(out / "report.json", report);
}

std::string one_line(std::string text) {
  for (char& ch : text)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::string escaped;
  for (char ch : text) {
    if (ch == '"' || ch == '\\') escaped += '\\';
    escaped += ch;
  }
  return escaped;
}

int report_error(const std::string& kind, int code, const std::string& message) {
  std::cerr << "error kind=" << kind << " code=" << code << " message=\"" << one_line(message) << "\"\n";
  return code;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

void execute(Command command, const json& config) {
  switch (command) {
    case Command::embed: return run_embed(config);
    case Command::predict: return run_predict(config);
    case Command::sample: return run_sample(config);
    case Command::compare: return run_compare(config);
  }
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Probabilistic dimensionality reduction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  ConfigSources sources;
  std::string config_path, out_dir, preset;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--preset", preset, "Named parameter preset (sample: fig5)");
  app.add_option("--set", sources.overrides, "Override one config key: key=value");

  std::string input, algorithm, train, test, truth, first, second, labels;
  auto* embed = app.add_subcommand("embed", "Embed a CSV dataset");
  embed->add_option("--input", input, "Input CSV");
  embed->add_option("--algorithm", algorithm, "pca, cmds, isomap, kpca, le, le_covariance, lle, diffusion, sne, tsne, umap");
  auto* predict = app.add_subcommand("predict", "Predict test rows from a graph GP fitted on train rows");
  predict->add_option("--train", train, "Training CSV");
  predict->add_option("--test", test, "Test CSV");
  predict->add_option("--truth", truth, "Held-out truth CSV for RMSE");
  auto* sample = app.add_subcommand("sample", "Draw prior samples of the latent -> graph -> data chain");
  auto* compare = app.add_subcommand("compare", "Compare two embeddings");
  compare->add_option("--first", first, "First embedding CSV");
  compare->add_option("--second", second, "Second embedding CSV");
  compare->add_option("--labels", labels, "Cluster labels CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", 2, e.what());
  }

  Command command = Command::embed;
  if (predict->parsed()) command = Command::predict;
  if (sample->parsed()) command = Command::sample;
  if (compare->parsed()) command = Command::compare;

  if (app.count("--config")) sources.config_path = config_path;
  if (app.count("--seed")) sources.seed = seed;
  if (app.count("--out")) sources.out_dir = out_dir;
  if (app.count("--preset")) sources.preset = preset;
  auto add = [&](const std::string& key, const std::string& value) {
    if (!value.empty()) sources.overrides.push_back(key + "=" + json(value).dump());
  };
  add("input", input);
  add("algorithm", algorithm);
  add("train", train);
  add("test", test);
  add("truth", truth);
  add("first", first);
  add("second", second);
  add("labels", labels);

  try {
    execute(command, resolve_config(command, sources));
  } catch (const Error& e) {
    const char* kind = e.kind() == ErrorKind::config ? "config" : e.kind() == ErrorKind::data ? "data" : "numerical";
    return report_error(kind, exit_code(e.kind()), e.what());
  } catch (const json::exception& e) {
    return report_error("config", 2, e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, e.what());
  }
  return 0;
}

}  // namespace probdr::cli
