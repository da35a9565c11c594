#include "toim/experiment.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "toim/rng.hpp"

namespace toim {

namespace {

constexpr std::uint64_t kEvalStream = 21;

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Toim: return "toim";
    case LossKind::Triplet: return "triplet";
    case LossKind::Oim: return "oim";
    case LossKind::SoftmaxCe: return "softmax";
    case LossKind::Combined: return "combined";
  }
  throw std::logic_error("loss_kind_name: bad enum");
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "toim") return LossKind::Toim;
  if (name == "triplet") return LossKind::Triplet;
  if (name == "oim") return LossKind::Oim;
  if (name == "softmax") return LossKind::SoftmaxCe;
  if (name == "combined") return LossKind::Combined;
  throw std::invalid_argument("unknown loss '" + name +
                              "' (expected toim|triplet|oim|softmax|combined)");
}

std::string strategy_name(NegativeStrategy strategy) {
  return strategy == NegativeStrategy::UpdateTable ? "ut" : "pt";
}

NegativeStrategy parse_strategy(const std::string& name) {
  if (name == "ut") return NegativeStrategy::UpdateTable;
  if (name == "pt") return NegativeStrategy::PooledTable;
  throw std::invalid_argument("unknown negative strategy '" + name + "' (expected ut|pt)");
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::Dimension: return "dim";
    case SweepAxis::NegativeStrategy: return "neg-strategy";
  }
  throw std::logic_error("sweep_axis_name: bad enum");
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "gamma") return SweepAxis::Gamma;
  if (name == "dim") return SweepAxis::Dimension;
  if (name == "neg-strategy" || name == "strategy") return SweepAxis::NegativeStrategy;
  throw std::invalid_argument("unknown sweep axis '" + name +
                              "' (expected gamma|dim|neg-strategy)");
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["loss"] = loss_kind_name(spec.loss);
  j["out_dir"] = spec.out_dir.string();
  if (spec.data_path) j["data_path"] = *spec.data_path;

  json& t = j["train"];
  t["gamma"] = spec.train.gamma;
  t["anchors_per_batch"] = spec.train.anchors_per_batch;
  t["ut_capacity"] = spec.train.ut_capacity;
  t["feature_dim"] = spec.train.feature_dim;
  t["hidden_dim"] = spec.train.hidden_dim;
  t["epochs"] = spec.train.epochs;
  t["lr"] = spec.train.lr;
  t["negative_strategy"] = strategy_name(spec.train.negative_strategy);
  if (spec.train.normalize_embeddings)
    t["normalize_embeddings"] = *spec.train.normalize_embeddings;
  t["seed"] = spec.train.seed;
  t["margin"] = spec.train.hyper.margin;
  t["tau"] = spec.train.hyper.tau;
  t["beta"] = spec.train.hyper.beta;
  t["pk_identities"] = spec.train.pk_identities;
  t["pk_samples"] = spec.train.pk_samples;
  t["adadelta_rho"] = spec.train.adadelta_rho;
  t["adadelta_eps"] = spec.train.adadelta_eps;

  json& s = j["synth"];
  s["num_identities"] = spec.synth.num_identities;
  s["num_cameras"] = spec.synth.num_cameras;
  s["samples_per_id_per_cam"] = spec.synth.samples_per_id_per_cam;
  s["latent_dim"] = spec.synth.latent_dim;
  s["observation_dim"] = spec.synth.observation_dim;
  s["camera_bias_scale"] = spec.synth.camera_bias_scale;
  s["noise_scale"] = spec.synth.noise_scale;
  s["seed"] = spec.synth.seed;

  json& e = j["eval"];
  e["max_rank"] = spec.eval.max_rank;
  e["repetitions"] = spec.eval.repetitions;

  if (spec.sweep_axis) {
    j["sweep_axis"] = sweep_axis_name(*spec.sweep_axis);
    if (*spec.sweep_axis == SweepAxis::NegativeStrategy) {
      json values = json::array();
      for (NegativeStrategy s2 : spec.sweep_strategies) values.push_back(strategy_name(s2));
      j["sweep_values"] = values;
    } else {
      j["sweep_values"] = spec.sweep_values;
    }
  }
  return j.dump(2);
}

ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec base) {
  const json j = json::parse(text);
  reject_unknown_keys(j, {"loss", "out_dir", "data_path", "train", "synth", "eval",
                          "sweep_axis", "sweep_values"},
                      "top level");

  if (j.contains("loss")) base.loss = parse_loss_kind(j.at("loss").get<std::string>());
  if (j.contains("out_dir")) base.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("data_path")) base.data_path = j.at("data_path").get<std::string>();

  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown_keys(t, {"gamma", "anchors_per_batch", "ut_capacity", "feature_dim",
                            "hidden_dim", "epochs", "lr", "negative_strategy",
                            "normalize_embeddings", "seed", "margin", "tau", "beta",
                            "pk_identities", "pk_samples", "adadelta_rho", "adadelta_eps"},
                        "train");
    maybe(t, "gamma", base.train.gamma);
    maybe(t, "anchors_per_batch", base.train.anchors_per_batch);
    maybe(t, "ut_capacity", base.train.ut_capacity);
    maybe(t, "feature_dim", base.train.feature_dim);
    maybe(t, "hidden_dim", base.train.hidden_dim);
    maybe(t, "epochs", base.train.epochs);
    maybe(t, "lr", base.train.lr);
    if (t.contains("negative_strategy"))
      base.train.negative_strategy = parse_strategy(t.at("negative_strategy").get<std::string>());
    if (t.contains("normalize_embeddings") && !t.at("normalize_embeddings").is_null())
      base.train.normalize_embeddings = t.at("normalize_embeddings").get<bool>();
    maybe(t, "seed", base.train.seed);
    maybe(t, "margin", base.train.hyper.margin);
    maybe(t, "tau", base.train.hyper.tau);
    maybe(t, "beta", base.train.hyper.beta);
    maybe(t, "pk_identities", base.train.pk_identities);
    maybe(t, "pk_samples", base.train.pk_samples);
    maybe(t, "adadelta_rho", base.train.adadelta_rho);
    maybe(t, "adadelta_eps", base.train.adadelta_eps);
  }

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    reject_unknown_keys(s, {"num_identities", "num_cameras", "samples_per_id_per_cam",
                            "latent_dim", "observation_dim", "camera_bias_scale",
                            "noise_scale", "seed"},
                        "synth");
    maybe(s, "num_identities", base.synth.num_identities);
    maybe(s, "num_cameras", base.synth.num_cameras);
    maybe(s, "samples_per_id_per_cam", base.synth.samples_per_id_per_cam);
    maybe(s, "latent_dim", base.synth.latent_dim);
    maybe(s, "observation_dim", base.synth.observation_dim);
    maybe(s, "camera_bias_scale", base.synth.camera_bias_scale);
    maybe(s, "noise_scale", base.synth.noise_scale);
    maybe(s, "seed", base.synth.seed);
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown_keys(e, {"max_rank", "repetitions"}, "eval");
    maybe(e, "max_rank", base.eval.max_rank);
    maybe(e, "repetitions", base.eval.repetitions);
  }

  if (j.contains("sweep_axis")) {
    base.sweep_axis = parse_sweep_axis(j.at("sweep_axis").get<std::string>());
    if (j.contains("sweep_values")) {
      if (*base.sweep_axis == SweepAxis::NegativeStrategy) {
        base.sweep_strategies.clear();
        for (const auto& v : j.at("sweep_values"))
          base.sweep_strategies.push_back(parse_strategy(v.get<std::string>()));
      } else {
        base.sweep_values = j.at("sweep_values").get<std::vector<double>>();
      }
    }
  }
  return base;
}

DatasetCsv load_or_generate(const ExperimentSpec& spec) {
  if (spec.data_path) return read_dataset_csv(*spec.data_path);
  SynthDataset synth = gen_dataset(spec.synth);
  return {std::move(synth.train), std::move(synth.query), std::move(synth.gallery)};
}

TrainOutputs run_train(const ExperimentSpec& spec) {
  std::filesystem::create_directories(spec.out_dir);
  const DatasetCsv data = load_or_generate(spec);

  const TrainRun run = train(data.train, spec.train, spec.loss);

  TrainOutputs outputs;
  outputs.loss_curve = spec.out_dir / "loss_curve.csv";
  outputs.checkpoint = spec.out_dir / "checkpoint.bin";
  outputs.epoch_losses = run.epoch_losses;
  write_loss_curve_csv(outputs.loss_curve, run.epoch_losses);
  // The embedded spec drops the output directory: it is irrelevant to later
  // evaluation and would make otherwise-identical checkpoints differ.
  ExperimentSpec embedded = spec;
  embedded.out_dir = ExperimentSpec{}.out_dir;
  save_checkpoint(outputs.checkpoint, run.state, spec_to_json(embedded));
  return outputs;
}

EvalOutputs run_eval(const std::filesystem::path& checkpoint_path,
                     const std::optional<std::string>& data_path,
                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  ExperimentSpec spec = spec_from_json(loaded.spec_json);
  if (data_path) spec.data_path = *data_path;

  const DatasetCsv data = load_or_generate(spec);
  if (data.query.size() == 0 || data.gallery.size() == 0)
    throw std::invalid_argument("run_eval: dataset has no query/gallery split");
  if (data.query.dim() != loaded.state.model.shape().input_dim)
    throw std::invalid_argument("run_eval: dataset dimension does not match checkpoint");

  LabeledSet query{embed_set(loaded.state.model, data.query.features),
                   data.query.identities, data.query.cameras};
  LabeledSet gallery{embed_set(loaded.state.model, data.gallery.features),
                     data.gallery.identities, data.gallery.cameras};

  const Index max_rank = std::min(spec.eval.max_rank, gallery.size());
  EvalOutputs outputs;
  outputs.report = evaluate(query, gallery, max_rank, spec.eval.repetitions,
                            derive_seed(spec.train.seed, kEvalStream));

  outputs.report_json = out_dir / "eval_report.json";
  outputs.cmc_csv = out_dir / "cmc_curve.csv";
  outputs.pca_csv = out_dir / "pca_points.csv";
  outputs.embeddings_csv = out_dir / "embeddings.csv";

  write_eval_report_json(outputs.report_json, outputs.report);
  write_cmc_csv(outputs.cmc_csv, outputs.report);

  Matrix all(query.dim(), query.size() + gallery.size());
  all.leftCols(query.size()) = query.features;
  all.rightCols(gallery.size()) = gallery.features;
  IntVector ids(all.cols());
  ids << query.identities, gallery.identities;
  IntVector cams(all.cols());
  cams << query.cameras, gallery.cameras;
  std::vector<std::string> splits;
  splits.insert(splits.end(), static_cast<std::size_t>(query.size()), "query");
  splits.insert(splits.end(), static_cast<std::size_t>(gallery.size()), "gallery");
  write_pca_csv(outputs.pca_csv, pca_project(all), ids, cams, splits);

  write_dataset_csv(outputs.embeddings_csv, LabeledSet{Matrix(query.dim(), 0),
                                                       IntVector(0), IntVector(0)},
                    query, gallery);
  return outputs;
}

namespace {

std::string format_axis_value(SweepAxis axis, double value) {
  if (axis == SweepAxis::Dimension) return std::to_string(static_cast<long long>(value));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentSpec& spec) {
  if (!spec.sweep_axis) throw std::invalid_argument("run_sweep: no sweep axis set");
  const SweepAxis axis = *spec.sweep_axis;

  std::vector<std::string> leg_names;
  std::vector<ExperimentSpec> legs;
  auto make_leg = [&spec](const std::string& name) {
    ExperimentSpec leg = spec;
    leg.sweep_axis.reset();
    leg.sweep_values.clear();
    leg.sweep_strategies.clear();
    leg.out_dir = spec.out_dir / name;
    return leg;
  };

  if (axis == SweepAxis::NegativeStrategy) {
    std::vector<NegativeStrategy> strategies = spec.sweep_strategies;
    if (strategies.empty())
      strategies = {NegativeStrategy::UpdateTable, NegativeStrategy::PooledTable};
    for (NegativeStrategy s : strategies) {
      const std::string name = strategy_name(s);
      ExperimentSpec leg = make_leg("neg-strategy_" + name);
      leg.train.negative_strategy = s;
      leg_names.push_back(name);
      legs.push_back(std::move(leg));
    }
  } else {
    std::vector<double> values = spec.sweep_values;
    if (values.empty()) {
      if (axis == SweepAxis::Dimension) values = {128, 256, 512, 1024, 2048};
      else values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    }
    for (double v : values) {
      const std::string name = format_axis_value(axis, v);
      ExperimentSpec leg = make_leg(sweep_axis_name(axis) + "_" + name);
      if (axis == SweepAxis::Gamma) leg.train.gamma = v;
      else leg.train.feature_dim = static_cast<Index>(v);
      leg_names.push_back(name);
      legs.push_back(std::move(leg));
    }
  }

  std::filesystem::create_directories(spec.out_dir);
  std::ofstream csv(spec.out_dir / "sweep.csv");
  if (!csv) throw std::runtime_error("run_sweep: cannot write sweep.csv");
  csv << "axis,value,map,rank1_cuhk03,rank1_market\n";
  csv.flush();

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < legs.size(); ++i) {
    // Rows flush as legs finish; a failing leg leaves the partial table.
    const TrainOutputs trained = run_train(legs[i]);
    const EvalOutputs scored = run_eval(trained.checkpoint, std::nullopt, legs[i].out_dir);
    SweepRow row{leg_names[i], scored.report.map,
                 scored.report.cmc_cuhk03.empty() ? 0.0 : scored.report.cmc_cuhk03.front(),
                 scored.report.cmc_market.empty() ? 0.0 : scored.report.cmc_market.front()};
    csv << sweep_axis_name(axis) << ',' << row.value << ',' << format_double(row.map)
        << ',' << format_double(row.rank1_cuhk03) << ',' << format_double(row.rank1_market)
        << '\n';
    csv.flush();
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<double> normalize_curve(const std::vector<double>& losses) {
  std::vector<double> out(losses.size());
  const double first = losses.empty() || losses.front() == 0.0 ? 1.0 : losses.front();
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = losses[i] / first;
  return out;
}

Index half_epoch(const std::vector<double>& normalized) {
  for (std::size_t i = 0; i < normalized.size(); ++i)
    if (normalized[i] <= 0.5) return static_cast<Index>(i) + 1;
  return -1;
}

}  // namespace

ConvergenceResult run_convergence_compare(const ExperimentSpec& spec) {
  if (spec.train.pk_identities * spec.train.pk_samples != spec.train.anchors_per_batch)
    throw std::invalid_argument(
        "run_convergence_compare: P*K must equal N for a matched batch budget");

  std::filesystem::create_directories(spec.out_dir);
  const DatasetCsv data = load_or_generate(spec);

  const TrainRun toim_run = train(data.train, spec.train, LossKind::Toim);
  const TrainRun triplet_run = train(data.train, spec.train, LossKind::Triplet);

  ConvergenceResult result;
  result.toim_curve = normalize_curve(toim_run.epoch_losses);
  result.triplet_curve = normalize_curve(triplet_run.epoch_losses);
  result.toim_half_epoch = half_epoch(result.toim_curve);
  result.triplet_half_epoch = half_epoch(result.triplet_curve);

  std::ofstream csv(spec.out_dir / "convergence.csv");
  if (!csv) throw std::runtime_error("run_convergence_compare: cannot write csv");
  csv << "epoch,toim,triplet\n";
  for (std::size_t e = 0; e < result.toim_curve.size(); ++e) {
    csv << (e + 1) << ',' << format_double(result.toim_curve[e]) << ','
        << format_double(e < result.triplet_curve.size() ? result.triplet_curve[e] : 0.0)
        << '\n';
  }

  nlohmann::json summary;
  summary["epochs_to_half"]["toim"] = result.toim_half_epoch;
  summary["epochs_to_half"]["triplet"] = result.triplet_half_epoch;
  std::ofstream js(spec.out_dir / "convergence_summary.json");
  js << summary.dump(2) << '\n';
  return result;
}

}  // namespace toim
