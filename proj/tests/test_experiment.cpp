#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "toim/experiment.hpp"

using namespace toim;
namespace fs = std::filesystem;

namespace {

// Desk-size spec: quick to train, still exercising every moving part.
ExperimentSpec tiny_spec(const fs::path& out, std::uint64_t seed = 3) {
  ExperimentSpec spec;
  spec.synth.num_identities = 10;
  spec.synth.num_cameras = 3;
  spec.synth.samples_per_id_per_cam = 3;
  spec.synth.latent_dim = 5;
  spec.synth.observation_dim = 10;
  spec.synth.seed = seed;
  spec.train.feature_dim = 8;
  spec.train.hidden_dim = 10;
  spec.train.anchors_per_batch = 4;
  spec.train.epochs = 3;
  spec.train.pk_identities = 2;
  spec.train.pk_samples = 2;
  spec.train.seed = seed;
  spec.eval.max_rank = 10;
  spec.eval.repetitions = 30;
  spec.out_dir = out;
  return spec;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "toim_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_lines(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  return lines;
}

}  // namespace

TEST_CASE("spec json round-trips including optional fields") {
  ExperimentSpec spec = tiny_spec("somewhere");
  spec.loss = LossKind::Combined;
  spec.train.normalize_embeddings = true;
  spec.sweep_axis = SweepAxis::Gamma;
  spec.sweep_values = {0.0, 0.4, 1.0};

  const ExperimentSpec parsed = spec_from_json(spec_to_json(spec));
  CHECK(parsed.loss == LossKind::Combined);
  CHECK(parsed.train.normalize_embeddings == true);
  CHECK(parsed.train.feature_dim == spec.train.feature_dim);
  CHECK(parsed.synth.num_identities == spec.synth.num_identities);
  CHECK(parsed.sweep_axis == SweepAxis::Gamma);
  CHECK(parsed.sweep_values == spec.sweep_values);

  CHECK_THROWS_AS(spec_from_json("{\"trian\": {}}"), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json("{\"train\": {\"gama\": 1}}"), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json("{\"loss\": \"contrastive\"}"), std::invalid_argument);
}

TEST_CASE("run_train writes one loss row per epoch and a loadable checkpoint") {
  const fs::path out = scratch_dir("train_epochs");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 13;
  const TrainOutputs outputs = run_train(spec);

  CHECK(outputs.epoch_losses.size() == 13);
  const std::string csv = slurp(outputs.loss_curve);
  CHECK(count_lines(csv) == 14);  // header + 13 epochs
  CHECK(csv.rfind("epoch,mean_loss\n", 0) == 0);

  const LoadedCheckpoint loaded = load_checkpoint(outputs.checkpoint);
  const ExperimentSpec embedded = spec_from_json(loaded.spec_json);
  CHECK(embedded.train.epochs == 13);
}

TEST_CASE("zero epochs produce an empty curve and an initial checkpoint") {
  const fs::path out = scratch_dir("train_zero");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 0;
  spec.synth.noise_scale = 0.0;  // well-separated, noiseless observations
  spec.synth.camera_bias_scale = 0.0;
  const TrainOutputs outputs = run_train(spec);
  CHECK(outputs.epoch_losses.empty());
  CHECK(count_lines(slurp(outputs.loss_curve)) == 1);
  CHECK_NOTHROW(load_checkpoint(outputs.checkpoint));

  // An untrained (random-init) embedding still yields a well-formed report.
  const EvalOutputs scored = run_eval(outputs.checkpoint, std::nullopt, out);
  CHECK(scored.report.map >= 0.0);
  CHECK(scored.report.map <= 1.0);
  for (double rate : scored.report.cmc_cuhk03) {
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
  }
  for (double rate : scored.report.cmc_market) {
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
  }
}

TEST_CASE("train and eval compose for every loss kind") {
  for (LossKind kind : {LossKind::Toim, LossKind::Triplet, LossKind::Oim,
                        LossKind::SoftmaxCe, LossKind::Combined}) {
    CAPTURE(loss_kind_name(kind));
    const fs::path out = scratch_dir("compose_" + loss_kind_name(kind));
    ExperimentSpec spec = tiny_spec(out);
    spec.loss = kind;
    spec.train.epochs = 2;
    const TrainOutputs trained = run_train(spec);
    const EvalOutputs scored = run_eval(trained.checkpoint, std::nullopt, out);
    CHECK(scored.report.map >= 0.0);
    CHECK(scored.report.map <= 1.0);
    for (double rate : scored.report.cmc_market) {
      CHECK(rate >= 0.0);
      CHECK(rate <= 1.0);
    }
    CHECK(fs::exists(scored.report_json));
    CHECK(fs::exists(scored.cmc_csv));
    CHECK(fs::exists(scored.pca_csv));
    CHECK(fs::exists(scored.embeddings_csv));
  }
}

TEST_CASE("rank-1 is reproducible from the exported embeddings") {
  const fs::path out = scratch_dir("self_consistency");
  ExperimentSpec spec = tiny_spec(out);
  const TrainOutputs trained = run_train(spec);
  const EvalOutputs scored = run_eval(trained.checkpoint, std::nullopt, out);

  const DatasetCsv exported = read_dataset_csv(scored.embeddings_csv);
  CHECK(exported.train.size() == 0);
  const auto cmc = cmc_market(exported.query, exported.gallery,
                              static_cast<Index>(scored.report.cmc_market.size()));
  CHECK(cmc.front() == scored.report.cmc_market.front());
  CHECK(mean_ap(exported.query, exported.gallery) == scored.report.map);
}

TEST_CASE("reruns with the same spec produce byte-identical outputs") {
  const fs::path out_a = scratch_dir("determinism_a");
  const fs::path out_b = scratch_dir("determinism_b");
  ExperimentSpec spec_a = tiny_spec(out_a, 11);
  ExperimentSpec spec_b = tiny_spec(out_b, 11);

  const TrainOutputs train_a = run_train(spec_a);
  const TrainOutputs train_b = run_train(spec_b);
  CHECK(slurp(train_a.loss_curve) == slurp(train_b.loss_curve));

  const EvalOutputs eval_a = run_eval(train_a.checkpoint, std::nullopt, out_a / "eval");
  const EvalOutputs eval_b = run_eval(train_b.checkpoint, std::nullopt, out_b / "eval");
  CHECK(slurp(eval_a.report_json) == slurp(eval_b.report_json));
  CHECK(slurp(eval_a.cmc_csv) == slurp(eval_b.cmc_csv));
  CHECK(slurp(eval_a.pca_csv) == slurp(eval_b.pca_csv));
  CHECK(slurp(eval_a.embeddings_csv) == slurp(eval_b.embeddings_csv));
}

TEST_CASE("gen-data output feeds training identically to in-process generation") {
  const fs::path out = scratch_dir("csv_equivalence");
  ExperimentSpec spec = tiny_spec(out / "direct", 13);
  const TrainOutputs direct = run_train(spec);

  const SynthDataset data = gen_dataset(spec.synth);
  const fs::path csv = out / "dataset.csv";
  write_dataset_csv(csv, data.train, data.query, data.gallery);
  ExperimentSpec from_csv = tiny_spec(out / "via_csv", 13);
  from_csv.data_path = csv.string();
  const TrainOutputs indirect = run_train(from_csv);

  CHECK(slurp(direct.loss_curve) == slurp(indirect.loss_curve));
}

TEST_CASE("market exclusion failure surfaces the query index") {
  // Query and gallery identical: the only positive shares the camera.
  LabeledSet eval_set;
  eval_set.features = Matrix::Random(4, 3);
  eval_set.identities.resize(3);
  eval_set.cameras.resize(3);
  eval_set.identities << 0, 1, 2;
  eval_set.cameras << 0, 0, 0;
  CHECK_THROWS_WITH_AS(cmc_market(eval_set, eval_set, 3), doctest::Contains("query 0"),
                       std::invalid_argument);
}

TEST_CASE("gamma sweep produces one row per value plus leg outputs") {
  const fs::path out = scratch_dir("sweep_gamma");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 1;
  spec.eval.repetitions = 10;
  spec.sweep_axis = SweepAxis::Gamma;
  spec.sweep_values = {0.0, 0.4, 1.0};
  const auto rows = run_sweep(spec);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].value == "0.4");

  const std::string csv = slurp(out / "sweep.csv");
  CHECK(count_lines(csv) == 4);
  CHECK(fs::exists(out / "gamma_0.4" / "loss_curve.csv"));
  CHECK(fs::exists(out / "gamma_0.4" / "eval_report.json"));
}

TEST_CASE("dimension sweep defaults to the five standard sizes") {
  const fs::path out = scratch_dir("sweep_dim");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 1;
  spec.eval.repetitions = 5;
  spec.synth.num_identities = 6;
  spec.synth.samples_per_id_per_cam = 2;
  spec.train.anchors_per_batch = 3;
  spec.sweep_axis = SweepAxis::Dimension;
  const auto rows = run_sweep(spec);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].value == "128");
  CHECK(rows[4].value == "2048");
  CHECK(count_lines(slurp(out / "sweep.csv")) == 6);
}

TEST_CASE("synthetic and eval defaults match the documented shapes") {
  const SynthConfig synth;
  CHECK(synth.num_identities == 50);
  CHECK(synth.num_cameras == 5);
  const EvalSettings eval;
  CHECK(eval.repetitions == 100);
  CHECK(eval.max_rank == 20);
  const ExperimentSpec spec;
  CHECK(spec.loss == LossKind::Toim);
}

TEST_CASE("gamma sweep without values covers the unit interval in tenths") {
  const fs::path out = scratch_dir("sweep_gamma_default");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 0;  // row count is the point; no training needed
  spec.eval.repetitions = 2;
  spec.sweep_axis = SweepAxis::Gamma;
  const auto rows = run_sweep(spec);
  REQUIRE(rows.size() == 11);
  CHECK(rows.front().value == "0");
  CHECK(rows.back().value == "1");
}

TEST_CASE("a failing sweep leg leaves the partial table behind") {
  const fs::path out = scratch_dir("sweep_partial");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 0;
  spec.eval.repetitions = 2;
  spec.sweep_axis = SweepAxis::Gamma;
  spec.sweep_values = {0.4, 1.5};  // second leg has an invalid update rate
  CHECK_THROWS_AS(run_sweep(spec), std::invalid_argument);
  const std::string csv = slurp(out / "sweep.csv");
  CHECK(count_lines(csv) == 2);  // header + the leg that finished
  CHECK(csv.find("gamma,0.4,") != std::string::npos);
}

TEST_CASE("strategy sweep emits a loss curve per strategy") {
  const fs::path out = scratch_dir("sweep_strategy");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 2;
  spec.eval.repetitions = 5;
  spec.sweep_axis = SweepAxis::NegativeStrategy;
  const auto rows = run_sweep(spec);
  REQUIRE(rows.size() == 2);
  CHECK(fs::exists(out / "neg-strategy_ut" / "loss_curve.csv"));
  CHECK(fs::exists(out / "neg-strategy_pt" / "loss_curve.csv"));
}

TEST_CASE("sweep reruns are byte-identical") {
  const fs::path out_a = scratch_dir("sweep_rerun_a");
  const fs::path out_b = scratch_dir("sweep_rerun_b");
  for (const fs::path* out : {&out_a, &out_b}) {
    ExperimentSpec spec = tiny_spec(*out, 21);
    spec.train.epochs = 1;
    spec.eval.repetitions = 5;
    spec.sweep_axis = SweepAxis::Gamma;
    spec.sweep_values = {0.2, 0.8};
    run_sweep(spec);
  }
  CHECK(slurp(out_a / "sweep.csv") == slurp(out_b / "sweep.csv"));
}

TEST_CASE("convergence comparison normalizes both curves to start at 1") {
  const fs::path out = scratch_dir("convergence");
  ExperimentSpec spec = tiny_spec(out);
  spec.train.epochs = 1;
  const ConvergenceResult result = run_convergence_compare(spec);
  REQUIRE(result.toim_curve.size() == 1);
  REQUIRE(result.triplet_curve.size() == 1);
  CHECK(result.toim_curve.front() == 1.0);
  CHECK(result.triplet_curve.front() == 1.0);
  CHECK(fs::exists(out / "convergence.csv"));
  CHECK(fs::exists(out / "convergence_summary.json"));

  ExperimentSpec mismatched = tiny_spec(out);
  mismatched.train.anchors_per_batch = 5;  // P*K = 4
  CHECK_THROWS_AS(run_convergence_compare(mismatched), std::invalid_argument);
}

TEST_CASE("cli binary: gen-data, train, eval, compare-convergence") {
  const fs::path out = scratch_dir("cli");
  const std::string cli = TOIM_CLI_PATH;
  // Identical knobs to tiny_spec, passed through the config file.
  const fs::path config = out / "config.json";
  {
    std::ofstream cfg(config);
    cfg << R"({
      "synth": {"num_identities": 10, "num_cameras": 3, "samples_per_id_per_cam": 3,
                 "latent_dim": 5, "observation_dim": 10},
      "train": {"feature_dim": 8, "hidden_dim": 10, "anchors_per_batch": 4,
                 "epochs": 2, "pk_identities": 2, "pk_samples": 2},
      "eval": {"max_rank": 10, "repetitions": 10}
    })";
  }

  auto run = [&](const std::string& args) {
    const std::string command = cli + " " + args + " >/dev/null 2>&1";
    return std::system(command.c_str());
  };

  CHECK(run("gen-data --config " + config.string() + " --seed 7 --out " +
            (out / "data").string()) == 0);
  CHECK(fs::exists(out / "data" / "dataset.csv"));

  CHECK(run("train --config " + config.string() + " --seed 7 --loss toim --out " +
            (out / "run").string() + " --data " + (out / "data" / "dataset.csv").string()) ==
        0);
  CHECK(fs::exists(out / "run" / "loss_curve.csv"));
  CHECK(fs::exists(out / "run" / "checkpoint.bin"));

  CHECK(run("eval --checkpoint " + (out / "run" / "checkpoint.bin").string() + " --out " +
            (out / "run").string()) == 0);
  CHECK(fs::exists(out / "run" / "eval_report.json"));
  CHECK(fs::exists(out / "run" / "cmc_curve.csv"));
  CHECK(fs::exists(out / "run" / "pca_points.csv"));

  CHECK(run("compare-convergence --config " + config.string() + " --seed 7 --epochs 2 --out " +
            (out / "conv").string()) == 0);
  CHECK(fs::exists(out / "conv" / "convergence.csv"));

  // Bad flags and invalid configs exit non-zero.
  CHECK(run("train --loss contrastive --out " + (out / "bad").string()) != 0);
  CHECK(run("eval --checkpoint " + (out / "missing.bin").string() + " --out " +
            (out / "bad2").string()) != 0);
}
