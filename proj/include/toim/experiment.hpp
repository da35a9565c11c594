#ifndef TOIM_EXPERIMENT_HPP_
#define TOIM_EXPERIMENT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toim/eval.hpp"
#include "toim/io.hpp"
#include "toim/synthdata.hpp"
#include "toim/train.hpp"

namespace toim {

enum class SweepAxis { Gamma, Dimension, NegativeStrategy };

struct EvalSettings {
  Index max_rank = 20;
  Index repetitions = 100;  // single-gallery-shot resampling count
};

/// Everything one experiment needs: training and data configuration, the
/// loss under study, evaluation settings and an optional sweep axis.
struct ExperimentSpec {
  TrainConfig train;
  SynthConfig synth;
  LossKind loss = LossKind::Toim;
  EvalSettings eval;
  std::filesystem::path out_dir = "out";
  std::optional<std::string> data_path;  // dataset CSV; unset: generate
  std::optional<SweepAxis> sweep_axis;
  std::vector<double> sweep_values;               // gamma or dimension axes
  std::vector<NegativeStrategy> sweep_strategies; // strategy axis
};

std::string loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);
std::string strategy_name(NegativeStrategy strategy);
NegativeStrategy parse_strategy(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

std::string spec_to_json(const ExperimentSpec& spec);
/// Applies the JSON fields onto `base`; absent fields keep their values,
/// unknown keys are rejected.
ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec base = {});

/// Loads the dataset named by the spec, or generates it.
DatasetCsv load_or_generate(const ExperimentSpec& spec);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::vector<double> epoch_losses;
};

/// Trains per the spec and writes loss_curve.csv plus a self-contained
/// checkpoint into the output directory.
TrainOutputs run_train(const ExperimentSpec& spec);

struct EvalOutputs {
  EvalReport report;
  std::filesystem::path report_json;
  std::filesystem::path cmc_csv;
  std::filesystem::path pca_csv;
  std::filesystem::path embeddings_csv;
};

/// Embeds query and gallery with a trained checkpoint and writes the report,
/// the CMC curves, the 2-D PCA scatter and the raw embeddings (dataset CSV
/// schema, empty train split) so they can be re-scored externally.
EvalOutputs run_eval(const std::filesystem::path& checkpoint_path,
                     const std::optional<std::string>& data_path,
                     const std::filesystem::path& out_dir);

struct SweepRow {
  std::string value;
  double map = 0.0;
  double rank1_cuhk03 = 0.0;
  double rank1_market = 0.0;
};

/// One train+eval per axis value, each leg in its own subdirectory; rows are
/// appended to sweep.csv as legs finish, so a failing leg leaves a partial
/// table behind before the error propagates.
std::vector<SweepRow> run_sweep(const ExperimentSpec& spec);

struct ConvergenceResult {
  std::vector<double> toim_curve;     // per-epoch loss / first-epoch loss
  std::vector<double> triplet_curve;
  Index toim_half_epoch = -1;         // first epoch at <= 0.5, 1-based; -1: never
  Index triplet_half_epoch = -1;
};

/// Trains TOIM and batch-hard triplet with matched batch budgets (P*K == N)
/// and writes normalized per-epoch curves plus a small summary.
ConvergenceResult run_convergence_compare(const ExperimentSpec& spec);

}  // namespace toim

#endif  // TOIM_EXPERIMENT_HPP_
