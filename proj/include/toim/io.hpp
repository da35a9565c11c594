#ifndef TOIM_IO_HPP_
#define TOIM_IO_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "toim/eval.hpp"
#include "toim/synthdata.hpp"
#include "toim/train.hpp"
#include "toim/types.hpp"

namespace toim {

/// Dataset CSV schema: header "id,cam,split,f0,...,fK"; split is one of
/// train/query/gallery. Feature values are printed with 17 significant
/// digits so a read-back reproduces every double bit for bit.
void write_dataset_csv(const std::filesystem::path& path, const LabeledSet& train,
                       const LabeledSet& query, const LabeledSet& gallery);

struct DatasetCsv {
  LabeledSet train;
  LabeledSet query;
  LabeledSet gallery;
};
DatasetCsv read_dataset_csv(const std::filesystem::path& path);

void write_loss_curve_csv(const std::filesystem::path& path,
                          const std::vector<double>& epoch_losses);

void write_cmc_csv(const std::filesystem::path& path, const EvalReport& report);

void write_pca_csv(const std::filesystem::path& path, const Matrix& points,
                   const IntVector& identities, const IntVector& cameras,
                   const std::vector<std::string>& splits);

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report);

/// Checkpoint: model shape and parameters, optimizer accumulators, pooled
/// table, centers, update table, label maps, plus the resolved experiment
/// spec as a JSON string. Binary little-endian; round-trips losslessly.
void save_checkpoint(const std::filesystem::path& path, const TrainerState& state,
                     const std::string& spec_json);

struct LoadedCheckpoint {
  TrainerState state;
  std::string spec_json;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// "%.17g" rendering used by every CSV writer.
std::string format_double(double value);

}  // namespace toim

#endif  // TOIM_IO_HPP_
