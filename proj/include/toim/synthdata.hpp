#ifndef TOIM_SYNTHDATA_HPP_
#define TOIM_SYNTHDATA_HPP_

#include <cstdint>
#include <utility>

#include "toim/types.hpp"

namespace toim {

/// Multi-camera identity data at desk scale. Each identity is a latent
/// prototype; each camera adds a fixed latent offset (appearance shift), and
/// every observation is a shared random linear map of
/// prototype + camera bias + gaussian noise. The bias is what makes naive
/// cross-camera matching fail while staying learnable.
struct SynthConfig {
  Index num_identities = 50;  // split half train / half eval, disjoint pools
  Index num_cameras = 5;
  Index samples_per_id_per_cam = 8;
  Index latent_dim = 12;
  Index observation_dim = 24;
  double camera_bias_scale = 1.2;
  double noise_scale = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  LabeledSet train;
  LabeledSet query;
  LabeledSet gallery;
  // Latent points behind the train partition, for inspection and tests only.
  Matrix train_latents;
};

SynthDataset gen_dataset(const SynthConfig& cfg);

/// Splits an evaluation pool into one query per identity (a seeded pick of
/// one sample, hence one camera) and a gallery of everything else. Every
/// identity must appear under at least two cameras so each query keeps a
/// cross-camera positive.
std::pair<LabeledSet, LabeledSet> split_query_gallery(const LabeledSet& samples,
                                                      std::uint64_t seed);

}  // namespace toim

#endif  // TOIM_SYNTHDATA_HPP_
