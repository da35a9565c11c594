#include "toim/synthdata.hpp"

#include <map>
#include <string>
#include <vector>

#include "toim/rng.hpp"

namespace toim {

void SynthConfig::validate() const {
  if (num_identities < 2)
    throw std::invalid_argument("SynthConfig: need >= 2 identities for disjoint pools");
  if (num_cameras < 1 || samples_per_id_per_cam < 1 || latent_dim < 1)
    throw std::invalid_argument("SynthConfig: counts must be >= 1");
  if (observation_dim < latent_dim)
    throw std::invalid_argument("SynthConfig: observation_dim must be >= latent_dim");
  if (camera_bias_scale < 0.0 || noise_scale < 0.0)
    throw std::invalid_argument("SynthConfig: scales must be >= 0");
}

namespace {

enum Stream : std::uint64_t {
  kProjection = 1,
  kCameraBias = 2,
  kPrototypes = 3,
  kNoise = 4,
  kSplit = 5,
};

Matrix gaussian_matrix(Index rows, Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.next_gaussian();
  return m;
}

}  // namespace

SynthDataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();

  Rng proj_rng(derive_seed(cfg.seed, kProjection));
  Rng bias_rng(derive_seed(cfg.seed, kCameraBias));
  Rng proto_rng(derive_seed(cfg.seed, kPrototypes));
  Rng noise_rng(derive_seed(cfg.seed, kNoise));

  // Shared observation map; columns scaled so observations stay O(1).
  const Matrix projection =
      gaussian_matrix(cfg.observation_dim, cfg.latent_dim,
                      1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)), proj_rng);

  const Matrix camera_bias =
      gaussian_matrix(cfg.latent_dim, cfg.num_cameras, cfg.camera_bias_scale, bias_rng);
  const Matrix prototypes =
      gaussian_matrix(cfg.latent_dim, cfg.num_identities, 1.0, proto_rng);

  const Index train_ids = (cfg.num_identities + 1) / 2;
  const Index eval_ids = cfg.num_identities - train_ids;
  const Index per_id = cfg.num_cameras * cfg.samples_per_id_per_cam;

  SynthDataset out;
  out.train.features.resize(cfg.observation_dim, train_ids * per_id);
  out.train.identities.resize(train_ids * per_id);
  out.train.cameras.resize(train_ids * per_id);
  out.train_latents.resize(cfg.latent_dim, train_ids * per_id);

  LabeledSet eval;
  eval.features.resize(cfg.observation_dim, eval_ids * per_id);
  eval.identities.resize(eval_ids * per_id);
  eval.cameras.resize(eval_ids * per_id);

  Index train_col = 0;
  Index eval_col = 0;
  Vector latent(cfg.latent_dim);
  for (Index id = 0; id < cfg.num_identities; ++id) {
    const bool in_train = id < train_ids;
    for (Index cam = 0; cam < cfg.num_cameras; ++cam) {
      for (Index s = 0; s < cfg.samples_per_id_per_cam; ++s) {
        for (Index d = 0; d < cfg.latent_dim; ++d)
          latent[d] = prototypes(d, id) + camera_bias(d, cam) +
                      cfg.noise_scale * noise_rng.next_gaussian();
        if (in_train) {
          out.train.features.col(train_col) = projection * latent;
          out.train_latents.col(train_col) = latent;
          out.train.identities[train_col] = static_cast<int>(id);
          out.train.cameras[train_col] = static_cast<int>(cam);
          ++train_col;
        } else {
          eval.features.col(eval_col) = projection * latent;
          eval.identities[eval_col] = static_cast<int>(id);
          eval.cameras[eval_col] = static_cast<int>(cam);
          ++eval_col;
        }
      }
    }
  }

  if (eval_ids > 0) {
    auto [query, gallery] = split_query_gallery(eval, derive_seed(cfg.seed, kSplit));
    out.query = std::move(query);
    out.gallery = std::move(gallery);
  }
  return out;
}

std::pair<LabeledSet, LabeledSet> split_query_gallery(const LabeledSet& samples,
                                                      std::uint64_t seed) {
  samples.check_aligned();
  if (samples.size() == 0)
    throw std::invalid_argument("split_query_gallery: empty sample set");

  std::map<int, std::vector<Index>> by_identity;
  for (Index i = 0; i < samples.size(); ++i)
    by_identity[samples.identities[i]].push_back(i);

  Rng rng(seed);
  std::vector<Index> query_idx;
  std::vector<std::uint8_t> is_query(static_cast<std::size_t>(samples.size()), 0);
  for (const auto& [id, pool] : by_identity) {
    bool multi_camera = false;
    for (Index i : pool)
      if (samples.cameras[i] != samples.cameras[pool.front()]) {
        multi_camera = true;
        break;
      }
    if (!multi_camera)
      throw std::invalid_argument("split_query_gallery: identity " + std::to_string(id) +
                                  " appears under a single camera");
    const Index pick = pool[rng.next_below(pool.size())];
    query_idx.push_back(pick);
    is_query[static_cast<std::size_t>(pick)] = 1;
  }

  auto gather = [&samples](const std::vector<Index>& idx) {
    LabeledSet set;
    set.features.resize(samples.dim(), static_cast<Index>(idx.size()));
    set.identities.resize(static_cast<Index>(idx.size()));
    set.cameras.resize(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      set.features.col(static_cast<Index>(i)) = samples.features.col(idx[i]);
      set.identities[static_cast<Index>(i)] = samples.identities[idx[i]];
      set.cameras[static_cast<Index>(i)] = samples.cameras[idx[i]];
    }
    return set;
  };

  std::vector<Index> gallery_idx;
  for (Index i = 0; i < samples.size(); ++i)
    if (!is_query[static_cast<std::size_t>(i)]) gallery_idx.push_back(i);

  return {gather(query_idx), gather(gallery_idx)};
}

}  // namespace toim
