#ifndef TOIM_TYPES_HPP_
#define TOIM_TYPES_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace toim {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// Address of one feature slot: which identity, seen by which camera.
struct SlotKey {
  int identity = 0;
  int camera = 0;

  friend bool operator==(const SlotKey&, const SlotKey&) = default;
};

enum class NegativeStrategy { UpdateTable, PooledTable };

enum class LossKind { Toim, Triplet, Oim, SoftmaxCe, Combined };

/// A set of feature vectors with aligned identity and camera labels.
/// Samples are stored as columns of `features` (D x n).
struct LabeledSet {
  Matrix features;
  IntVector identities;
  IntVector cameras;

  Index size() const { return identities.size(); }
  Index dim() const { return features.rows(); }

  void check_aligned() const {
    if (features.cols() != identities.size() || identities.size() != cameras.size())
      throw std::invalid_argument("LabeledSet: features/identities/cameras misaligned");
  }
};

/// Raised when a batch yields zero constructible triplet records.
class EmptyBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace toim

#endif  // TOIM_TYPES_HPP_
