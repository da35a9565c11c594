#include "toim/memory.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace toim {

PooledTable::PooledTable(Index identities, Index cameras, Index dim)
    : identities_(identities), cameras_(cameras), dim_(dim) {
  if (identities < 1 || cameras < 1 || dim < 1)
    throw std::invalid_argument("PooledTable: sizes must be >= 1");
  slots_ = Matrix::Zero(dim, identities * cameras);
  init_.assign(static_cast<std::size_t>(identities * cameras), 0);
}

Index PooledTable::flat(SlotKey key) const {
  if (key.identity < 0 || key.identity >= identities_ || key.camera < 0 ||
      key.camera >= cameras_)
    throw std::out_of_range("PooledTable: slot key out of range");
  return static_cast<Index>(key.identity) * cameras_ + key.camera;
}

void PooledTable::update(SlotKey key, const Eigen::Ref<const Vector>& f, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("PooledTable::update: gamma outside [0, 1]");
  if (f.size() != dim_)
    throw std::invalid_argument("PooledTable::update: dimension mismatch");
  const Index col = flat(key);
  if (!init_[col]) {
    slots_.col(col) = f;
    init_[col] = 1;
    return;
  }
  // Scalar loop keeps the arithmetic exactly gamma*v + (1-gamma)*f per
  // coordinate, with no expression-template reassociation.
  double* v = slots_.col(col).data();
  for (Index i = 0; i < dim_; ++i) v[i] = gamma * v[i] + (1.0 - gamma) * f[i];
}

void PooledTable::set_slot(SlotKey key, const Eigen::Ref<const Vector>& f) {
  if (f.size() != dim_)
    throw std::invalid_argument("PooledTable::set_slot: dimension mismatch");
  const Index col = flat(key);
  slots_.col(col) = f;
  init_[col] = 1;
}

UpdateTable::UpdateTable(Index capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("UpdateTable: capacity must be >= 1");
  entries_.reserve(static_cast<std::size_t>(capacity));
}

void UpdateTable::push(SlotKey key) {
  auto it = std::find(entries_.begin(), entries_.end(), key);
  if (it != entries_.end()) entries_.erase(it);
  entries_.push_back(key);
  if (static_cast<Index>(entries_.size()) > capacity_) entries_.erase(entries_.begin());
}

namespace {

constexpr char kTableMagic[8] = {'T', 'O', 'I', 'M', 'P', 'T', 'B', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("pooled table stream: truncated input");
  return value;
}

}  // namespace

void save_pooled_table(const PooledTable& table, std::ostream& out) {
  out.write(kTableMagic, sizeof(kTableMagic));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(table.identity_count()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(table.camera_count()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(table.dim()));
  out.write(reinterpret_cast<const char*>(table.raw_flags().data()),
            static_cast<std::streamsize>(table.raw_flags().size()));
  // Slots are written row-major over (identity, camera): column id*C + cam.
  for (Index col = 0; col < table.slot_count(); ++col)
    out.write(reinterpret_cast<const char*>(table.raw_slots().col(col).data()),
              static_cast<std::streamsize>(sizeof(double) * table.dim()));
  if (!out) throw std::runtime_error("pooled table stream: write failed");
}

PooledTable load_pooled_table(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTableMagic, sizeof(magic)) != 0)
    throw std::runtime_error("pooled table stream: bad magic");
  const auto m = static_cast<Index>(read_pod<std::uint64_t>(in));
  const auto c = static_cast<Index>(read_pod<std::uint64_t>(in));
  const auto d = static_cast<Index>(read_pod<std::uint64_t>(in));
  PooledTable table(m, c, d);
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(m * c));
  in.read(reinterpret_cast<char*>(flags.data()),
          static_cast<std::streamsize>(flags.size()));
  Vector slot(d);
  for (Index col = 0; col < m * c; ++col) {
    in.read(reinterpret_cast<char*>(slot.data()),
            static_cast<std::streamsize>(sizeof(double) * d));
    if (!in) throw std::runtime_error("pooled table stream: truncated input");
    if (flags[static_cast<std::size_t>(col)])
      table.set_slot({static_cast<int>(col / c), static_cast<int>(col % c)}, slot);
  }
  return table;
}

void save_pooled_table(const PooledTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  save_pooled_table(table, out);
}

PooledTable load_pooled_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  return load_pooled_table(in);
}

}  // namespace toim
