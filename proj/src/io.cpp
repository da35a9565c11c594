#include "toim/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace toim {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  return in;
}

void write_split_rows(std::ostream& out, const LabeledSet& set, const char* split) {
  for (Index i = 0; i < set.size(); ++i) {
    out << set.identities[i] << ',' << set.cameras[i] << ',' << split;
    for (Index d = 0; d < set.dim(); ++d)
      out << ',' << format_double(set.features(d, i));
    out << '\n';
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

LabeledSet pack_rows(const std::vector<std::vector<double>>& features,
                     const std::vector<int>& ids, const std::vector<int>& cams) {
  LabeledSet set;
  const Index n = static_cast<Index>(ids.size());
  const Index dim = n > 0 ? static_cast<Index>(features.front().size()) : 0;
  set.features.resize(dim, n);
  set.identities.resize(n);
  set.cameras.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = features[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != dim)
      throw std::runtime_error("dataset csv: ragged feature rows");
    for (Index d = 0; d < dim; ++d) set.features(d, i) = row[static_cast<std::size_t>(d)];
    set.identities[i] = ids[static_cast<std::size_t>(i)];
    set.cameras[i] = cams[static_cast<std::size_t>(i)];
  }
  return set;
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const LabeledSet& train,
                       const LabeledSet& query, const LabeledSet& gallery) {
  auto out = open_out(path);
  const Index dim = std::max({train.dim(), query.dim(), gallery.dim()});
  out << "id,cam,split";
  for (Index d = 0; d < dim; ++d) out << ",f" << d;
  out << '\n';
  write_split_rows(out, train, "train");
  write_split_rows(out, query, "query");
  write_split_rows(out, gallery, "gallery");
}

DatasetCsv read_dataset_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset csv: empty file");

  struct Rows {
    std::vector<std::vector<double>> features;
    std::vector<int> ids, cams;
  };
  Rows train, query, gallery;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() < 4) throw std::runtime_error("dataset csv: short row");
    Rows* rows = nullptr;
    if (fields[2] == "train") rows = &train;
    else if (fields[2] == "query") rows = &query;
    else if (fields[2] == "gallery") rows = &gallery;
    else throw std::runtime_error("dataset csv: unknown split '" + fields[2] + "'");
    rows->ids.push_back(std::stoi(fields[0]));
    rows->cams.push_back(std::stoi(fields[1]));
    std::vector<double> feat;
    feat.reserve(fields.size() - 3);
    for (std::size_t f = 3; f < fields.size(); ++f) feat.push_back(std::stod(fields[f]));
    rows->features.push_back(std::move(feat));
  }

  return {pack_rows(train.features, train.ids, train.cams),
          pack_rows(query.features, query.ids, query.cams),
          pack_rows(gallery.features, gallery.ids, gallery.cams)};
}

void write_loss_curve_csv(const std::filesystem::path& path,
                          const std::vector<double>& epoch_losses) {
  auto out = open_out(path);
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < epoch_losses.size(); ++e)
    out << (e + 1) << ',' << format_double(epoch_losses[e]) << '\n';
}

void write_cmc_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_out(path);
  out << "rank,cmc_cuhk03,cmc_market\n";
  const std::size_t ranks = std::min(report.cmc_cuhk03.size(), report.cmc_market.size());
  for (std::size_t k = 0; k < ranks; ++k)
    out << (k + 1) << ',' << format_double(report.cmc_cuhk03[k]) << ','
        << format_double(report.cmc_market[k]) << '\n';
}

void write_pca_csv(const std::filesystem::path& path, const Matrix& points,
                   const IntVector& identities, const IntVector& cameras,
                   const std::vector<std::string>& splits) {
  if (points.rows() != 2 || points.cols() != identities.size() ||
      identities.size() != cameras.size() ||
      static_cast<Index>(splits.size()) != identities.size())
    throw std::invalid_argument("write_pca_csv: misaligned inputs");
  auto out = open_out(path);
  out << "x,y,identity,camera,split\n";
  for (Index i = 0; i < points.cols(); ++i)
    out << format_double(points(0, i)) << ',' << format_double(points(1, i)) << ','
        << identities[i] << ',' << cameras[i] << ',' << splits[static_cast<std::size_t>(i)]
        << '\n';
}

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report) {
  nlohmann::json j;
  j["cmc_cuhk03"] = report.cmc_cuhk03;
  j["cmc_market"] = report.cmc_market;
  j["map"] = report.map;
  j["repetitions"] = report.repetitions;
  j["rank1_cuhk03"] = report.cmc_cuhk03.empty() ? 0.0 : report.cmc_cuhk03.front();
  j["rank1_market"] = report.cmc_market.empty() ? 0.0 : report.cmc_market.front();
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'O', 'I', 'M', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated input");
  return value;
}

void write_doubles(std::ostream& out, const double* data, Index count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(sizeof(double) * count));
}

void read_doubles(std::istream& in, double* data, Index count) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!in) throw std::runtime_error("checkpoint: truncated input");
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto size = read_pod<std::uint64_t>(in);
  std::string s(size, '\0');
  in.read(s.data(), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("checkpoint: truncated input");
  return s;
}

void write_int_list(std::ostream& out, const std::vector<int>& values) {
  write_pod<std::uint64_t>(out, values.size());
  for (int v : values) write_pod<std::int32_t>(out, v);
}

std::vector<int> read_int_list(std::istream& in) {
  const auto size = read_pod<std::uint64_t>(in);
  std::vector<int> values(size);
  for (auto& v : values) v = read_pod<std::int32_t>(in);
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state,
                     const std::string& spec_json) {
  auto out = open_out(path, true);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_string(out, spec_json);

  const MlpShape& s = state.model.shape();
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(s.input_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(s.hidden_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(s.output_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(s.head_classes));
  write_pod<std::uint8_t>(out, s.normalize_output ? 1 : 0);
  write_doubles(out, state.model.params().data(), state.model.params().size());

  write_pod<double>(out, state.optimizer.rho);
  write_pod<double>(out, state.optimizer.eps);
  write_pod<double>(out, state.optimizer.lr);
  write_doubles(out, state.optimizer.sq_grad_avg.data(), state.optimizer.sq_grad_avg.size());
  write_doubles(out, state.optimizer.sq_step_avg.data(), state.optimizer.sq_step_avg.size());

  save_pooled_table(state.pooled, out);
  save_pooled_table(state.centers, out);

  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(state.updates.capacity()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(state.updates.size()));
  for (const SlotKey& key : state.updates.entries()) {
    write_pod<std::int32_t>(out, key.identity);
    write_pod<std::int32_t>(out, key.camera);
  }

  write_int_list(out, state.identity_values);
  write_int_list(out, state.camera_values);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic");

  LoadedCheckpoint loaded;
  loaded.spec_json = read_string(in);

  MlpShape shape;
  shape.input_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  shape.hidden_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  shape.output_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  shape.head_classes = static_cast<Index>(read_pod<std::uint64_t>(in));
  shape.normalize_output = read_pod<std::uint8_t>(in) != 0;
  Vector params(shape.param_count());
  read_doubles(in, params.data(), params.size());
  loaded.state.model = MlpModel(shape, std::move(params));

  const double rho = read_pod<double>(in);
  const double eps = read_pod<double>(in);
  const double lr = read_pod<double>(in);
  loaded.state.optimizer = AdaDeltaState(shape.param_count(), rho, eps, lr);
  read_doubles(in, loaded.state.optimizer.sq_grad_avg.data(), shape.param_count());
  read_doubles(in, loaded.state.optimizer.sq_step_avg.data(), shape.param_count());

  loaded.state.pooled = load_pooled_table(in);
  loaded.state.centers = load_pooled_table(in);

  const auto capacity = static_cast<Index>(read_pod<std::uint64_t>(in));
  const auto count = static_cast<Index>(read_pod<std::uint64_t>(in));
  loaded.state.updates = UpdateTable(capacity);
  for (Index i = 0; i < count; ++i) {
    const int id = read_pod<std::int32_t>(in);
    const int cam = read_pod<std::int32_t>(in);
    loaded.state.updates.push({id, cam});
  }

  loaded.state.identity_values = read_int_list(in);
  loaded.state.camera_values = read_int_list(in);
  return loaded;
}

}  // namespace toim
