#include "crtbev/weights.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace crtbev {

LinearLayer LinearLayer::seeded(int out, int in, Rng& rng) {
  LinearLayer l(out, in);
  const double k = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : l.weight) w = rng.uniform(-k, k);
  for (double& b : l.bias) b = rng.uniform(-k, k);
  return l;
}

LinearLayer LinearLayer::identity(int n) {
  LinearLayer l(n, n);
  for (int i = 0; i < n; ++i) l.weight[static_cast<std::size_t>(i) * n + i] = 1.0;
  return l;
}

void LinearLayer::forward(const double* in, double* out) const {
  for (int o = 0; o < out_dim; ++o) {
    const double* row = weight.data() + static_cast<std::size_t>(o) * in_dim;
    double acc = bias[o];
    for (int i = 0; i < in_dim; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

std::vector<double> LinearLayer::forward(const std::vector<double>& in) const {
  if (static_cast<int>(in.size()) != in_dim)
    throw std::invalid_argument("LinearLayer: input dimension mismatch");
  std::vector<double> out(out_dim);
  forward(in.data(), out.data());
  return out;
}

Mlp2 Mlp2::seeded(int out, int hidden, int in, Rng& rng) {
  Mlp2 m;
  m.l1 = LinearLayer::seeded(hidden, in, rng);
  m.l2 = LinearLayer::seeded(out, hidden, rng);
  return m;
}

std::vector<double> Mlp2::forward(const std::vector<double>& in) const {
  std::vector<double> h = l1.forward(in);
  for (double& v : h) v = relu(v);
  return l2.forward(h);
}

void Mlp2::forward(const double* in, double* scratch, double* out) const {
  l1.forward(in, scratch);
  for (int i = 0; i < l1.out_dim; ++i) scratch[i] = relu(scratch[i]);
  l2.forward(scratch, out);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void softmax_inplace(double* v, int n) {
  double mx = v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  for (int i = 0; i < n; ++i) v[i] /= sum;
}

void WeightBundle::put(const std::string& name, int rows, int cols,
                       std::vector<double> data) {
  if (static_cast<std::size_t>(rows) * cols != data.size())
    throw std::invalid_argument("WeightBundle: shape does not match data for " + name);
  entries_[name] = Entry{rows, cols, std::move(data)};
}

void WeightBundle::put_layer(const std::string& name, const LinearLayer& layer) {
  put(name + ".w", layer.out_dim, layer.in_dim, layer.weight);
  put(name + ".b", layer.out_dim, 1, layer.bias);
}

const WeightBundle::Entry& WeightBundle::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::runtime_error("WeightBundle: missing entry " + name);
  return it->second;
}

LinearLayer WeightBundle::get_layer(const std::string& name) const {
  const Entry& w = get(name + ".w");
  const Entry& b = get(name + ".b");
  if (b.rows != w.rows || b.cols != 1)
    throw std::runtime_error("WeightBundle: bias shape mismatch for " + name);
  LinearLayer l(w.rows, w.cols);
  l.weight = w.data;
  l.bias = b.data;
  return l;
}

bool WeightBundle::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

namespace {

constexpr std::uint32_t kWeightMagic = 0x57545243;  // "CRTW" little-endian
constexpr std::uint32_t kWeightVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("WeightBundle: truncated file");
  return v;
}

}  // namespace

void WeightBundle::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("WeightBundle: cannot open " + path.string());
  write_pod(os, kWeightMagic);
  write_pod(os, kWeightVersion);
  write_pod(os, static_cast<std::uint32_t>(entries_.size()));
  write_pod(os, std::uint32_t{0});

  // layer table first, then payload; offsets are from file start
  std::uint64_t table_bytes = 0;
  for (const auto& [name, e] : entries_) {
    (void)e;
    table_bytes += 4 + name.size() + 4 + 4 + 8;
  }
  std::uint64_t offset = 16 + table_bytes;
  for (const auto& [name, e] : entries_) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(e.rows));
    write_pod(os, static_cast<std::uint32_t>(e.cols));
    write_pod(os, offset);
    offset += e.data.size() * sizeof(double);
  }
  for (const auto& [name, e] : entries_) {
    (void)name;
    os.write(reinterpret_cast<const char*>(e.data.data()),
             static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("WeightBundle: write failed for " + path.string());
}

WeightBundle WeightBundle::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("WeightBundle: cannot open " + path.string());
  if (read_pod<std::uint32_t>(is) != kWeightMagic)
    throw std::runtime_error("WeightBundle: bad magic in " + path.string());
  if (read_pod<std::uint32_t>(is) != kWeightVersion)
    throw std::runtime_error("WeightBundle: unsupported version in " + path.string());
  const std::uint32_t count = read_pod<std::uint32_t>(is);
  read_pod<std::uint32_t>(is);  // reserved

  struct TableRow {
    std::string name;
    std::uint32_t rows, cols;
    std::uint64_t offset;
  };
  std::vector<TableRow> table(count);
  for (auto& row : table) {
    const std::uint32_t len = read_pod<std::uint32_t>(is);
    row.name.resize(len);
    is.read(row.name.data(), len);
    row.rows = read_pod<std::uint32_t>(is);
    row.cols = read_pod<std::uint32_t>(is);
    row.offset = read_pod<std::uint64_t>(is);
    if (!is) throw std::runtime_error("WeightBundle: truncated table");
  }
  WeightBundle bundle;
  for (const auto& row : table) {
    is.seekg(static_cast<std::streamoff>(row.offset));
    std::vector<double> data(static_cast<std::size_t>(row.rows) * row.cols);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("WeightBundle: truncated payload");
    bundle.put(row.name, static_cast<int>(row.rows), static_cast<int>(row.cols),
               std::move(data));
  }
  return bundle;
}

}  // namespace crtbev
