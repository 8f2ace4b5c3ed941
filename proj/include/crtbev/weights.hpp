#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crtbev/rng.hpp"

namespace crtbev {

// Dense affine map y = W x + b, row-major weight.
struct LinearLayer {
  int out_dim = 0;
  int in_dim = 0;
  std::vector<double> weight;  // out_dim * in_dim
  std::vector<double> bias;    // out_dim

  LinearLayer() = default;
  LinearLayer(int out, int in)
      : out_dim(out), in_dim(in),
        weight(static_cast<std::size_t>(out) * in, 0.0), bias(out, 0.0) {}

  // uniform in [-k, k], k = 1/sqrt(fan_in)
  static LinearLayer seeded(int out, int in, Rng& rng);
  static LinearLayer identity(int n);

  void forward(const double* in, double* out) const;
  std::vector<double> forward(const std::vector<double>& in) const;
};

// Two affine layers with a ReLU between.
struct Mlp2 {
  LinearLayer l1;
  LinearLayer l2;

  static Mlp2 seeded(int out, int hidden, int in, Rng& rng);
  std::vector<double> forward(const std::vector<double>& in) const;
  void forward(const double* in, double* scratch, double* out) const;
};

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
double sigmoid(double z);
void softmax_inplace(double* v, int n);

// Named matrices serialized to one binary file:
//   header  : magic 'CRTW', version, entry count, reserved
//   table   : per entry {name_len, name, rows, cols, payload offset}
//   payload : row-major float64
// Save/load round-trips bit-exactly.
class WeightBundle {
 public:
  struct Entry {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
  };

  void put(const std::string& name, int rows, int cols, std::vector<double> data);
  void put_layer(const std::string& name, const LinearLayer& layer);
  const Entry& get(const std::string& name) const;  // throws if missing
  LinearLayer get_layer(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static WeightBundle load(const std::filesystem::path& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace crtbev
