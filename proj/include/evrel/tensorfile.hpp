#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evrel::io {

// Container for named double matrices: a one-line JSON manifest followed by
// the raw row-major float64 payload. Assumes a little-endian host.
struct Tensor {
  std::string name;
  Eigen::MatrixXd data;
  nlohmann::json meta;  // optional per-tensor metadata
};

struct TensorFile {
  nlohmann::json meta;  // file-level metadata (format/version/config)
  std::vector<Tensor> tensors;

  void add(std::string name, Eigen::MatrixXd data, nlohmann::json tensor_meta = {});
  const Tensor* find(std::string_view name) const;
  const Tensor& require(std::string_view name) const;

  void save(const std::filesystem::path& path) const;
  static TensorFile load(const std::filesystem::path& path);
};

}  // namespace evrel::io
