#include "evrel/tensorfile.hpp"

#include <fstream>

#include "evrel/errors.hpp"

namespace evrel::io {

static constexpr std::string_view kMagic = "EVTF1";

void TensorFile::add(std::string name, Eigen::MatrixXd data, nlohmann::json tensor_meta) {
  tensors.push_back(Tensor{std::move(name), std::move(data), std::move(tensor_meta)});
}

const Tensor* TensorFile::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Tensor& TensorFile::require(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw ArgumentError("tensor '" + std::string(name) + "' not found");
  return *t;
}

void TensorFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");

  nlohmann::json manifest;
  manifest["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    nlohmann::json entry;
    entry["name"] = t.name;
    entry["rows"] = t.data.rows();
    entry["cols"] = t.data.cols();
    entry["meta"] = t.meta.is_null() ? nlohmann::json::object() : t.meta;
    manifest["tensors"].push_back(std::move(entry));
  }

  out << kMagic << '\n' << manifest.dump() << '\n';
  for (const auto& t : tensors) {
    for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.data.cols(); ++c) {
        const double v = t.data(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  if (!out) throw MissingInputError("short write to " + path.string());
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());

  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw ParseError(path.string(), 1, "not a tensor file (bad magic)");
  }
  std::string manifest_line;
  if (!std::getline(in, manifest_line)) {
    throw ParseError(path.string(), 2, "missing manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 2, std::string("bad manifest: ") + e.what());
  }

  TensorFile file;
  file.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    Tensor t;
    t.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    t.meta = entry.value("meta", nlohmann::json::object());
    t.data.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        t.data(r, c) = v;
      }
    }
    if (!in) throw ParseError(path.string(), 2, "truncated tensor payload for " + t.name);
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace evrel::io
