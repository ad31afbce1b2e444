#include "ldcq/checkpoint.hpp"

#include <fstream>

namespace ldcq::nn {

namespace {
constexpr int kFormatVersion = 1;
}

nlohmann::json bundle_to_json(const ParameterBundle& b) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, m] : b.items()) {
    nlohmann::json arr;
    arr["rows"] = m.rows();
    arr["cols"] = m.cols();
    std::vector<double> data(m.data(), m.data() + m.size());
    arr["data"] = std::move(data);
    j[name] = std::move(arr);
  }
  return j;
}

ParameterBundle bundle_from_json(const nlohmann::json& j) {
  ParameterBundle b;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto rows = it.value().at("rows").get<Eigen::Index>();
    const auto cols = it.value().at("cols").get<Eigen::Index>();
    const auto data = it.value().at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::runtime_error("checkpoint: array size mismatch for " + it.key());
    Mat m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    b.add(it.key(), std::move(m));
  }
  return b;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "ldcq-checkpoint";
  j["version"] = kFormatVersion;
  j["meta"] = ckpt.meta;
  nlohmann::json bundles = nlohmann::json::object();
  for (const auto& [name, b] : ckpt.bundles) bundles[name] = bundle_to_json(b);
  j["bundles"] = std::move(bundles);
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + file.string());
  out << j.dump();
  out << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + file.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "ldcq-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized file " + file.string());
  if (j.value("version", -1) != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + file.string());
  Checkpoint ckpt;
  ckpt.meta = j.value("meta", nlohmann::json::object());
  for (auto it = j.at("bundles").begin(); it != j.at("bundles").end(); ++it)
    ckpt.bundles.emplace(it.key(), bundle_from_json(it.value()));
  return ckpt;
}

}  // namespace ldcq::nn
