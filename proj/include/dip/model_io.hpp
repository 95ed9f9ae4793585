#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "dip/errors.hpp"
#include "dip/tensor_nn.hpp"

namespace dip {

using json = nlohmann::json;

/// {layer_sizes, activation, weights, biases}; weights as row-major nested
/// arrays of shape layer_sizes[l] x layer_sizes[l+1]. Doubles are emitted in
/// shortest round-trip form, so reading back is lossless.
inline json model_to_json(const ModelParams& p) {
  json j;
  j["layer_sizes"] = p.layer_sizes;
  j["activation"] = to_string(p.activation);
  json ws = json::array();
  json bs = json::array();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    json w = json::array();
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) row.push_back(p.weights[l](r, c));
      w.push_back(std::move(row));
    }
    ws.push_back(std::move(w));
    json b = json::array();
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) b.push_back(p.biases[l](i));
    bs.push_back(std::move(b));
  }
  j["weights"] = std::move(ws);
  j["biases"] = std::move(bs);
  return j;
}

inline ModelParams model_from_json(const json& j) {
  ModelParams p;
  try {
    p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    p.activation = activation_from_string(j.at("activation").get<std::string>());
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (p.layer_sizes.size() < 2 || ws.size() + 1 != p.layer_sizes.size() || bs.size() + 1 != p.layer_sizes.size())
      throw ShapeError("model JSON: layer count does not match layer_sizes");
    for (std::size_t l = 0; l < ws.size(); ++l) {
      const auto rows = static_cast<Eigen::Index>(p.layer_sizes[l]);
      const auto cols = static_cast<Eigen::Index>(p.layer_sizes[l + 1]);
      if (ws[l].size() != static_cast<std::size_t>(rows)) throw ShapeError("model JSON: weight rows mismatch");
      Matrix w(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = ws[l][static_cast<std::size_t>(r)];
        if (row.size() != static_cast<std::size_t>(cols)) throw ShapeError("model JSON: weight cols mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
      if (bs[l].size() != static_cast<std::size_t>(cols)) throw ShapeError("model JSON: bias length mismatch");
      Vector b(cols);
      for (Eigen::Index c = 0; c < cols; ++c) b(c) = bs[l][static_cast<std::size_t>(c)].get<double>();
      p.weights.push_back(std::move(w));
      p.biases.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
  validate_params(p);
  return p;
}

inline void save_model(const ModelParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path);
  out << model_to_json(p).dump(1) << '\n';
  if (!out) throw IoError("failed writing model file " + path);
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dip
