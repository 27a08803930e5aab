#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpforecast/errors.hpp"
#include "gpforecast/gp.hpp"
#include "gpforecast/version.hpp"

namespace gpforecast {

// Everything needed to rebuild a TrainedModel from disk: hyperparameters,
// transform statistics, and the frozen training set. `meta` is an opaque
// block callers use for tool version, config echo, and dataset statistics.
struct ModelDocument {
  int format_version = kModelFormatVersion;
  std::array<double, HyperParams::kCount> theta_log{};
  double transform_center = 0.0;
  std::vector<InputPoint> points;
  std::vector<double> targets;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

inline ModelDocument make_document(const TrainedModel& model) {
  ModelDocument doc;
  doc.theta_log = model.theta.log_array();
  doc.transform_center = model.transform_state.center;
  doc.points = model.train_points;
  doc.targets.assign(model.targets.data(),
                     model.targets.data() + model.targets.size());
  return doc;
}

inline nlohmann::ordered_json to_json(const ModelDocument& doc) {
  nlohmann::ordered_json j;
  j["format_version"] = doc.format_version;
  j["meta"] = doc.meta;
  j["theta_log"] = doc.theta_log;
  j["transform"] = {{"center", doc.transform_center}};
  nlohmann::ordered_json train;
  std::vector<double> t, rain, hum, temp;
  for (const InputPoint& p : doc.points) {
    t.push_back(p.t);
    rain.push_back(p.rainfall);
    hum.push_back(p.humidity);
    temp.push_back(p.temperature);
  }
  train["t"] = t;
  train["rainfall"] = rain;
  train["humidity"] = hum;
  train["temperature"] = temp;
  train["targets"] = doc.targets;
  j["train"] = train;
  return j;
}

inline ModelDocument document_from_json(const nlohmann::ordered_json& j) {
  ModelDocument doc;
  doc.format_version = j.at("format_version").get<int>();
  if (doc.format_version != kModelFormatVersion) {
    throw IoError("model document: unsupported format_version " +
                  std::to_string(doc.format_version));
  }
  doc.meta = j.value("meta", nlohmann::ordered_json::object());
  const auto theta = j.at("theta_log").get<std::vector<double>>();
  if (theta.size() != HyperParams::kCount) {
    throw IoError("model document: theta_log must have 12 entries");
  }
  std::copy(theta.begin(), theta.end(), doc.theta_log.begin());
  doc.transform_center = j.at("transform").at("center").get<double>();

  const auto& train = j.at("train");
  const auto t = train.at("t").get<std::vector<double>>();
  const auto rain = train.at("rainfall").get<std::vector<double>>();
  const auto hum = train.at("humidity").get<std::vector<double>>();
  const auto temp = train.at("temperature").get<std::vector<double>>();
  doc.targets = train.at("targets").get<std::vector<double>>();
  if (rain.size() != t.size() || hum.size() != t.size() ||
      temp.size() != t.size() || doc.targets.size() != t.size()) {
    throw IoError("model document: train arrays have mismatched lengths");
  }
  doc.points.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    doc.points.push_back(InputPoint{t[i], rain[i], hum[i], temp[i]});
  }
  return doc;
}

inline std::string serialize_model(const ModelDocument& doc) {
  return to_json(doc).dump(2) + "\n";
}

inline void save_model(const std::string& path, const ModelDocument& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model: cannot open " + path);
  out << serialize_model(doc);
  if (!out) throw IoError("save_model: write failed for " + path);
}

inline ModelDocument load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_model: " + std::string(e.what()));
  }
  return document_from_json(j);
}

// Rebuilds the trained model by refitting the stored inputs; predictions are
// reproduced up to factorization rounding.
inline TrainedModel refit(const ModelDocument& doc) {
  Eigen::VectorXd targets =
      Eigen::Map<const Eigen::VectorXd>(doc.targets.data(),
                                        static_cast<Eigen::Index>(doc.targets.size()));
  return fit(doc.points, targets, HyperParams::from_log_array(doc.theta_log),
             TransformState{doc.transform_center});
}

}  // namespace gpforecast
