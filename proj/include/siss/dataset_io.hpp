#pragma once

#include <sstream>
#include <string>

#include <json.hpp>

#include "siss/csv.hpp"
#include "siss/toy_data.hpp"

namespace siss {

// CSV of (x1, x2, is_unlearn_member) plus a JSON sidecar with the generating
// spec, so a dataset file pair is self-describing.
inline void write_dataset_csv(const std::string& csv_path, const UnlearnDataset& ds) {
  CsvWriter w(csv_path, {"x1", "x2", "is_unlearn_member"});
  for (const Vec& p : ds.keep_points)
    w.append_row({format_double(p[0]), format_double(p[1]), "0"});
  for (const Vec& p : ds.unlearn_points)
    w.append_row({format_double(p[0]), format_double(p[1]), "1"});
}

inline nlohmann::json spec_to_json(const ToyDatasetSpec& spec) {
  nlohmann::json j;
  j["num_modes"] = spec.num_modes;
  j["radius"] = spec.radius;
  j["mode_std"] = spec.mode_std;
  j["n"] = spec.n;
  j["outlier_center"] = {spec.outlier_x, spec.outlier_y};
  j["outlier_std"] = spec.outlier_std;
  j["injection_rate"] = spec.injection_rate;
  return j;
}

inline ToyDatasetSpec spec_from_json(const nlohmann::json& j) {
  ToyDatasetSpec spec;
  spec.num_modes = j.at("num_modes").get<int>();
  spec.radius = j.at("radius").get<double>();
  spec.mode_std = j.at("mode_std").get<double>();
  spec.n = j.at("n").get<int>();
  spec.outlier_x = j.at("outlier_center").at(0).get<double>();
  spec.outlier_y = j.at("outlier_center").at(1).get<double>();
  spec.outlier_std = j.at("outlier_std").get<double>();
  spec.injection_rate = j.at("injection_rate").get<double>();
  return spec;
}

inline void write_dataset_sidecar(const std::string& json_path, const ToyDatasetSpec& spec) {
  write_file(json_path, spec_to_json(spec).dump(2) + "\n");
}

inline UnlearnDataset read_dataset_csv(const std::string& csv_path) {
  const std::string content = read_file(csv_path);
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset csv: " + csv_path);
  std::vector<Vec> keep, unlearn;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string x1, x2, flag;
    if (!std::getline(row, x1, ',') || !std::getline(row, x2, ',') || !std::getline(row, flag))
      throw std::runtime_error("malformed dataset row: " + line);
    Vec p{std::stod(x1), std::stod(x2)};
    if (flag == "1")
      unlearn.push_back(std::move(p));
    else
      keep.push_back(std::move(p));
  }
  return make_dataset(std::move(keep), std::move(unlearn));
}

}  // namespace siss
