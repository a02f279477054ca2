#pragma once

#include <json.hpp>

#include "mpcrl/policy.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

inline nlohmann::json to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vec vec_from_json(const nlohmann::json& j) {
  Vec v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline nlohmann::json to_json(const Mat& m) {
  nlohmann::json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  nlohmann::json data = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  out["data"] = data;
  return out;
}

inline Mat mat_from_json(const nlohmann::json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  Mat m(rows, cols);
  int at = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j.at("data").at(at++).get<double>();
  return m;
}

inline nlohmann::json to_json(const ExplorationRecord& rec) {
  nlohmann::json j;
  j["s"] = to_json(rec.s);
  j["a"] = to_json(rec.a);
  j["e"] = to_json(rec.e);
  j["nabla_theta_pi"] = to_json(rec.nabla_theta_pi);
  j["m"] = to_json(rec.m);
  j["c"] = to_json(rec.c);
  return j;
}

inline ExplorationRecord record_from_json(const nlohmann::json& j) {
  ExplorationRecord rec;
  rec.s = vec_from_json(j.at("s"));
  rec.a = vec_from_json(j.at("a"));
  rec.e = vec_from_json(j.at("e"));
  rec.nabla_theta_pi = mat_from_json(j.at("nabla_theta_pi"));
  rec.m = mat_from_json(j.at("m"));
  rec.c = vec_from_json(j.at("c"));
  return rec;
}

}  // namespace mpcrl
