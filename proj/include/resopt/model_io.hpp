#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>

#include "resopt/autodiff.hpp"
#include "resopt/price_models.hpp"
#include "resopt/storage.hpp"

namespace resopt {

inline nlohmann::json to_json(const ForwardModel& m) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : m.curve.terms) terms.push_back({{"amplitude", t.amplitude}, {"period", t.period}});
  return {{"sigma", m.params.sigma}, {"a", m.params.a}, {"curve", {{"base", m.curve.base}, {"terms", terms}}},
          {"dt", m.dt}};
}

inline ForwardModel model_from_json(const nlohmann::json& j) {
  ForwardModel m;
  m.params.sigma = j.at("sigma").get<std::vector<double>>();
  m.params.a = j.at("a").get<std::vector<double>>();
  const auto& c = j.at("curve");
  m.curve.base = c.at("base").get<double>();
  for (const auto& t : c.value("terms", nlohmann::json::array()))
    m.curve.terms.push_back({t.at("amplitude").get<double>(), t.at("period").get<double>()});
  m.dt = j.value("dt", 1.0);
  m.validate();
  return m;
}

inline nlohmann::json to_json(const StorageSpec& s) {
  return {{"c_inject", s.c_inject}, {"c_withdraw", s.c_withdraw}, {"q_max", s.q_max}, {"q_init", s.q_init}};
}

inline StorageSpec storage_from_json(const nlohmann::json& j) {
  StorageSpec s;
  s.c_inject = j.value("c_inject", s.c_inject);
  s.c_withdraw = j.value("c_withdraw", s.c_withdraw);
  s.q_max = j.value("q_max", s.q_max);
  s.q_init = j.value("q_init", s.q_init);
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ad::LearningRateSchedule& s) {
  return {{"initial", s.initial}, {"final", s.final}, {"decay_steps", s.decay_steps}};
}

inline ad::LearningRateSchedule schedule_from_json(const nlohmann::json& j) {
  ad::LearningRateSchedule s;
  s.initial = j.at("initial").get<double>();
  s.final = j.value("final", s.initial);
  s.decay_steps = j.value("decay_steps", 0L);
  if (!(s.initial > 0.0) || !(s.final > 0.0) || s.decay_steps < 0)
    throw std::invalid_argument("learning-rate schedule: rates must be positive");
  return s;
}

inline nlohmann::json to_json(const Normalization& n) {
  return {{"spot_center", n.spot_center}, {"spot_scale", n.spot_scale}, {"factor_scale", n.factor_scale},
          {"horizon", n.horizon}};
}

inline Normalization normalization_from_json(const nlohmann::json& j) {
  Normalization n;
  n.spot_center = j.at("spot_center").get<double>();
  n.spot_scale = j.at("spot_scale").get<double>();
  n.factor_scale = j.at("factor_scale").get<std::vector<double>>();
  n.horizon = j.at("horizon").get<int>();
  return n;
}

}  // namespace resopt
