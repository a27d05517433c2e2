// ekd/config.hpp

// Copyright 2026  The ekd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"

#include "ekd/io.hpp"
#include "ekd/pipeline.hpp"

// JSON run configuration. Parsing rejects unknown keys; serialisation writes
// every field, defaults included, so parse(serialize(parse(x))) == parse(x).

namespace ekd {

using Json = nlohmann::ordered_json;

namespace detail {

inline void reject_unknown(const Json &j, const std::set<std::string> &known, const std::string &where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto &[key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const Json &j, const char *key, T &out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline Json to_json(const SynthConfig &s) {
  return Json{{"num_classes", s.num_classes},
              {"feature_dim", s.feature_dim},
              {"utterances_per_split", s.utterances_per_split},
              {"mean_utterance_length", s.mean_utterance_length},
              {"class_separation", s.class_separation},
              {"label_noise", s.label_noise},
              {"seed", s.seed},
              {"mean_segment_length", s.mean_segment_length},
              {"smoothing", s.smoothing},
              {"process_noise", s.process_noise},
              {"observation_noise", s.observation_noise}};
}

inline SynthConfig synth_from_json(const Json &j) {
  detail::reject_unknown(j,
                         {"num_classes", "feature_dim", "utterances_per_split", "mean_utterance_length",
                          "class_separation", "label_noise", "seed", "mean_segment_length", "smoothing",
                          "process_noise", "observation_noise"},
                         "synth");
  SynthConfig s;
  detail::read_opt(j, "num_classes", s.num_classes);
  detail::read_opt(j, "feature_dim", s.feature_dim);
  detail::read_opt(j, "utterances_per_split", s.utterances_per_split);
  detail::read_opt(j, "mean_utterance_length", s.mean_utterance_length);
  detail::read_opt(j, "class_separation", s.class_separation);
  detail::read_opt(j, "label_noise", s.label_noise);
  detail::read_opt(j, "seed", s.seed);
  detail::read_opt(j, "mean_segment_length", s.mean_segment_length);
  detail::read_opt(j, "smoothing", s.smoothing);
  detail::read_opt(j, "process_noise", s.process_noise);
  detail::read_opt(j, "observation_noise", s.observation_noise);
  return s;
}

inline Json to_json(const ArchSpec &a) {
  return Json{{"context", {a.context.left, a.context.right}},
              {"hidden", a.hidden},
              {"activation", to_string(a.activation)}};
}

inline ArchSpec arch_from_json(const Json &j) {
  detail::reject_unknown(j, {"context", "hidden", "activation"}, "architecture");
  ArchSpec a;
  std::vector<std::size_t> ctx{a.context.left, a.context.right};
  detail::read_opt(j, "context", ctx);
  if (ctx.size() != 2) throw ConfigError("context must be [left, right]");
  a.context = {ctx[0], ctx[1]};
  detail::read_opt(j, "hidden", a.hidden);
  std::string act = to_string(a.activation);
  detail::read_opt(j, "activation", act);
  try {
    a.activation = activation_from_string(act);
  } catch (const ParameterError &e) {
    throw ConfigError(e.what());
  }
  return a;
}

inline Json to_json(const TrainHyperparams &h) {
  return Json{{"epochs", h.epochs}, {"batch_size", h.batch_size}, {"lr_initial", h.lr_initial}, {"lr_final", h.lr_final}};
}

inline TrainHyperparams training_from_json(const Json &j) {
  detail::reject_unknown(j, {"epochs", "batch_size", "lr_initial", "lr_final"}, "training");
  TrainHyperparams h;
  detail::read_opt(j, "epochs", h.epochs);
  detail::read_opt(j, "batch_size", h.batch_size);
  detail::read_opt(j, "lr_initial", h.lr_initial);
  detail::read_opt(j, "lr_final", h.lr_final);
  return h;
}

inline Json to_json(const ExperimentConfig &c) {
  Json teachers = Json::array();
  for (const auto &t : c.teachers) teachers.push_back(to_json(t));
  return Json{{"synth", to_json(c.synth)},
              {"speed_factors", c.speed_factors},
              {"teachers", teachers},
              {"student", to_json(c.student)},
              {"ks", c.ks},
              {"lambdas", c.lambdas},
              {"temperature", c.temperature},
              {"fusion", c.fusion_weights ? Json(c.fusion_weights->weights) : Json("grid-search")},
              {"grid_step", c.grid_step},
              {"training", to_json(c.training)},
              {"student_data", c.student_data == StudentData::kAugmented ? "augmented" : "original"},
              {"seeds", c.seeds}};
}

inline ExperimentConfig experiment_from_json(const Json &j) {
  detail::reject_unknown(j,
                         {"synth", "speed_factors", "teachers", "student", "ks", "lambdas", "temperature", "fusion",
                          "grid_step", "training", "student_data", "seeds"},
                         "config");
  ExperimentConfig c;
  if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
  detail::read_opt(j, "speed_factors", c.speed_factors);
  if (j.contains("teachers")) {
    if (!j.at("teachers").is_array()) throw ConfigError("teachers must be an array");
    for (const auto &t : j.at("teachers")) c.teachers.push_back(arch_from_json(t));
  }
  if (j.contains("student")) c.student = arch_from_json(j.at("student"));
  detail::read_opt(j, "ks", c.ks);
  detail::read_opt(j, "lambdas", c.lambdas);
  detail::read_opt(j, "temperature", c.temperature);
  if (j.contains("fusion")) {
    const auto &f = j.at("fusion");
    if (f.is_string()) {
      if (f.get<std::string>() != "grid-search") throw ConfigError("fusion must be \"grid-search\" or a weight list");
    } else {
      FusionWeights w;
      detail::read_opt(j, "fusion", w.weights);
      c.fusion_weights = w;
    }
  }
  detail::read_opt(j, "grid_step", c.grid_step);
  if (j.contains("training")) c.training = training_from_json(j.at("training"));
  std::string sd = "augmented";
  detail::read_opt(j, "student_data", sd);
  if (sd == "augmented") c.student_data = StudentData::kAugmented;
  else if (sd == "original") c.student_data = StudentData::kOriginal;
  else throw ConfigError("student_data must be \"augmented\" or \"original\"");
  detail::read_opt(j, "seeds", c.seeds);
  return c;
}

inline ExperimentConfig parse_config(const std::string &text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_from_json(j);
}

inline std::string serialize_config(const ExperimentConfig &c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig load_config(const std::filesystem::path &path) {
  return parse_config(detail::read_file(path));
}

}  // namespace ekd
