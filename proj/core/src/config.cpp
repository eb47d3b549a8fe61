#include "mocap/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace mocap {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in '" + where + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T* out) {
  if (obj.contains(key)) *out = obj.at(key).get<T>();
}

void parse_scene(const json& j, SceneConfig* s) {
  check_keys(j, {"persons", "frames", "seed", "fps", "script", "image_width", "image_height",
                 "focal", "height_min", "height_max", "appearance_drift", "occlusions", "hues"},
             "scene");
  read(j, "persons", &s->persons);
  read(j, "frames", &s->frames);
  read(j, "seed", &s->seed);
  read(j, "fps", &s->fps);
  read(j, "script", &s->script);
  read(j, "image_width", &s->image_width);
  read(j, "image_height", &s->image_height);
  read(j, "focal", &s->focal);
  read(j, "height_min", &s->height_min);
  read(j, "height_max", &s->height_max);
  read(j, "appearance_drift", &s->appearance_drift);
  read(j, "hues", &s->hues);
  if (j.contains("occlusions")) {
    for (const auto& o : j.at("occlusions")) {
      check_keys(o, {"person", "start", "end"}, "scene.occlusions[]");
      OcclusionWindow w;
      read(o, "person", &w.person);
      read(o, "start", &w.start);
      read(o, "end", &w.end);
      s->occlusions.push_back(w);
    }
  }
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  check_keys(doc, {"schema", "scene", "noise", "render", "assoc", "decoder", "fitting", "tracking",
                   "eval", "bench"},
             "<root>");
  if (doc.contains("schema") && doc.at("schema").get<int>() != 1) {
    throw ConfigError("config: unsupported schema version");
  }

  if (doc.contains("scene")) parse_scene(doc.at("scene"), &c.scene);

  if (doc.contains("noise")) {
    const json& j = doc.at("noise");
    check_keys(j, {"sigma", "sigma_heat", "sigma_paf", "sigma_enc", "seed"}, "noise");
    if (j.contains("sigma")) {
      const double s = j.at("sigma").get<double>();
      c.noise.sigma_heat = c.noise.sigma_paf = c.noise.sigma_enc = s;
    }
    read(j, "sigma_heat", &c.noise.sigma_heat);
    read(j, "sigma_paf", &c.noise.sigma_paf);
    read(j, "sigma_enc", &c.noise.sigma_enc);
    read(j, "seed", &c.noise.seed);
  }

  if (doc.contains("render")) {
    const json& j = doc.at("render");
    check_keys(j, {"heat_sigma", "paf_halfwidth", "enc_radius", "occlusion_margin", "channel_dense"},
               "render");
    read(j, "heat_sigma", &c.render.heat_sigma);
    read(j, "paf_halfwidth", &c.render.paf_halfwidth);
    read(j, "enc_radius", &c.render.enc_radius);
    read(j, "occlusion_margin", &c.render.occlusion_margin);
    read(j, "channel_dense", &c.render.channel_dense);
  }

  if (doc.contains("assoc")) {
    const json& j = doc.at("assoc");
    check_keys(j, {"peak_threshold", "s_min", "min_fraction", "n_samples"}, "assoc");
    read(j, "peak_threshold", &c.assoc.peak_threshold);
    read(j, "s_min", &c.assoc.s_min);
    read(j, "min_fraction", &c.assoc.min_fraction);
    read(j, "n_samples", &c.assoc.n_samples);
  }

  if (doc.contains("decoder")) {
    const json& j = doc.at("decoder");
    check_keys(j, {"samples", "epochs", "batch", "lr", "dropout", "val_fraction", "patience",
                   "seed", "ablate_encoding"},
               "decoder");
    read(j, "samples", &c.decoder.samples);
    read(j, "epochs", &c.decoder.train.epochs);
    read(j, "batch", &c.decoder.train.batch);
    read(j, "lr", &c.decoder.train.lr);
    read(j, "dropout", &c.decoder.train.dropout_rows);
    read(j, "val_fraction", &c.decoder.train.val_fraction);
    read(j, "patience", &c.decoder.train.patience);
    read(j, "seed", &c.decoder.train.seed);
    read(j, "ablate_encoding", &c.decoder.ablate_encoding);
  }

  if (doc.contains("fitting")) {
    const json& j = doc.at("fitting");
    check_keys(j, {"max_iterations", "grad_tolerance", "enable_filter", "enable_temporal",
                   "recovery_tau", "one_euro", "weights"},
               "fitting");
    read(j, "max_iterations", &c.fitting.fit.max_iterations);
    read(j, "grad_tolerance", &c.fitting.fit.grad_tolerance);
    read(j, "enable_filter", &c.fitting.enable_filter);
    read(j, "enable_temporal", &c.fitting.enable_temporal);
    read(j, "recovery_tau", &c.fitting.recovery_tau);
    if (j.contains("one_euro")) {
      const json& e = j.at("one_euro");
      check_keys(e, {"mincutoff", "beta", "dcutoff"}, "fitting.one_euro");
      read(e, "mincutoff", &c.fitting.one_euro.mincutoff);
      read(e, "beta", &c.fitting.one_euro.beta);
      read(e, "dcutoff", &c.fitting.one_euro.dcutoff);
    }
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      check_keys(w, {"w3d", "w2d", "wlim", "wtemp", "wdepth"}, "fitting.weights");
      read(w, "w3d", &c.fitting.weights.w3d);
      read(w, "w2d", &c.fitting.weights.w2d);
      read(w, "wlim", &c.fitting.weights.wlim);
      read(w, "wtemp", &c.fitting.weights.wtemp);
      read(w, "wdepth", &c.fitting.weights.wdepth);
    }
  }

  if (doc.contains("tracking")) {
    const json& j = doc.at("tracking");
    check_keys(j, {"threshold", "retention_frames", "refresh_seconds", "w_appearance", "w_pose2d",
                   "w_pose3d"},
               "tracking");
    read(j, "threshold", &c.tracker.threshold);
    read(j, "retention_frames", &c.tracker.retention_frames);
    read(j, "refresh_seconds", &c.tracker.refresh_seconds);
    read(j, "w_appearance", &c.tracker.w_appearance);
    read(j, "w_pose2d", &c.tracker.w_pose2d);
    read(j, "w_pose3d", &c.tracker.w_pose3d);
  }

  if (doc.contains("eval")) {
    const json& j = doc.at("eval");
    check_keys(j, {"pck_threshold_mm", "auc_step_mm"}, "eval");
    read(j, "pck_threshold_mm", &c.eval.pck_threshold_mm);
    read(j, "auc_step_mm", &c.eval.auc_step_mm);
  }

  if (doc.contains("bench")) {
    const json& j = doc.at("bench");
    check_keys(j, {"frames", "max_persons"}, "bench");
    read(j, "frames", &c.bench.frames);
    read(j, "max_persons", &c.bench.max_persons);
  }

  if (c.scene.persons < 1) throw ConfigError("config: scene.persons must be >= 1");
  if (c.scene.frames < 1) throw ConfigError("config: scene.frames must be >= 1");
  if (c.scene.image_width % 16 != 0 || c.scene.image_height % 16 != 0) {
    throw ConfigError("config: image dimensions must be divisible by 16");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json doc;
  doc["schema"] = 1;
  doc["scene"] = {{"persons", c.scene.persons},
                  {"frames", c.scene.frames},
                  {"seed", c.scene.seed},
                  {"fps", c.scene.fps},
                  {"script", c.scene.script},
                  {"image_width", c.scene.image_width},
                  {"image_height", c.scene.image_height},
                  {"focal", c.scene.focal},
                  {"height_min", c.scene.height_min},
                  {"height_max", c.scene.height_max},
                  {"appearance_drift", c.scene.appearance_drift}};
  doc["noise"] = {{"sigma_heat", c.noise.sigma_heat},
                  {"sigma_paf", c.noise.sigma_paf},
                  {"sigma_enc", c.noise.sigma_enc},
                  {"seed", c.noise.seed}};
  doc["render"] = {{"heat_sigma", c.render.heat_sigma},
                   {"paf_halfwidth", c.render.paf_halfwidth},
                   {"enc_radius", c.render.enc_radius},
                   {"occlusion_margin", c.render.occlusion_margin},
                   {"channel_dense", c.render.channel_dense}};
  doc["assoc"] = {{"peak_threshold", c.assoc.peak_threshold},
                  {"s_min", c.assoc.s_min},
                  {"min_fraction", c.assoc.min_fraction},
                  {"n_samples", c.assoc.n_samples}};
  doc["decoder"] = {{"samples", c.decoder.samples},
                    {"epochs", c.decoder.train.epochs},
                    {"batch", c.decoder.train.batch},
                    {"lr", c.decoder.train.lr},
                    {"dropout", c.decoder.train.dropout_rows},
                    {"val_fraction", c.decoder.train.val_fraction},
                    {"patience", c.decoder.train.patience},
                    {"seed", c.decoder.train.seed},
                    {"ablate_encoding", c.decoder.ablate_encoding}};
  doc["fitting"] = {{"max_iterations", c.fitting.fit.max_iterations},
                    {"grad_tolerance", c.fitting.fit.grad_tolerance},
                    {"enable_filter", c.fitting.enable_filter},
                    {"enable_temporal", c.fitting.enable_temporal},
                    {"recovery_tau", c.fitting.recovery_tau},
                    {"one_euro",
                     {{"mincutoff", c.fitting.one_euro.mincutoff},
                      {"beta", c.fitting.one_euro.beta},
                      {"dcutoff", c.fitting.one_euro.dcutoff}}},
                    {"weights",
                     {{"w3d", c.fitting.weights.w3d},
                      {"w2d", c.fitting.weights.w2d},
                      {"wlim", c.fitting.weights.wlim},
                      {"wtemp", c.fitting.weights.wtemp},
                      {"wdepth", c.fitting.weights.wdepth}}}};
  doc["tracking"] = {{"threshold", c.tracker.threshold},
                     {"retention_frames", c.tracker.retention_frames},
                     {"refresh_seconds", c.tracker.refresh_seconds},
                     {"w_appearance", c.tracker.w_appearance},
                     {"w_pose2d", c.tracker.w_pose2d},
                     {"w_pose3d", c.tracker.w_pose3d}};
  doc["eval"] = {{"pck_threshold_mm", c.eval.pck_threshold_mm},
                 {"auc_step_mm", c.eval.auc_step_mm}};
  doc["bench"] = {{"frames", c.bench.frames}, {"max_persons", c.bench.max_persons}};
  return doc.dump(2);
}

}  // namespace mocap
