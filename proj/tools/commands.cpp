#include "commands.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "mocap/decoder_data.hpp"
#include "mocap/netgraph.hpp"
#include "mocap/pipeline.hpp"
#include "mocap/rng.hpp"

namespace mocap::cli {

namespace {

using nlohmann::json;

void ensure_out(const std::string& dir) { std::filesystem::create_directories(dir); }

json pose3d_json(const Pose3d& p) {
  json a = json::array();
  for (int j = 0; j < kNumJoints; ++j) a.push_back({p[j].x(), p[j].y(), p[j].z()});
  return a;
}

Pose3d pose3d_from_json(const json& a) {
  Pose3d p;
  for (int j = 0; j < kNumJoints; ++j) {
    p[j] = Vec3(a[static_cast<size_t>(j)][0].get<double>(), a[static_cast<size_t>(j)][1].get<double>(),
                a[static_cast<size_t>(j)][2].get<double>());
  }
  return p;
}

}  // namespace

void Context::apply_overrides() {
  if (seed_override) {
    config.scene.seed = *seed_override;
    config.noise.seed = Rng::mix(*seed_override, 1);
    config.decoder.train.seed = Rng::mix(*seed_override, 2);
  }
  config.decoder.train.threads = threads;
}

int cmd_simulate(Context& ctx, int dump_maps) {
  ensure_out(ctx.out_dir);
  const Skeleton& skel = Skeleton::standard();
  const auto frames = generate_motion(ctx.config.scene);

  write_scene_jsonl(ctx.out_dir + "/scene.jsonl", skel, frames, ctx.config.render);
  {
    std::ofstream os(ctx.out_dir + "/skeleton.json");
    os << skel.to_json() << "\n";
  }
  StageOneMaps maps;
  for (int f = 0; f < std::min<int>(dump_maps, static_cast<int>(frames.size())); ++f) {
    render_stage1(skel, frames[static_cast<size_t>(f)], ctx.config.render, ctx.config.noise, &maps,
                  nullptr);
    std::ostringstream name;
    name << ctx.out_dir << "/maps_" << std::setw(4) << std::setfill('0') << f << ".bin";
    write_maps(name.str(), maps);
  }
  std::cout << "simulate: " << frames.size() << " frames, " << ctx.config.scene.persons
            << " persons -> " << ctx.out_dir << "/scene.jsonl\n";
  return kExitOk;
}

int cmd_train_decoder(Context& ctx) {
  ensure_out(ctx.out_dir);
  const Skeleton& skel = Skeleton::standard();

  DatasetConfig data;
  data.n_samples = ctx.config.decoder.samples;
  data.seed = Rng::mix(ctx.config.decoder.train.seed, 0xDA7A5E7);
  data.threads = ctx.threads;
  data.render = ctx.config.render;
  data.assoc = ctx.config.assoc;
  data.image_width = ctx.config.scene.image_width;
  data.image_height = ctx.config.scene.image_height;

  std::cout << "train-decoder: building " << data.n_samples << " samples...\n";
  Eigen::MatrixXd x, y;
  build_decoder_dataset(skel, data, &x, &y);
  if (ctx.config.decoder.ablate_encoding) {
    ablate_encoding_inputs(x);
    std::cout << "train-decoder: encoding inputs ablated (2D + confidence only)\n";
  }

  MlpModel model = MlpModel::create(MlpModel::standard_widths(), ctx.config.decoder.train.seed);
  const TrainResult result = train(model, x, y, ctx.config.decoder.train);
  if (result.diverged) {
    std::cerr << "train-decoder: loss diverged (NaN)\n";
    return kExitDivergence;
  }

  save_model(ctx.out_dir + "/model.bin", model);
  {
    std::ofstream os(ctx.out_dir + "/loss_curve.csv");
    os << "epoch,train_loss,val_loss,val_mpjpe_mm\n";
    os << std::setprecision(10);
    for (const LossPoint& p : result.curve) {
      os << p.epoch << "," << p.train_loss << "," << p.val_loss << "," << p.val_mpjpe_mm << "\n";
    }
  }
  std::cout << "train-decoder: " << result.epochs_run << " epochs, best val MPJPE "
            << std::fixed << std::setprecision(2) << result.best_val_mpjpe_mm << " mm -> "
            << ctx.out_dir << "/model.bin\n";
  return kExitOk;
}

int cmd_run(Context& ctx, const std::string& model_path) {
  ensure_out(ctx.out_dir);
  const Skeleton& skel = Skeleton::standard();
  const MlpModel model = load_model(model_path);

  Pipeline::Options opt;
  opt.render = ctx.config.render;
  opt.noise = ctx.config.noise;
  opt.assoc = ctx.config.assoc;
  opt.fitting = ctx.config.fitting;
  opt.tracker = ctx.config.tracker;
  Pipeline pipeline(skel, opt, &model);

  const auto frames = generate_motion(ctx.config.scene);
  std::ofstream pred(ctx.out_dir + "/pred.jsonl");
  std::ofstream events(ctx.out_dir + "/track_events.jsonl");
  std::ofstream angles(ctx.out_dir + "/angles.csv");
  std::ofstream overlay(ctx.out_dir + "/overlay.jsonl");
  angles << "schema,1\nframe,person";
  for (int d = 0; d < kNumDof; ++d) angles << ",dof" << d;
  angles << ",world_x,world_y,world_z\n";
  angles << std::setprecision(10);

  for (const SceneFrame& frame : frames) {
    const FrameOutput out = pipeline.process(frame);
    json line;
    line["schema"] = 1;
    line["frame"] = out.frame;
    line["time"] = out.time;
    json persons = json::array();
    json overlay_people = json::array();
    for (const PersonOutput& p : out.persons) {
      json e;
      e["track"] = p.track_id;
      e["gt"] = p.gt_person;
      e["fitted"] = p.fitted;
      e["reinit"] = p.reinitialized;
      e["height_m"] = p.height_m;
      e["stage2_m"] = pose3d_json(p.stage2_m);
      if (p.fitted) {
        e["p3d_m"] = pose3d_json(p.fit_m);
        e["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + kNumDof);
        e["root_world_m"] = {p.root_world_m.x(), p.root_world_m.y(), p.root_world_m.z()};
        angles << out.frame << "," << p.track_id;
        for (int d = 0; d < kNumDof; ++d) angles << "," << p.theta[d];
        angles << "," << p.root_world_m.x() << "," << p.root_world_m.y() << ","
               << p.root_world_m.z() << "\n";
      }
      json joints = json::array();
      for (int j = 0; j < kNumJoints; ++j) {
        if (!p.p2d.visible[static_cast<size_t>(j)]) continue;
        joints.push_back({{"joint", j},
                          {"u", p.p2d.px[static_cast<size_t>(j)].x()},
                          {"v", p.p2d.px[static_cast<size_t>(j)].y()},
                          {"conf", p.conf[static_cast<size_t>(j)]}});
      }
      overlay_people.push_back({{"track", p.track_id}, {"joints", joints}});
      persons.push_back(e);
    }
    line["persons"] = persons;
    pred << line.dump() << "\n";
    overlay << json{{"frame", out.frame}, {"persons", overlay_people}}.dump() << "\n";
    for (const TrackEvent& ev : out.events) {
      events << json{{"frame", ev.frame}, {"event", ev.kind}, {"track", ev.track_id}}.dump()
             << "\n";
    }
  }
  std::cout << "run: " << frames.size() << " frames -> " << ctx.out_dir << "/pred.jsonl\n";
  return kExitOk;
}

namespace {

struct GtData {
  std::vector<int> person_ids;
  // person id -> per-frame pose / root.
  std::map<int, std::vector<Pose3d>> p3d;
  std::map<int, std::vector<Vec3>> root;
  int frames = 0;
};

GtData read_gt(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("eval: cannot open " + path);
  GtData gt;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json doc = json::parse(line);
    for (const auto& p : doc.at("persons")) {
      const int id = p.at("id").get<int>();
      if (!gt.p3d.count(id)) {
        gt.person_ids.push_back(id);
        gt.p3d[id] = {};
        gt.root[id] = {};
      }
      gt.p3d[id].push_back(pose3d_from_json(p.at("p3d_m")));
      const auto& r = p.at("root_world_m");
      gt.root[id].push_back(Vec3(r[0].get<double>(), r[1].get<double>(), r[2].get<double>()));
    }
    gt.frames += 1;
  }
  return gt;
}

json report_json(const MetricsReport& r) {
  return {{"pck", r.pck},
          {"auc", r.auc},
          {"mpjpe_mm", r.mpjpe_mm},
          {"abs_root_mm", r.abs_root_mm},
          {"jitter_mm", r.jitter_mm},
          {"frames_detected", r.frames_detected},
          {"frames_total", r.frames_total}};
}

}  // namespace

int cmd_eval(Context& ctx, const std::string& pred_path, const std::string& gt_path) {
  ensure_out(ctx.out_dir);
  const GtData gt = read_gt(gt_path);

  std::ifstream is(pred_path);
  if (!is) throw std::runtime_error("eval: cannot open " + pred_path);

  std::map<int, PoseTrack> stage2, stage3;
  std::map<int, std::vector<PoseParams>> thetas;
  for (int id : gt.person_ids) {
    PoseTrack t;
    t.person_id = id;
    t.gt_m = gt.p3d.at(id);
    t.gt_root_world = gt.root.at(id);
    t.pred_m.assign(static_cast<size_t>(gt.frames), Pose3d{});
    t.pred_root_world.assign(static_cast<size_t>(gt.frames), Vec3::Zero());
    t.detected.assign(static_cast<size_t>(gt.frames), false);
    stage2[id] = t;
    stage3[id] = t;
  }

  std::vector<int> unmatched;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json doc = json::parse(line);
    const int frame = doc.at("frame").get<int>();
    if (frame < 0 || frame >= gt.frames) continue;
    for (const auto& p : doc.at("persons")) {
      const int gid = p.at("gt").get<int>();
      if (gid < 0) continue;
      if (!stage2.count(gid)) {
        unmatched.push_back(gid);
        continue;
      }
      auto& s2 = stage2[gid];
      if (!s2.detected[static_cast<size_t>(frame)]) {
        s2.pred_m[static_cast<size_t>(frame)] = pose3d_from_json(p.at("stage2_m"));
        s2.detected[static_cast<size_t>(frame)] = true;
      }
      if (p.at("fitted").get<bool>()) {
        auto& s3 = stage3[gid];
        if (!s3.detected[static_cast<size_t>(frame)]) {
          s3.pred_m[static_cast<size_t>(frame)] = pose3d_from_json(p.at("p3d_m"));
          const auto& r = p.at("root_world_m");
          s3.pred_root_world[static_cast<size_t>(frame)] =
              Vec3(r[0].get<double>(), r[1].get<double>(), r[2].get<double>());
          s3.detected[static_cast<size_t>(frame)] = true;
          const auto& th = p.at("theta");
          PoseParams rates;
          for (int d = 0; d < kNumDof; ++d) rates[d] = th[static_cast<size_t>(d)].get<double>();
          thetas[gid].push_back(rates);
        }
      }
    }
  }
  if (!unmatched.empty()) {
    std::sort(unmatched.begin(), unmatched.end());
    unmatched.erase(std::unique(unmatched.begin(), unmatched.end()), unmatched.end());
    std::cerr << "eval: prediction person ids missing from ground truth:";
    for (int id : unmatched) std::cerr << " " << id;
    std::cerr << "\n";
    return kExitEvalMismatch;
  }

  std::vector<PoseTrack> s2_tracks, s3_tracks;
  for (int id : gt.person_ids) {
    s2_tracks.push_back(stage2[id]);
    s3_tracks.push_back(stage3[id]);
  }

  json doc;
  doc["schema"] = 1;
  auto eval_both = [&](const std::vector<PoseTrack>& tracks) {
    json j;
    j["all"] = report_json(evaluate_tracks(tracks, ctx.config.eval, false));
    j["matched"] = report_json(evaluate_tracks(tracks, ctx.config.eval, true));
    return j;
  };
  doc["stage2"] = eval_both(s2_tracks);
  doc["stage3"] = eval_both(s3_tracks);
  double djit = 0.0;
  int djn = 0;
  for (const auto& [id, seq] : thetas) {
    if (seq.size() >= 3) {
      djit += dof_jitter(seq);
      ++djn;
    }
  }
  doc["stage3"]["dof_jitter"] = djn > 0 ? djit / djn : 0.0;

  std::ofstream os(ctx.out_dir + "/metrics.json");
  os << doc.dump(2) << "\n";

  const MetricsReport all3 = evaluate_tracks(s3_tracks, ctx.config.eval, false);
  const MetricsReport m3 = evaluate_tracks(s3_tracks, ctx.config.eval, true);
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "eval stage3 All:     3DPCK " << all3.pck << "  AUC " << all3.auc << "  MPJPE "
            << all3.mpjpe_mm << " mm\n";
  std::cout << "eval stage3 Matched: 3DPCK " << m3.pck << "  AUC " << m3.auc << "  MPJPE "
            << m3.mpjpe_mm << " mm  abs-root " << m3.abs_root_mm << " mm\n";
  return kExitOk;
}

int cmd_net_report(Context& ctx) {
  ensure_out(ctx.out_dir);
  using namespace mocap::net;

  struct Entry {
    std::string name;
    NetGraph graph;
  };
  std::vector<Entry> nets;
  nets.push_back({"selecsls", build_selecsls()});
  nets.push_back({"selecsls-prev-skip", build_selecsls({SkipKind::kConcat, SkipSource::kPrev,
                                                        WidthScheme::kBase})});
  nets.push_back({"selecsls-add-skip", build_selecsls({SkipKind::kAdd, SkipSource::kPrev,
                                                       WidthScheme::kBase})});
  nets.push_back({"selecsls-dense", build_selecsls({SkipKind::kConcat, SkipSource::kDense,
                                                    WidthScheme::kBase})});
  nets.push_back({"resnet50", build_resnet50()});
  nets.push_back({"resnet34", build_resnet34()});

  const int w = ctx.config.scene.image_width;
  const int h = ctx.config.scene.image_height;
  const auto ref50 = build_resnet50();
  const double fp50_b1 = static_cast<double>(training_footprint_bytes(ref50, 1, w, h));
  const double fp50_b32 = static_cast<double>(training_footprint_bytes(ref50, 32, w, h));

  json doc;
  doc["schema"] = 1;
  doc["input"] = {{"width", w}, {"height", h}};
  std::cout << std::fixed << std::setprecision(3);
  std::cout << "net-report (input " << w << "x" << h << ")\n";
  std::cout << std::left << std::setw(22) << "network" << std::right << std::setw(12) << "params"
            << std::setw(12) << "GFLOPs" << std::setw(14) << "act sum MB" << std::setw(14)
            << "act peak MB" << std::setw(12) << "fp@1 MB" << std::setw(12) << "fp@32 MB"
            << std::setw(10) << "r@1" << std::setw(10) << "r@32" << "\n";

  for (const Entry& e : nets) {
    const ParamCount params = count_params(e.graph);
    const FlopCount flops = count_flops(e.graph, w, h);
    const ActivationMemory act = activation_memory(e.graph, 1, w, h);
    const double fp1 = static_cast<double>(training_footprint_bytes(e.graph, 1, w, h));
    const double fp32 = static_cast<double>(training_footprint_bytes(e.graph, 32, w, h));
    const double mb = 1.0 / (1024.0 * 1024.0);

    json je;
    je["params"] = params.total;
    je["flops"] = flops.total;
    je["activation_sum_bytes_b1"] = act.forward_sum_bytes;
    je["activation_peak_bytes_b1"] = act.forward_peak_bytes;
    je["backward_bytes_b1"] = act.backward_bytes;
    je["footprint_bytes_b1"] = static_cast<int64_t>(fp1);
    je["footprint_bytes_b32"] = static_cast<int64_t>(fp32);
    je["footprint_ratio_vs_resnet50_b1"] = fp1 / fp50_b1;
    je["footprint_ratio_vs_resnet50_b32"] = fp32 / fp50_b32;

    // Per-level aggregation by name prefix.
    const auto shapes = infer_shapes(e.graph, w, h);
    struct LevelAgg {
      int64_t params = 0;
      int64_t flops = 0;
      LayerShape out{};
    };
    std::map<std::string, LevelAgg> levels;
    for (size_t i = 0; i < e.graph.layers.size(); ++i) {
      const std::string& name = e.graph.layers[i].name;
      LevelAgg& lv = levels[name.substr(0, name.find('.'))];
      lv.params += params.per_layer[i];
      lv.flops += flops.per_layer[i];
      lv.out = shapes[i];
    }
    json jlevels;
    for (const auto& [name, lv] : levels) {
      jlevels[name] = {{"params", lv.params},
                       {"flops", lv.flops},
                       {"out_shape", {lv.out.channels, lv.out.width, lv.out.height}}};
    }
    je["levels"] = jlevels;
    doc["networks"][e.name] = je;

    std::cout << std::left << std::setw(22) << e.name << std::right << std::setw(12)
              << params.total << std::setw(12) << flops.total * 1e-9 << std::setw(14)
              << act.forward_sum_bytes * mb << std::setw(14) << act.forward_peak_bytes * mb
              << std::setw(12) << fp1 * mb << std::setw(12) << fp32 * mb << std::setw(10)
              << fp1 / fp50_b1 << std::setw(10) << fp32 / fp50_b32 << "\n";
  }

  std::ofstream os(ctx.out_dir + "/net_report.json");
  os << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_bench(Context& ctx, const std::string& model_path) {
  ensure_out(ctx.out_dir);
  const Skeleton& skel = Skeleton::standard();
  const MlpModel model = model_path.empty()
                             ? MlpModel::create(MlpModel::standard_widths(), 1)
                             : load_model(model_path);

  std::ofstream csv(ctx.out_dir + "/bench.csv");
  csv << "persons,ms_render,ms_assoc,ms_stage2,ms_tracking,ms_fitting\n";
  csv << std::setprecision(6);
  std::cout << "bench: frames per point = " << ctx.config.bench.frames << "\n";

  double first_core = 0.0, last_core = 0.0;
  for (int persons = 1; persons <= ctx.config.bench.max_persons; ++persons) {
    SceneConfig scene = ctx.config.scene;
    scene.persons = persons;
    scene.frames = ctx.config.bench.frames;
    const auto frames = generate_motion(scene);

    Pipeline::Options opt;
    opt.render = ctx.config.render;
    opt.noise = ctx.config.noise;
    opt.assoc = ctx.config.assoc;
    opt.fitting = ctx.config.fitting;
    opt.tracker = ctx.config.tracker;
    Pipeline pipeline(skel, opt, &model);

    double render = 0, assoc = 0, stage2 = 0, tracking = 0, fitting = 0;
    for (const SceneFrame& f : frames) {
      const FrameOutput out = pipeline.process(f);
      render += out.ms_render;
      assoc += out.ms_assoc;
      stage2 += out.ms_stage2;
      tracking += out.ms_tracking;
      fitting += out.ms_fitting;
    }
    const double n = static_cast<double>(frames.size());
    csv << persons << "," << render / n << "," << assoc / n << "," << stage2 / n << ","
        << tracking / n << "," << fitting / n << "\n";
    std::cout << "  persons=" << std::setw(2) << persons << std::fixed << std::setprecision(3)
              << "  render " << render / n << "  assoc " << assoc / n << "  stage2 " << stage2 / n
              << "  tracking " << tracking / n << "  fitting " << fitting / n << " ms/frame\n";
    const double core = (stage2 + fitting) / n;
    if (persons == 1) first_core = core;
    if (persons == ctx.config.bench.max_persons) last_core = core;
  }
  if (first_core > 0.0) {
    const double ratio = last_core / first_core;
    std::cout << std::fixed << std::setprecision(2) << "bench: stage2+fitting grows " << ratio
              << "x from 1 to " << ctx.config.bench.max_persons << " persons\n";
  }
  return kExitOk;
}

}  // namespace mocap::cli
