// res-scan: command-line front end for the detection pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ressam/ressam.hpp"

namespace {

using namespace ressam;

struct ReservoirOpts {
  ReservoirConfig cfg;
  void add(CLI::App& app) {
    app.add_option("--neurons", cfg.n, "reservoir size n")->capture_default_str();
    app.add_option("--rho", cfg.rho, "spectral radius target")->capture_default_str();
    app.add_option("--input-scale", cfg.input_scale, "input weight range")->capture_default_str();
    app.add_option("--lambda", cfg.lambda, "ridge regularization")->capture_default_str();
    app.add_option("--reservoir-seed", cfg.seed, "reservoir seed")->capture_default_str();
  }
};

struct PatchOpts {
  PatchSpec spec;
  std::optional<int> win;
  void add(CLI::App& app) {
    app.add_option("--win", win, "square patch size (sets --win-x and --win-y)");
    app.add_option("--win-x", spec.win_x, "patch width")->capture_default_str();
    app.add_option("--win-y", spec.win_y, "patch height")->capture_default_str();
    app.add_option("--stride", spec.stride, "bank sliding-window stride")->capture_default_str();
  }
  PatchSpec get() const {
    PatchSpec s = spec;
    if (win) s.win_x = s.win_y = *win;
    return s;
  }
};

struct ThresholdOpts {
  std::string method = "quantile";
  double param = 0.99;
  std::string holdout = "same_frame";
  void add(CLI::App& app) {
    app.add_option("--threshold", method, "quantile or sigma")->check(CLI::IsMember({"quantile", "sigma"}))
        ->capture_default_str();
    app.add_option("--threshold-param", param, "quantile q or sigma multiplier k")->capture_default_str();
    app.add_option("--holdout", holdout, "calibration holdout: self or same_frame")
        ->check(CLI::IsMember({"self", "same_frame"}))
        ->capture_default_str();
  }
  BankOptions get() const {
    BankOptions o;
    o.threshold = {method == "quantile" ? ThresholdMethod::quantile : ThresholdMethod::mean_plus_k_sigma, param};
    o.holdout = holdout == "self" ? Holdout::self : Holdout::same_frame;
    return o;
  }
};

struct PreprocessOpts {
  std::string order = "surface,median,gain,normalize";
  std::optional<int> surface_rows;
  int median_k = 3;
  std::string gain_profile = "linear";
  std::optional<double> gain_rate;
  void add(CLI::App& app) {
    app.add_option("--preprocess", order, "comma-separated steps, or 'none'")->capture_default_str();
    app.add_option("--surface-rows", surface_rows, "surface band height (default 10% of height)");
    app.add_option("--median-k", median_k, "median filter size")->capture_default_str();
    app.add_option("--gain-profile", gain_profile, "linear or exponential")
        ->check(CLI::IsMember({"linear", "exponential"}))
        ->capture_default_str();
    app.add_option("--gain-rate", gain_rate, "gain rate g (default: bottom row x4)");
  }
  PreprocessConfig get() const {
    PreprocessConfig c;
    c.order = order == "none" ? std::vector<PreprocessStep>{} : parse_preprocess_order(order);
    c.surface_rows = surface_rows;
    c.median_k = median_k;
    c.gain_profile = gain_profile == "linear" ? GainProfile::linear : GainProfile::exponential;
    c.gain_rate = gain_rate;
    return c;
  }
};

struct DetectOpts {
  DetectConfig cfg;
  std::optional<double> beta;
  std::optional<double> region_lambda;
  std::string masks;
  void add(CLI::App& app, bool with_masks) {
    app.add_option("--tol", cfg.tol, "region-growing tolerance")->capture_default_str();
    app.add_option("--smooth-k", cfg.smooth_k, "region-growing median size")->capture_default_str();
    app.add_option("--score-stride", cfg.score_stride, "scoring stride inside the candidate")->capture_default_str();
    app.add_option("--beta", beta, "threshold override (default: the bank's)");
    app.add_option("--region-lambda", region_lambda, "ridge term for region features (default: the bank's)")
        ->check(CLI::PositiveNumber);
    if (with_masks) app.add_option("--external-masks", masks, "directory of <frame_id>.pgm masks");
  }
  DetectConfig get() const {
    DetectConfig c = cfg;
    c.beta = beta;
    c.region_lambda = region_lambda;
    if (!masks.empty()) c.external_mask_dir = masks;
    return c;
  }
};

fs::path sibling_reservoir(const fs::path& bank) {
  fs::path p = bank;
  p.replace_extension(".r2de");
  return p;
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_file_bytes(out, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reservoir-feature anomaly detection for GPR B-scans"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_scene, synth_out;
  std::uint64_t synth_seed = 7;
  int synth_nontarget = 20, synth_per = 8, synth_w = 128, synth_h = 128;
  synth->add_option("--scene", synth_scene, "scene spec file (otherwise a random scene)");
  synth->add_option("--nontarget", synth_nontarget, "clean frames in a random scene")->capture_default_str();
  synth->add_option("--per-category", synth_per, "anomaly frames per category")->capture_default_str();
  synth->add_option("--width", synth_w)->capture_default_str();
  synth->add_option("--height", synth_h)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  // bank build
  auto* bank_cmd = app.add_subcommand("bank", "feature bank tools");
  bank_cmd->require_subcommand(1);
  auto* build = bank_cmd->add_subcommand("build", "build a bank from non-target frames");
  std::string build_frames, build_out, build_res_path, build_truth, build_summary;
  std::optional<std::size_t> build_count;
  std::uint64_t build_seed = 0;
  ReservoirOpts build_res;
  PatchOpts build_patch;
  ThresholdOpts build_thr;
  PreprocessOpts build_pre;
  build->add_option("--frames", build_frames, "directory of frames (or a dataset with frames/)")->required();
  build->add_option("--out", build_out, "bank file")->required();
  build->add_option("--reservoir", build_res_path, "reservoir file (default: bank path with .r2de)");
  build->add_option("--truth", build_truth, "truth CSV; labelled frames are excluded");
  build->add_option("--count", build_count, "use this many frames, drawn with --seed");
  build->add_option("--seed", build_seed, "frame selection seed")->capture_default_str();
  build->add_option("--summary", build_summary, "write a JSON summary here ('-' for stdout)");
  build_res.add(*build);
  build_patch.add(*build);
  build_thr.add(*build);
  build_pre.add(*build);

  // detect
  auto* det = app.add_subcommand("detect", "detect anomalies in one frame");
  std::string det_frame, det_bank, det_reservoir, det_prompts, det_out;
  DetectOpts det_opts;
  PreprocessOpts det_pre;
  det->add_option("--frame", det_frame, "frame file")->required();
  det->add_option("--bank", det_bank, "bank file")->required();
  det->add_option("--reservoir", det_reservoir, "reservoir file (default: bank path with .r2de)");
  det->add_option("--prompts", det_prompts, "\"pos:x,y;...;neg:x,y;...\"");
  det->add_option("--out", det_out, "result JSON ('-' for stdout)")->capture_default_str();
  det_opts.add(*det, true);
  det_pre.add(*det);

  // categorize
  auto* cat = app.add_subcommand("categorize", "cluster final regions from result files");
  std::string cat_results, cat_out, cat_truth, cat_linkage = "average";
  CategorizeOptions cat_opt;
  bool cat_raw = false;
  cat->add_option("--results", cat_results, "directory of result JSON files")->required();
  cat->add_option("--algo", cat_opt.algo)->check(CLI::IsMember({"kmeans", "ac", "fcm"}))->capture_default_str();
  cat->add_option("--k", cat_opt.k)->capture_default_str();
  cat->add_option("--linkage", cat_linkage, "average, ward, single or complete")->capture_default_str();
  cat->add_option("--m", cat_opt.fuzzifier, "fuzzifier for fcm")->capture_default_str();
  cat->add_option("--seed", cat_opt.seed)->capture_default_str();
  cat->add_option("--truth", cat_truth, "truth CSV for Acc/ARI/NMI");
  cat->add_flag("--primary-only", cat_opt.primary_only, "cluster primary regions only");
  cat->add_flag("--raw", cat_raw, "skip per-dimension standardization");
  cat->add_option("--out", cat_out, "clusters JSON ('-' for stdout)")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "run the evaluation protocol on a dataset");
  std::string ev_dataset, ev_out, ev_configs = "5/5,5/3,5/1,5/0,3/3,3/1,3/0", ev_linkage = "average";
  std::uint64_t ev_seed = 0;
  std::size_t ev_bank_count = 20;
  ExperimentConfig ev_cfg;
  ReservoirOpts ev_res;
  PatchOpts ev_patch;
  ThresholdOpts ev_thr;
  PreprocessOpts ev_pre;
  DetectOpts ev_det;
  bool ev_all_finals = false, ev_no_cat = false, ev_quiet = false, ev_raw = false;
  ev->add_option("--dataset", ev_dataset, "dataset directory (frames/ and truth.csv)")->required();
  ev->add_option("--configs", ev_configs, "prompt configs POS/NEG, comma-separated")->capture_default_str();
  ev->add_option("--seed", ev_seed)->capture_default_str();
  ev->add_option("--bank-frames", ev_bank_count, "non-target frames drawn for the bank")->capture_default_str();
  ev->add_option("--negative-margin", ev_cfg.negative_margin)->capture_default_str();
  ev->add_option("--clusters", ev_cfg.clusters)->capture_default_str();
  ev->add_option("--linkage", ev_linkage)->capture_default_str();
  ev->add_flag("--all-finals", ev_all_finals, "score every final region, not just the primary");
  ev->add_flag("--no-categorize", ev_no_cat);
  ev->add_flag("--raw", ev_raw, "skip per-dimension standardization before clustering");
  ev->add_flag("--quiet", ev_quiet);
  ev->add_option("--out", ev_out, "report JSON ('-' for stdout)")->capture_default_str();
  ev_res.add(*ev);
  ev_patch.add(*ev);
  ev_thr.add(*ev);
  ev_pre.add(*ev);
  ev_det.add(*ev, false);

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP service");
  ServiceConfig srv_cfg;
  std::string srv_data, srv_bank, srv_reservoir;
  DetectOpts srv_det;
  PreprocessOpts srv_pre;
  srv->add_option("--data", srv_data, "frame directory")->required();
  srv->add_option("--bank", srv_bank, "bank file")->required();
  srv->add_option("--reservoir", srv_reservoir, "reservoir file (default: bank path with .r2de)");
  srv->add_option("--host", srv_cfg.host)->capture_default_str();
  srv->add_option("--port", srv_cfg.port)->capture_default_str();
  srv->add_option("--pixel-budget", srv_cfg.pixel_budget, "frames above this size detect asynchronously")
      ->capture_default_str();
  srv_det.add(*srv, true);
  srv_pre.add(*srv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      SceneSpec scene = synth_scene.empty() ? random_scene(synth_nontarget, synth_per, synth_seed, synth_w, synth_h)
                                            : parse_scene(read_file_bytes(synth_scene));
      const SynthResult r = synth_generate(scene, synth_seed);
      save_dataset(synth_out, Dataset{r.frames, r.truths});
      write_file_bytes(fs::path(synth_out) / "scene.txt", to_text(scene));
      std::cerr << "wrote " << r.frames.size() << " frames, " << r.truths.size() << " anomalies to " << synth_out
                << "\n";
    } else if (*build) {
      const fs::path root = build_frames;
      Dataset data;
      const fs::path dir = fs::is_directory(root / "frames") ? root / "frames" : root;
      for (const auto& p : list_frame_files(dir)) data.frames.push_back(load_frame(p));
      if (!build_truth.empty()) data.truths = decode_truth_csv(read_file_bytes(build_truth));
      std::set<std::string> labelled;
      for (const auto& t : data.truths) labelled.insert(t.frame_id);
      const std::size_t available = data.frames.size() - std::min(data.frames.size(), labelled.size());
      const std::vector<std::string> ids = choose_bank_frames(data, build_count.value_or(available), build_seed);
      const PreprocessConfig pre = build_pre.get();
      std::vector<BScanFrame> frames;
      for (const auto& f : data.frames) {
        if (std::binary_search(ids.begin(), ids.end(), f.id)) frames.push_back(preprocess(f, pre));
      }
      const ReservoirWeights w = build_reservoir(build_res.cfg);
      const FeatureBank bank = build_bank(frames, w, build_patch.get(), build_res.cfg.lambda, build_thr.get());
      const fs::path res_path = build_res_path.empty() ? sibling_reservoir(build_out) : fs::path(build_res_path);
      write_file_bytes(build_out, bank.serialize());
      write_file_bytes(res_path, w.serialize());
      Json summary{{"bank", build_out},
                   {"reservoir", res_path.generic_string()},
                   {"frames", ids},
                   {"size", bank.size()},
                   {"beta", bank.beta() ? Json(*bank.beta()) : Json(nullptr)},
                   {"threshold", to_json(bank.threshold_rule())},
                   {"patch", to_json(bank.spec())},
                   {"lambda", bank.lambda()},
                   {"reservoir_config", to_json(w.config())},
                   {"preprocess", to_json(pre)},
                   {"fingerprint", hex64(w.fingerprint())}};
      if (!build_summary.empty()) write_text(build_summary, dump(summary));
      std::cerr << "bank of " << bank.size() << " features from " << ids.size() << " frames, beta "
                << (bank.beta() ? std::to_string(*bank.beta()) : "unset") << "\n";
    } else if (*det) {
      const fs::path res_path = det_reservoir.empty() ? sibling_reservoir(det_bank) : fs::path(det_reservoir);
      const ReservoirWeights w = ReservoirWeights::deserialize(read_file_bytes(res_path));
      const FeatureBank bank = FeatureBank::deserialize(read_file_bytes(det_bank));
      const PreprocessConfig pre = det_pre.get();
      const BScanFrame frame = preprocess(load_frame(det_frame), pre);
      const PromptSet prompts = parse_prompts(det_prompts);
      const DetectionResult r = detect(frame, prompts, bank, w, det_opts.get());
      write_text(det_out, dump(to_json(r, pre)));
    } else if (*cat) {
      std::vector<StoredRegion> regions;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(cat_results)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const Json j = Json::parse(read_file_bytes(f));
        if (!j.contains("finals")) continue;
        for (auto& s : stored_regions(j)) regions.push_back(std::move(s));
      }
      cat_opt.linkage = parse_linkage(cat_linkage);
      cat_opt.standardize = !cat_raw;
      std::optional<std::vector<GroundTruthRegion>> truths;
      if (!cat_truth.empty()) truths = decode_truth_csv(read_file_bytes(cat_truth));
      write_text(cat_out, dump(categorize_regions(std::move(regions), cat_opt, truths)));
    } else if (*ev) {
      const Dataset data = load_dataset(ev_dataset);
      ev_cfg.preprocess = ev_pre.get();
      ev_cfg.reservoir = ev_res.cfg;
      ev_cfg.spec = ev_patch.get();
      ev_cfg.bank = ev_thr.get();
      ev_cfg.detect = ev_det.get();
      ev_cfg.primary_only = !ev_all_finals;
      ev_cfg.categorize = !ev_no_cat;
      ev_cfg.linkage = parse_linkage(ev_linkage);
      ev_cfg.standardize = !ev_raw;
      const auto configs = parse_prompt_configs(ev_configs);
      const auto bank_ids = choose_bank_frames(data, ev_bank_count, ev_seed);
      ProgressFn progress;
      if (!ev_quiet) progress = [](const std::string& s) { std::cerr << s << "\n"; };
      const EvalReport report = run_experiment(data, bank_ids, configs, ev_cfg, ev_seed, progress);
      write_text(ev_out, dump(to_json(report)));
    } else if (*srv) {
      srv_cfg.data_dir = srv_data;
      srv_cfg.bank_path = srv_bank;
      srv_cfg.reservoir_path = srv_reservoir.empty() ? sibling_reservoir(srv_bank) : fs::path(srv_reservoir);
      srv_cfg.detect = srv_det.get();
      srv_cfg.preprocess = srv_pre.get();
      Service service(srv_cfg);
      httplib::Server server;
      service.mount(server);
      std::cerr << "listening on " << srv_cfg.host << ":" << srv_cfg.port << "\n";
      service.listen(server);
    }
  } catch (const std::exception& e) {
    std::cerr << "res-scan: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
