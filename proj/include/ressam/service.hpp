#ifndef RESSAM_SERVICE_HPP
#define RESSAM_SERVICE_HPP

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ressam/bank.hpp"
#include "ressam/dataset.hpp"
#include "ressam/detector.hpp"
#include "ressam/io.hpp"
#include "ressam/preprocess.hpp"
#include "ressam/report.hpp"
#include "ressam/reservoir.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen
// parameter names.
#include <httplib.h>

namespace ressam {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir;   // frame files, directly or under frames/
  fs::path bank_path;
  fs::path reservoir_path;
  PreprocessConfig preprocess;
  DetectConfig detect;
  std::size_t pixel_budget = 1u << 20;  // larger frames detect as background jobs
};

/// Heatmap rendered over the frame grid: unscored pixels 0, scores scaled so
/// the maximum maps to 255.
inline Gray8Image render_heatmap(const DetectionResult& r) {
  Gray8Image img{r.frame_width, r.frame_height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(r.frame_width) * r.frame_height, 0)};
  const ScoredPoint* top = r.heatmap.argmax();
  if (!top || !(top->score > 0.0)) return img;
  for (const auto& p : r.heatmap.points) {
    const double v = std::round(255.0 * p.score / top->score);
    img.pixels[static_cast<std::size_t>(p.y) * r.frame_width + p.x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

/// Request body {"positives": [[x, y], ...], "negatives": [[x, y], ...]}.
inline PromptSet prompts_from_json(const Json& body) {
  PromptSet ps;
  auto read = [&](const char* key, std::vector<Point>& out) {
    if (!body.contains(key)) return;
    for (const auto& p : body.at(key)) {
      if (!p.is_array() || p.size() != 2) throw Error(std::string(key) + " entries must be [x, y] pairs");
      out.push_back({p[0].get<int>(), p[1].get<int>()});
    }
  };
  read("positives", ps.positives);
  read("negatives", ps.negatives);
  return ps;
}

class Service {
 public:
  explicit Service(ServiceConfig cfg)
      : cfg_(std::move(cfg)),
        weights_(ReservoirWeights::deserialize(read_file_bytes(cfg_.reservoir_path))),
        bank_(FeatureBank::deserialize(read_file_bytes(cfg_.bank_path))) {
    if (bank_.fingerprint() != weights_.fingerprint()) {
      throw Error("bank '" + cfg_.bank_path.string() + "' was built with reservoir " + hex64(bank_.fingerprint()) +
                  " but '" + cfg_.reservoir_path.string() + "' is " + hex64(weights_.fingerprint()));
    }
    const fs::path frames_dir = fs::is_directory(cfg_.data_dir / "frames") ? cfg_.data_dir / "frames" : cfg_.data_dir;
    for (const auto& path : list_frame_files(frames_dir)) {
      BScanFrame raw = load_frame(path);
      const std::string id = raw.id;
      raw_.emplace(id, raw);
      frames_.emplace(id, preprocess(raw, cfg_.preprocess));
    }
  }

  const FeatureBank& bank() const { return bank_; }
  const ReservoirWeights& weights() const { return weights_; }

  /// The detect core shared with the CLI.
  DetectionResult run_detect(const std::string& frame_id, const PromptSet& prompts) const {
    return detect(frame(frame_id), prompts, bank_, weights_, cfg_.detect);
  }

  std::string result_text(const DetectionResult& r) const { return dump(to_json(r, cfg_.preprocess)); }

  void mount(httplib::Server& svr) {
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const NotFound& e) {
        error(res, 404, e.what());
      } catch (const Error& e) {
        error(res, 400, e.what());
      } catch (const nlohmann::json::exception& e) {
        error(res, 400, std::string("bad JSON: ") + e.what());
      } catch (const std::exception& e) {
        error(res, 500, e.what());
      }
    });
    svr.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("X-Ressam-Fingerprint", hex64(weights_.fingerprint()));
    });

    svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      json(res, 200, Json{{"status", "ok"}, {"frames", frames_.size()}, {"bank_size", bank_.size()}, {"config", echo()},
                          {"fingerprint", hex64(weights_.fingerprint())}});
    });

    svr.Get("/v1/frames", [this](const httplib::Request&, httplib::Response& res) {
      Json list = Json::array();
      for (const auto& [id, f] : frames_) list.push_back(Json{{"id", id}, {"width", f.width()}, {"height", f.height()}});
      json(res, 200, Json{{"frames", list}, {"config", echo()}, {"fingerprint", hex64(weights_.fingerprint())}});
    });

    svr.Get(R"(/v1/frames/([^/]+)/image\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto& raw = raw_frame(req.matches[1]);
      res.set_content(encode_png_gray(render_gray8(raw)), "image/png");
    });

    svr.Post(R"(/v1/frames/([^/]+)/detect)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const BScanFrame& f = frame(id);
      const PromptSet prompts = prompts_from_json(req.body.empty() ? Json::object() : Json::parse(req.body));
      prompts.validate(f.width(), f.height());
      const std::string sid = session_id(req);
      session(sid).with([&](SessionState& s) { s.prompts[id] = prompts; });
      if (f.size() > cfg_.pixel_budget) {
        const std::string job = start_job(sid, id, prompts);
        res.status = 202;
        res.set_content(dump(Json{{"job", job}, {"poll", "/v1/jobs/" + job}}), "application/json");
        return;
      }
      DetectionResult r = run_detect(id, prompts);
      std::string text = result_text(r);
      session(sid).with([&](SessionState& s) { s.results.insert_or_assign(id, std::move(r)); });
      res.set_content(text, "application/json");
    });

    svr.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(jobs_mutex_);
      auto it = jobs_.find(req.matches[1]);
      if (it == jobs_.end()) throw NotFound("unknown job '" + std::string(req.matches[1]) + "'");
      Job& j = *it->second;
      if (!j.done) {
        json(res, 200, Json{{"job", it->first}, {"status", "running"}});
      } else if (!j.error.empty()) {
        json(res, 200, Json{{"job", it->first}, {"status", "failed"}, {"error", j.error}});
      } else {
        res.set_content(j.text, "application/json");
      }
    });

    svr.Get(R"(/v1/frames/([^/]+)/heatmap\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      frame(id);
      std::optional<Gray8Image> img;
      session(session_id(req)).with([&](SessionState& s) {
        auto it = s.results.find(id);
        if (it != s.results.end()) img = render_heatmap(it->second);
      });
      if (!img) throw NotFound("no detection for frame '" + id + "' in this session");
      res.set_content(encode_png_gray(*img), "image/png");
    });

    svr.Post("/v1/categorize", [this](const httplib::Request& req, httplib::Response& res) {
      const Json body = req.body.empty() ? Json::object() : Json::parse(req.body);
      CategorizeOptions opt;
      opt.algo = body.value("algo", opt.algo);
      opt.k = body.value("k", opt.k);
      if (body.contains("linkage")) opt.linkage = parse_linkage(body.at("linkage").get<std::string>());
      opt.fuzzifier = body.value("m", opt.fuzzifier);
      opt.seed = body.value("seed", opt.seed);
      opt.standardize = body.value("standardize", opt.standardize);
      opt.primary_only = body.value("primary_only", opt.primary_only);
      std::vector<StoredRegion> regions;
      session(session_id(req)).with([&](SessionState& s) {
        for (const auto& [id, r] : s.results) {
          for (auto& sr : stored_regions(to_json(r))) regions.push_back(std::move(sr));
        }
      });
      res.set_content(dump(categorize_regions(std::move(regions), opt, std::nullopt)), "application/json");
    });
  }

  /// Blocks until stopped.
  void listen(httplib::Server& svr) {
    if (!svr.listen(cfg_.host, cfg_.port)) {
      throw Error("cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
    }
  }

  ~Service() {
    std::lock_guard lock(jobs_mutex_);
    for (auto& [id, j] : jobs_) {
      if (j->worker.joinable()) j->worker.join();
    }
  }

 private:
  struct NotFound : Error {
    using Error::Error;
  };

  struct SessionState {
    std::map<std::string, PromptSet> prompts;
    std::map<std::string, DetectionResult> results;
  };

  class Session {
   public:
    template <typename F>
    void with(F&& f) {
      std::lock_guard lock(mutex_);
      f(state_);
    }

   private:
    std::mutex mutex_;
    SessionState state_;
  };

  struct Job {
    std::atomic<bool> done{false};
    std::string text;
    std::string error;
    std::thread worker;
  };

  static void error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(dump(Json{{"error", msg}}), "application/json");
  }

  static void json(httplib::Response& res, int status, const Json& j) {
    res.status = status;
    res.set_content(dump(j), "application/json");
  }

  static std::string session_id(const httplib::Request& req) {
    if (req.has_header("X-Session")) return req.get_header_value("X-Session");
    if (req.has_param("session")) return req.get_param_value("session");
    return "default";
  }

  Json echo() const {
    return Json{{"preprocess", to_json(cfg_.preprocess)},
                {"detect", to_json(cfg_.detect)},
                {"patch", to_json(bank_.spec())},
                {"lambda", bank_.lambda()},
                {"reservoir", to_json(weights_.config())},
                {"beta", bank_.beta() ? Json(*bank_.beta()) : Json(nullptr)},
                {"pixel_budget", cfg_.pixel_budget}};
  }

  const BScanFrame& frame(const std::string& id) const {
    auto it = frames_.find(id);
    if (it == frames_.end()) throw NotFound("unknown frame '" + id + "'");
    return it->second;
  }

  const BScanFrame& raw_frame(const std::string& id) const {
    auto it = raw_.find(id);
    if (it == raw_.end()) throw NotFound("unknown frame '" + id + "'");
    return it->second;
  }

  Session& session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    auto& slot = sessions_[id];
    if (!slot) slot = std::make_unique<Session>();
    return *slot;
  }

  std::string start_job(const std::string& sid, const std::string& frame_id, const PromptSet& prompts) {
    std::lock_guard lock(jobs_mutex_);
    const std::string id = "job-" + std::to_string(++job_counter_);
    auto job = std::make_unique<Job>();
    Job* j = job.get();
    j->worker = std::thread([this, j, sid, frame_id, prompts] {
      try {
        DetectionResult r = run_detect(frame_id, prompts);
        j->text = result_text(r);
        session(sid).with([&](SessionState& s) { s.results.insert_or_assign(frame_id, std::move(r)); });
      } catch (const std::exception& e) {
        j->error = e.what();
      }
      j->done = true;
    });
    jobs_.emplace(id, std::move(job));
    return id;
  }

  ServiceConfig cfg_;
  ReservoirWeights weights_;
  FeatureBank bank_;
  std::map<std::string, BScanFrame> raw_;
  std::map<std::string, BScanFrame> frames_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::mutex jobs_mutex_;
  std::map<std::string, std::unique_ptr<Job>> jobs_;
  std::size_t job_counter_ = 0;
};

}  // namespace ressam

#endif
