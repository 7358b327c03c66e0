// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/service.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "freeu/image_io.hpp"
#include "freeu/jobs.hpp"

namespace freeu {

using nlohmann::json;

JobGate::JobGate(int workers, int queue_depth) : workers_(std::max(1, workers)), depth_(std::max(0, queue_depth)) {}

bool JobGate::acquire() {
    std::unique_lock lock(mu_);
    if (active_ + waiting_ >= workers_ + depth_) return false;
    ++waiting_;
    cv_.wait(lock, [this] { return active_ < workers_; });
    --waiting_;
    ++active_;
    return true;
}

void JobGate::release() {
    {
        std::lock_guard lock(mu_);
        --active_;
    }
    cv_.notify_one();
}

namespace {

struct Request {
    std::uint64_t seed = 0;
    int steps = 0;
    int count = 1;
    double r_cut = 4.0;
    FreeUConfig freeu;
};

enum class Kind { kSample, kCompare, kTrajectory };

HttpReply json_reply(int status, const json& body) { return {status, body.dump()}; }

HttpReply field_error(int status, const std::string& field, const std::string& message) {
    return json_reply(status, {{"errors", json::array({{{"field", field}, {"message", message}}})}});
}

json profile_json(const spectral::SpectrumProfile& p) {
    json lo = json::array(), hi = json::array();
    for (std::size_t k = 0; k < p.bands(); ++k) {
        lo.push_back(p.edges[k]);
        hi.push_back(p.edges[k + 1]);
    }
    return {{"band_lo", lo}, {"band_hi", hi}, {"rel_log_amp", p.values}};
}

std::string pgm_base64(const Tensor& plane) { return httplib::detail::base64_encode(encode_pgm(plane)); }

json branch_json(const BranchOutput& out) {
    json images = json::array(), spectra = json::array();
    for (std::int64_t i = 0; i < out.images.dim(0); ++i) images.push_back(pgm_base64(spectral::plane(out.images, i, 0)));
    for (const auto& p : out.spectra) spectra.push_back(profile_json(p));
    return {{"images", images}, {"spectra", spectra}};
}

Request parse_request(const std::string& body, Kind kind, const LoadedModel& model, int max_count) {
    const json j = parse_json_text(body.empty() ? "{}" : body, "body");
    JsonFields f(j, "");
    Request r;
    r.steps = model.schedule.steps;
    r.freeu = model.config.freeu;
    r.r_cut = model.config.sampling.r_cut;
    f.read("seed", r.seed);
    f.read("steps", r.steps);
    if (kind != Kind::kTrajectory) f.read("count", r.count);
    if (kind == Kind::kTrajectory) f.read("r_cut", r.r_cut);
    if (const json* fr = f.get("freeu")) r.freeu = freeu_config_from_json(*fr, "freeu");
    f.finish();
    if (r.steps < 1 || r.steps > model.schedule.steps) {
        throw ConfigError("steps", "must lie in [1, " + std::to_string(model.schedule.steps) + "]");
    }
    if (r.count < 1 || r.count > max_count) throw ConfigError("count", "must lie in [1, " + std::to_string(max_count) + "]");
    if (!(r.r_cut >= 0.0)) throw ConfigError("r_cut", "must be >= 0");
    for (std::size_t i = 0; i < r.freeu.stages.size(); ++i) {
        if (r.freeu.stages[i].stage > model.config.model.levels()) {
            throw ConfigError("freeu.stages[" + std::to_string(i) + "].stage",
                              "model has " + std::to_string(model.config.model.levels()) + " decoder stages");
        }
    }
    return r;
}

SampleJob to_job(const Request& r, const LoadedModel& model, bool compare, bool record) {
    SampleJob job;
    job.seed = r.seed;
    job.count = r.count;
    job.steps = r.steps;
    job.freeu = r.freeu;
    job.compare = compare;
    job.record_trajectory = record;
    job.r_cut = r.r_cut;
    job.bands = model.config.sampling.bands;
    return job;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

struct SamplingService::Http {
    httplib::Server server;
};

SamplingService::SamplingService(LoadedModel model, ServiceOptions options)
    : model_(std::move(model)),
      options_(options),
      gate_(options.workers > 0 ? options.workers : std::max(1, static_cast<int>(std::thread::hardware_concurrency()) - 1),
            options.queue_depth),
      http_(std::make_unique<Http>()) {}

SamplingService::~SamplingService() { stop(); }

HttpReply SamplingService::health() const {
    const UNetConfig& m = model_.config.model;
    return json_reply(200, {{"status", "ok"},
                            {"model",
                             {{"image_size", m.image_size},
                              {"in_channels", m.in_channels},
                              {"levels", m.levels()},
                              {"base_channels", m.base_channels},
                              {"schedule_steps", model_.schedule.steps},
                              {"concat_order", kConcatOrder},
                              {"train_step", model_.train_step}}},
                            {"workers", gate_.workers()},
                            {"queue_depth", gate_.queue_depth()}});
}

HttpReply SamplingService::config() const {
    json stages = json::array();
    for (const StageSite& s : model_.model->stage_sites()) {
        stages.push_back({{"stage", s.stage},
                          {"backbone_channels", s.backbone_channels},
                          {"skip_channels", s.skip_channels},
                          {"spatial", s.spatial},
                          {"max_radius", spectral::max_centered_radius(s.spatial, s.spatial)}});
    }
    return json_reply(200, {{"freeu", to_json(model_.config.freeu)},
                            {"stages", stages},
                            {"schedule_steps", model_.schedule.steps},
                            {"max_count", options_.max_count},
                            {"bands", model_.config.sampling.bands}});
}

template <typename Fn>
HttpReply SamplingService::guarded(Fn&& fn) {
    try {
        if (!gate_.acquire()) return json_reply(429, {{"error", "sampling queue is full"}});
        struct Release {
            JobGate& g;
            ~Release() { g.release(); }
        } release{gate_};
        return fn();
    } catch (const ConfigError& e) {
        return field_error(e.field() == "body" ? 400 : 422, e.field(), e.what());
    } catch (const SamplingError& e) {
        return json_reply(500, {{"error", e.what()}, {"step", e.step()}});
    } catch (const NumericError& e) {
        return json_reply(500, {{"error", e.what()}});
    } catch (const std::exception& e) {
        return json_reply(500, {{"error", e.what()}});
    }
}

HttpReply SamplingService::sample(const std::string& body) {
    Request r;
    try {
        r = parse_request(body, Kind::kSample, model_, options_.max_count);
    } catch (const ConfigError& e) {
        return field_error(e.field() == "body" ? 400 : 422, e.field(), e.what());
    }
    return guarded([&] {
        const auto start = std::chrono::steady_clock::now();
        const JobResult res = run_sample_job(*model_.model, model_.schedule, to_job(r, model_, false, false));
        json out = branch_json(res.output);
        out["seeds"] = job_seeds(to_job(r, model_, false, false));
        out["timing_ms"] = elapsed_ms(start);
        return json_reply(200, out);
    });
}

HttpReply SamplingService::compare(const std::string& body) {
    Request r;
    try {
        r = parse_request(body, Kind::kCompare, model_, options_.max_count);
    } catch (const ConfigError& e) {
        return field_error(e.field() == "body" ? 400 : 422, e.field(), e.what());
    }
    return guarded([&] {
        const auto start = std::chrono::steady_clock::now();
        const JobResult res = run_sample_job(*model_.model, model_.schedule, to_job(r, model_, true, false));
        const json baseline = branch_json(*res.baseline), freeu = branch_json(res.output);
        const bool identical = baseline.at("images") == freeu.at("images");
        return json_reply(200, {{"seed", r.seed},
                                {"baseline", baseline},
                                {"freeu", freeu},
                                {"identical", identical},
                                {"timing_ms", elapsed_ms(start)}});
    });
}

HttpReply SamplingService::trajectory(const std::string& body) {
    Request r;
    try {
        r = parse_request(body, Kind::kTrajectory, model_, options_.max_count);
    } catch (const ConfigError& e) {
        return field_error(e.field() == "body" ? 400 : 422, e.field(), e.what());
    }
    return guarded([&] {
        const auto start = std::chrono::steady_clock::now();
        const JobResult res = run_sample_job(*model_.model, model_.schedule, to_job(r, model_, false, true));
        json rows = json::array(), frames = json::array();
        for (const auto& row : res.output.band_stats) {
            rows.push_back({{"t", row.t},
                            {"low_mean", row.low_mean},
                            {"high_mean", row.high_mean},
                            {"low_delta", row.low_delta},
                            {"high_delta", row.high_delta}});
        }
        for (const auto& step : res.output.trajectory->steps) {
            frames.push_back({{"t", step.t}, {"image", pgm_base64(downsample_plane(spectral::plane(step.x_t, 0, 0), 2))}});
        }
        return json_reply(200, {{"seed", r.seed},
                                {"r_cut", r.r_cut},
                                {"rows", rows},
                                {"frames", frames},
                                {"final", pgm_base64(spectral::plane(res.output.images, 0, 0))},
                                {"timing_ms", elapsed_ms(start)}});
    });
}

int SamplingService::bind(const std::string& host, int port) {
    httplib::Server& srv = http_->server;
    const auto threads = static_cast<std::size_t>(gate_.workers() + gate_.queue_depth() + 2);
    srv.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    const auto send = [](httplib::Response& res, const HttpReply& reply) {
        res.status = reply.status;
        if (reply.status == 429) res.set_header("Retry-After", "1");
        res.set_content(reply.body, "application/json");
    };
    srv.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    srv.Get("/api/config", [this, send](const httplib::Request&, httplib::Response& res) { send(res, config()); });
    srv.Post("/api/sample", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, sample(req.body)); });
    srv.Post("/api/compare", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, compare(req.body)); });
    srv.Post("/api/trajectory",
             [this, send](const httplib::Request& req, httplib::Response& res) { send(res, trajectory(req.body)); });
    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void SamplingService::listen() { http_->server.listen_after_bind(); }

void SamplingService::stop() {
    if (http_) http_->server.stop();
}

}  // namespace freeu
