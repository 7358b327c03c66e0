// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>

#include "freeu/training.hpp"

namespace freeu {

/// Admission control for CPU-bound jobs: at most `workers` run at once and
/// at most `queue_depth` more may wait; anything beyond is refused.
class JobGate {
public:
    JobGate(int workers, int queue_depth);
    /// Blocks until a worker slot frees up; returns false at once when the queue is full.
    bool acquire();
    void release();
    int workers() const noexcept { return workers_; }
    int queue_depth() const noexcept { return depth_; }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int workers_;
    int depth_;
    int active_ = 0;
    int waiting_ = 0;
};

struct ServiceOptions {
    /// 0 selects max(1, hardware threads - 1).
    int workers = 0;
    int queue_depth = 8;
    int max_count = 16;
};

struct HttpReply {
    int status = 200;
    std::string body;  // JSON
};

/// Request handlers over one immutable model, usable with or without the HTTP layer.
class SamplingService {
public:
    explicit SamplingService(LoadedModel model, ServiceOptions options = {});
    ~SamplingService();
    SamplingService(const SamplingService&) = delete;
    SamplingService& operator=(const SamplingService&) = delete;

    HttpReply health() const;
    HttpReply config() const;
    HttpReply sample(const std::string& body);
    HttpReply compare(const std::string& body);
    HttpReply trajectory(const std::string& body);

    /// Binds the listener; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();

    const JobGate& gate() const noexcept { return gate_; }

private:
    template <typename Fn>
    HttpReply guarded(Fn&& fn);

    LoadedModel model_;
    ServiceOptions options_;
    JobGate gate_;
    struct Http;
    std::unique_ptr<Http> http_;
};

}  // namespace freeu
