#pragma once

// Asynchronous job queue with a fixed worker pool, progress reporting and
// cooperative cancellation at shutdown.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace fieldlens {

enum class JobStatus { queued, running, done, failed };
const char* job_status_name(JobStatus s);

struct JobRecord {
    std::string id;
    std::string kind;
    JobStatus status = JobStatus::queued;
    double progress = 0.0;
    nlohmann::json result;
    std::string error;
};

nlohmann::json to_json(const JobRecord& job);

class JobQueue;

/// Handed to a running job. `report` throws JobCancelled once shutdown has begun.
class JobContext {
public:
    JobContext(JobQueue& queue, std::string id) : queue_(queue), id_(std::move(id)) {}
    void report(double progress);
    bool cancelled() const;

private:
    JobQueue& queue_;
    std::string id_;
};

struct JobCancelled : std::exception {
    const char* what() const noexcept override { return "service shut down before the job finished"; }
};

class JobQueue {
public:
    using Work = std::function<nlohmann::json(JobContext&)>;

    explicit JobQueue(std::size_t workers = 0);  // 0: one per processor
    ~JobQueue();
    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    std::string submit(const std::string& kind, Work work);
    std::optional<JobRecord> get(const std::string& id) const;
    std::vector<JobRecord> list() const;
    /// Blocks until the job is done or failed; false on timeout or unknown id.
    bool wait(const std::string& id, double timeout_seconds) const;
    /// Queued jobs fail immediately; running jobs fail at their next progress report.
    void shutdown();
    std::size_t workers() const noexcept { return threads_.size(); }

private:
    friend class JobContext;
    void worker();
    void set_progress(const std::string& id, double p);

    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::condition_variable work_ready_;
    std::deque<std::pair<std::string, Work>> pending_;
    std::map<std::string, JobRecord> jobs_;
    std::vector<std::thread> threads_;
    std::size_t next_id_ = 1;
    bool stopping_ = false;
};

}  // namespace fieldlens
