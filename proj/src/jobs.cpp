#include "fieldlens/jobs.hpp"

#include <algorithm>
#include <chrono>

namespace fieldlens {

const char* job_status_name(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "?";
}

nlohmann::json to_json(const JobRecord& job) {
    nlohmann::json j{{"id", job.id}, {"kind", job.kind}, {"status", job_status_name(job.status)},
                     {"progress", job.progress}};
    if (job.status == JobStatus::done) j["result"] = job.result;
    if (job.status == JobStatus::failed) j["error"] = job.error;
    return j;
}

void JobContext::report(double progress) {
    if (cancelled()) throw JobCancelled();
    queue_.set_progress(id_, progress);
}

bool JobContext::cancelled() const {
    std::lock_guard lock(queue_.mutex_);
    return queue_.stopping_;
}

JobQueue::JobQueue(std::size_t workers) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker(); });
}

JobQueue::~JobQueue() {
    shutdown();
    for (auto& t : threads_) t.join();
}

std::string JobQueue::submit(const std::string& kind, Work work) {
    std::lock_guard lock(mutex_);
    std::string id = "job-" + std::to_string(next_id_++);
    JobRecord rec;
    rec.id = id;
    rec.kind = kind;
    if (stopping_) {
        rec.status = JobStatus::failed;
        rec.error = JobCancelled().what();
    } else {
        pending_.emplace_back(id, std::move(work));
        work_ready_.notify_one();
    }
    jobs_.emplace(id, std::move(rec));
    return id;
}

std::optional<JobRecord> JobQueue::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

std::vector<JobRecord> JobQueue::list() const {
    std::lock_guard lock(mutex_);
    std::vector<JobRecord> out;
    for (const auto& [id, rec] : jobs_) out.push_back(rec);
    return out;
}

bool JobQueue::wait(const std::string& id, double timeout_seconds) const {
    std::unique_lock lock(mutex_);
    const auto finished = [&] {
        auto it = jobs_.find(id);
        return it != jobs_.end() && (it->second.status == JobStatus::done || it->second.status == JobStatus::failed);
    };
    if (!jobs_.count(id)) return false;
    return changed_.wait_for(lock, std::chrono::duration<double>(timeout_seconds), finished);
}

void JobQueue::shutdown() {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    for (auto& [id, work] : pending_) {
        auto& rec = jobs_.at(id);
        rec.status = JobStatus::failed;
        rec.error = JobCancelled().what();
    }
    pending_.clear();
    work_ready_.notify_all();
    changed_.notify_all();
}

void JobQueue::set_progress(const std::string& id, double p) {
    std::lock_guard lock(mutex_);
    auto& rec = jobs_.at(id);
    rec.progress = std::clamp(p, rec.progress, 1.0);
    changed_.notify_all();
}

void JobQueue::worker() {
    for (;;) {
        std::pair<std::string, Work> job;
        {
            std::unique_lock lock(mutex_);
            work_ready_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
            if (pending_.empty()) return;
            job = std::move(pending_.front());
            pending_.pop_front();
            jobs_.at(job.first).status = JobStatus::running;
            changed_.notify_all();
        }
        JobContext ctx(*this, job.first);
        nlohmann::json result;
        std::string error;
        bool ok = false;
        try {
            result = job.second(ctx);
            ok = true;
        } catch (const std::exception& e) {
            error = e.what();
        }
        std::lock_guard lock(mutex_);
        auto& rec = jobs_.at(job.first);
        rec.status = ok ? JobStatus::done : JobStatus::failed;
        if (ok) {
            rec.progress = 1.0;
            rec.result = std::move(result);
        } else {
            rec.error = std::move(error);
        }
        changed_.notify_all();
    }
}

}  // namespace fieldlens
