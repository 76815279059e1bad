#pragma once

// HTTP service under /api: datasets, simulation and training jobs, models,
// pipelines with parameter edits, renders and classification tables.

#include <filesystem>
#include <memory>
#include <string>

#include "fieldlens/jobs.hpp"

namespace fieldlens {

/// --data-dir when given, else FIELDLENS_DATA_DIR, else ./fieldlens-data.
std::filesystem::path resolve_data_dir(const std::string& flag);

struct ServiceOptions {
    std::filesystem::path data_dir;
    std::size_t jobs = 0;  // worker threads; 0 means one per processor
};

class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call bind first.
    void run();
    /// Fails pending jobs, asks running ones to stop and closes the listener.
    void stop();

    JobQueue& jobs();
    const std::filesystem::path& data_dir() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace fieldlens
