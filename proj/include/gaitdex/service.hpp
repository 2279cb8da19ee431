#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace gaitdex {

struct ServiceConfig {
    std::string bind_addr = "127.0.0.1";
    int port = 8080;
    /// Empty: keep everything in memory only.
    std::filesystem::path data_dir;
    std::size_t max_upload_mib = 50;
    std::size_t workers = 2;
    std::size_t http_threads = 8;
};

/// Reads `key = value` lines (bind_addr, port, data_dir, max_upload_mib,
/// workers, http_threads; '#' starts a comment), then applies the BIND_ADDR
/// ("host" or "host:port"), DATA_DIR and MAX_UPLOAD_MIB environment overrides.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file);

/// The static endpoint description served at /openapi.json.
const std::string& openapi_document();

/// HTTP front end over an in-memory session store with optional on-disk persistence.
class GaitService {
public:
    explicit GaitService(ServiceConfig config);
    ~GaitService();
    GaitService(const GaitService&) = delete;
    GaitService& operator=(const GaitService&) = delete;

    const ServiceConfig& config() const;
    httplib::Server& server();

    /// Binds to config().bind_addr. Port 0 picks a free port; returns the bound port.
    int bind();
    /// Blocks serving requests until stop().
    bool listen_after_bind();
    void stop();

    /// Blocks until no fit job is queued or running.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace gaitdex
