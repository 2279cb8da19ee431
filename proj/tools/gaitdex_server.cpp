// gaitdex_server: HTTP API over the gaitdex library.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gaitdex/service.hpp"

namespace {
gaitdex::GaitService* g_service = nullptr;

void handle_signal(int) {
    if (g_service) g_service->stop();
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gaitdex HTTP service"};
    std::string config_file, bind, data_dir;
    int port = -1;
    app.add_option("--config", config_file, "key=value configuration file");
    app.add_option("--bind", bind, "Bind address, host or host:port (overrides BIND_ADDR)");
    app.add_option("--port", port, "Port, 0 for any free port");
    app.add_option("--data-dir", data_dir, "Persistence directory (overrides DATA_DIR)");
    CLI11_PARSE(app, argc, argv);

    try {
        auto config = gaitdex::load_service_config(config_file.empty() ? std::nullopt
                                                                        : std::optional<std::filesystem::path>(config_file));
        if (!bind.empty()) {
            const auto colon = bind.rfind(':');
            config.bind_addr = bind.substr(0, colon);
            if (colon != std::string::npos) config.port = std::stoi(bind.substr(colon + 1));
        }
        if (port >= 0) config.port = port;
        if (!data_dir.empty()) config.data_dir = data_dir;

        gaitdex::GaitService service(config);
        g_service = &service;
        std::signal(SIGINT, handle_signal);
        std::signal(SIGTERM, handle_signal);
        const int bound = service.bind();
        std::cerr << "gaitdex_server listening on " << config.bind_addr << ':' << bound;
        if (!config.data_dir.empty()) std::cerr << " (data dir " << config.data_dir.string() << ')';
        std::cerr << std::endl;
        service.listen_after_bind();
        g_service = nullptr;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
