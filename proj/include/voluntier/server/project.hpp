#pragma once

#include <filesystem>
#include <string>

#include "voluntier/proto/net.hpp"
#include "voluntier/proto/signing.hpp"
#include "voluntier/server/project_server.hpp"

namespace voluntier::server {

/// On-disk project layout:
///   project.json       listen address and server timings
///   keys/project.key   Ed25519 secret key (hex)
///   keys/project.pub   public key (hex), also copied into client.json
///   client.json        client config template
///   events.log         the server journal
///   server.port        port of the running server
struct ProjectConfig {
    proto::Endpoint listen{"127.0.0.1", 7710};
    ServerConfig server;
    double transition_interval = 5.0;
    bool sync_log = true;
};

class Project {
public:
    explicit Project(std::filesystem::path dir) : dir_(std::move(dir)) {}

    // Creates the directory, keys, configs and an empty log. Throws ConfigError
    // if a project already exists there.
    static Project init(const std::filesystem::path& dir, const proto::Endpoint& listen);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path config_path() const { return dir_ / "project.json"; }
    std::filesystem::path log_path() const { return dir_ / "events.log"; }
    std::filesystem::path port_path() const { return dir_ / "server.port"; }
    std::filesystem::path client_config_path() const { return dir_ / "client.json"; }

    ProjectConfig config() const;
    void save_config(const ProjectConfig& cfg) const;
    proto::KeyPair keys() const;
    // Where a running server listens: server.port if present, else the configured port.
    proto::Endpoint endpoint() const;

private:
    std::filesystem::path dir_;
};

std::string read_file(const std::filesystem::path& p);
// Writes to a temporary name and renames over p.
void write_file_atomic(const std::filesystem::path& p, std::string_view bytes);

} // namespace voluntier::server
