#include "voluntier/server/project.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voluntier/errors.hpp"

namespace voluntier::server {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& p, std::string_view bytes)
{
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
}

Project Project::init(const fs::path& dir, const proto::Endpoint& listen)
{
    Project p(dir);
    if (fs::exists(p.config_path())) {
        throw ConfigError("a project already exists in " + dir.string());
    }
    fs::create_directories(dir / "keys");
    const auto keys = proto::generate_keypair();
    write_file_atomic(dir / "keys" / "project.key", proto::encode_key(keys.secret_key) + "\n");
    fs::permissions(dir / "keys" / "project.key", fs::perms::owner_read | fs::perms::owner_write);
    write_file_atomic(dir / "keys" / "project.pub", proto::encode_key(keys.public_key) + "\n");

    ProjectConfig cfg;
    cfg.listen = listen;
    p.save_config(cfg);

    const json client{{"server", listen.to_string()},
                      {"public_key", proto::encode_key(keys.public_key)},
                      {"data_dir", "client-data"},
                      {"heartbeat_interval", cfg.server.heartbeat_interval}};
    write_file_atomic(p.client_config_path(), client.dump(2) + "\n");
    std::ofstream(p.log_path(), std::ios::binary | std::ios::app);
    return p;
}

ProjectConfig Project::config() const
{
    const auto text = read_file(config_path());
    try {
        const auto j = json::parse(text);
        ProjectConfig cfg;
        cfg.listen = proto::Endpoint::parse(j.value("listen", cfg.listen.to_string()));
        cfg.server.heartbeat_interval = j.value("heartbeat_interval", cfg.server.heartbeat_interval);
        cfg.server.heartbeat_timeout = j.value("heartbeat_timeout", cfg.server.heartbeat_timeout);
        cfg.server.dead_threshold = j.value("dead_threshold", cfg.server.dead_threshold);
        cfg.transition_interval = j.value("transition_interval", cfg.transition_interval);
        cfg.sync_log = j.value("sync_log", cfg.sync_log);
        if (!(cfg.server.heartbeat_interval > 0) || !(cfg.transition_interval > 0) ||
            !(cfg.server.dead_threshold > 0)) {
            throw ConfigError("project timings must be positive");
        }
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError("bad " + config_path().string() + ": " + e.what());
    }
}

void Project::save_config(const ProjectConfig& cfg) const
{
    const json j{{"listen", cfg.listen.to_string()},
                 {"heartbeat_interval", cfg.server.heartbeat_interval},
                 {"heartbeat_timeout", cfg.server.heartbeat_timeout},
                 {"dead_threshold", cfg.server.dead_threshold},
                 {"transition_interval", cfg.transition_interval},
                 {"sync_log", cfg.sync_log}};
    write_file_atomic(config_path(), j.dump(2) + "\n");
}

namespace {

std::string first_line(const std::string& s)
{
    const auto end = s.find_first_of("\r\n");
    return s.substr(0, end);
}

} // namespace

proto::KeyPair Project::keys() const
{
    proto::KeyPair k;
    k.secret_key = proto::decode_key(first_line(read_file(dir_ / "keys" / "project.key")), 64);
    k.public_key = proto::decode_key(first_line(read_file(dir_ / "keys" / "project.pub")), 32);
    return k;
}

proto::Endpoint Project::endpoint() const
{
    auto e = config().listen;
    if (fs::exists(port_path())) {
        e.port = static_cast<std::uint16_t>(std::stoul(first_line(read_file(port_path()))));
    }
    return e;
}

} // namespace voluntier::server
