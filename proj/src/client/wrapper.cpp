#include "voluntier/client/client.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <spawn.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "voluntier/common/digest.hpp"

extern char** environ;

namespace voluntier::client {

namespace fs = std::filesystem;

namespace {

bool is_archive(const std::string& name)
{
    auto ends = [&](std::string_view s) { return name.size() > s.size() && name.ends_with(s); };
    return ends(".tar") || ends(".tgz") || ends(".tar.gz");
}

void write_bytes(const fs::path& p, const std::string& bytes)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// tar -xf archive -C dir
bool unpack(const fs::path& archive, const fs::path& dir)
{
    const std::string a = archive.string(), d = dir.string();
    const char* argv[] = {"tar", "-xf", a.c_str(), "-C", d.c_str(), nullptr};
    pid_t pid = 0;
    if (::posix_spawnp(&pid, "tar", nullptr, nullptr, const_cast<char**>(argv), environ) != 0) return false;
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

double rusage_seconds(const rusage& ru)
{
    return static_cast<double>(ru.ru_utime.tv_sec + ru.ru_stime.tv_sec) +
           static_cast<double>(ru.ru_utime.tv_usec + ru.ru_stime.tv_usec) / 1e6;
}

} // namespace

ExecOutcome execute_wrapped(const proto::JobDescriptor& job, const std::map<std::string, std::string>& files,
                            const std::vector<std::string>& wu_args, const fs::path& slot_dir,
                            ProgressCell& progress, const WrapperOptions& opts, std::vector<std::string>* trace)
{
    auto note = [&](std::string s) {
        if (trace) trace->push_back(std::move(s));
    };
    ExecOutcome out;
    auto fail = [&](const std::string& step, const std::string& why) {
        note(step);
        out.ok = false;
        out.error = why;
        return out;
    };

    try {
        job.validate();
    } catch (const std::exception& e) {
        return fail("invalid-job", e.what());
    }
    fs::create_directories(slot_dir);

    // 1. stage payloads; archives are unpacked once per slot
    for (const auto& [name, bytes] : files) {
        const fs::path target = slot_dir / name;
        if (!fs::exists(target)) write_bytes(target, bytes);
        if (name == job.program) {
            fs::permissions(target, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec,
                            fs::perm_options::replace);
        }
        const fs::path marker = slot_dir / (".unpacked-" + name);
        if (is_archive(name) && !fs::exists(marker)) {
            note("unpack:" + name);
            if (!unpack(target, slot_dir)) return fail("unpack-failed:" + name, "cannot unpack " + name);
            write_bytes(marker, "");
        }
    }
    if (!files.contains(job.program)) return fail("missing-program", "program payload missing");

    // 2. fresh launch or relaunch from the program's own checkpoint
    std::vector<std::string> args{"./" + job.program};
    args.insert(args.end(), job.args.begin(), job.args.end());
    args.insert(args.end(), wu_args.begin(), wu_args.end());
    if (!job.checkpoint_file.empty() && fs::exists(slot_dir / job.checkpoint_file)) {
        args.insert(args.end(), job.resume_args.begin(), job.resume_args.end());
        args.push_back(job.checkpoint_file);
        note("launch:resume:" + job.checkpoint_file);
    } else {
        note("launch:fresh");
    }
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    const std::string dir = slot_dir.string();
    const std::string out_log = (slot_dir / "stdout.txt").string();
    const std::string err_log = (slot_dir / "stderr.txt").string();
    const pid_t parent = ::getpid();

    const pid_t pid = ::fork();
    if (pid < 0) return fail("launch-failed", std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        ::prctl(PR_SET_PDEATHSIG, SIGKILL);
        if (::getppid() != parent) ::_exit(127);
        if (::chdir(dir.c_str()) != 0) ::_exit(127);
        const int o = ::open(out_log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        const int e = ::open(err_log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (o >= 0) ::dup2(o, 1);
        if (e >= 0) ::dup2(e, 2);
        ::execv(argv[0], argv.data());
        ::_exit(127);
    }

    // 3. wait for the solution file
    note("wait-solution");
    using SteadyClock = std::chrono::steady_clock;
    const auto deadline = SteadyClock::now() + std::chrono::milliseconds(static_cast<long long>(opts.wall_cap * 1000));
    const fs::path solution = slot_dir / job.solution_file;
    bool found = false, exited = false;
    int status = 0;
    rusage ru{};
    for (;;) {
        if (!found && fs::exists(solution)) {
            found = true;
            note("solution-found");
        }
        if (!exited) {
            const pid_t r = ::wait4(pid, &status, WNOHANG, &ru);
            exited = r == pid;
        }
        if (exited) {
            if (!found && fs::exists(solution)) {
                found = true;
                note("solution-found");
            }
            break;
        }
        if (SteadyClock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            while (::wait4(pid, &status, 0, &ru) < 0 && errno == EINTR) {
            }
            return fail("killed:wall-cap", "wall-time cap exceeded");
        }
        if (job.expected_output_bytes > 0 && !job.outputs.empty()) {
            std::error_code ec;
            const auto size = fs::file_size(slot_dir / job.outputs.front(), ec);
            if (!ec) {
                progress.store(std::min(0.99, static_cast<double>(size) / static_cast<double>(job.expected_output_bytes)));
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(opts.poll_interval * 1000)));
    }
    out.cpu_time = rusage_seconds(ru);
    out.flops_estimate = out.cpu_time * opts.benchmark_flops;
    if (!found) {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        return fail("exit-without-solution:" + std::to_string(code),
                    "program exited with status " + std::to_string(code) + " without creating " + job.solution_file);
    }

    // 4. collect outputs
    std::map<std::string, std::string> collected;
    for (const auto& name : job.outputs) {
        if (!fs::exists(slot_dir / name)) return fail("missing-output:" + name, "declared output " + name + " missing");
        note("copy-output:" + name);
        collected[name] = read_bytes(slot_dir / name);
    }
    if (collected.size() == 1) {
        out.output = collected.begin()->second;
    } else {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [name, bytes] : collected) j[name] = base64_encode(bytes);
        out.output = j.dump();
    }
    progress.store(1.0);
    note("complete");
    out.ok = true;
    return out;
}

} // namespace voluntier::client
