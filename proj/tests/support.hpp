#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace test {

inline std::string fixture(const std::string& name) { return std::string(KPIR_FIXTURES) + "/" + name; }

inline std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline const nlohmann::json& oracle()
{
    static const nlohmann::json j = nlohmann::json::parse(slurp(fixture("oracle_expected.json")));
    return j;
}

inline const nlohmann::json& mprank_oracle()
{
    static const nlohmann::json j = nlohmann::json::parse(slurp(fixture("oracle_mprank.json")));
    return j;
}

/// Fresh directory under the system temp dir, removed on destruction.
class temp_dir {
  public:
    temp_dir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("kpir-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;

    std::string operator/(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

    std::string write(const std::string& name, const std::string& content) const
    {
        auto p = *this / name;
        std::ofstream(p, std::ios::binary) << content;
        return p;
    }

  private:
    std::filesystem::path path_;
};

struct command_result {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

inline command_result run_command(const std::string& cmd)
{
    command_result r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline command_result run_cli(const std::string& args) { return run_command(std::string("'") + KPIR_CLI + "' " + args); }

}  // namespace test
