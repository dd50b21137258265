#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace support {

namespace fs = std::filesystem;

// Every subset of an L-block model gets a positive score; more blocks score
// higher on average, with seeded interactions so ties are rare but possible.
inline std::map<std::string, double> synthetic_table(int L, std::uint64_t seed, bool quantize = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    std::vector<double> w(static_cast<std::size_t>(L));
    for (double& x : w) x = weight(rng);
    std::map<std::string, double> table;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << L); ++mask) {
        std::string key;
        double s = 0.1;
        for (int b = 0; b < L; ++b)
            if (mask & (std::uint64_t{1} << b)) {
                if (!key.empty()) key += ',';
                key += std::to_string(b);
                s += w[static_cast<std::size_t>(b)];
            }
        s += 0.3 * weight(rng);
        if (quantize) s = static_cast<double>(static_cast<int>(s * 4)) / 4;  // coarse steps force ties
        table[key] = s;
    }
    return table;
}

inline void write_table(const fs::path& path, int L, const std::string& metric,
                        const std::map<std::string, double>& table) {
    nlohmann::json j;
    j["total_blocks"] = L;
    j["metric"] = metric;
    j["scores"] = table;
    std::ofstream(path) << j.dump() << '\n';
}

inline fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gmskip_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr together
};

inline Run run(const std::string& command) {
    Run r;
    FILE* p = ::popen((command + " 2>&1").c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace support
