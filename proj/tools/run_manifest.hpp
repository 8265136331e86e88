#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdpde/data.hpp"
#include "mdpde/errors.hpp"
#include "mdpde/solver.hpp"

#ifndef MDPDE_VERSION
#define MDPDE_VERSION "0.0.0"
#endif

namespace mdpde::cli {

using json = nlohmann::json;

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(detail::read_file(path)); }

/// Checks a bundled dataset against the checksum recorded in the manifest.
inline std::string verified_checksum(const ManifestEntry& e, const std::string& data_dir) {
    const auto sum = sha256_file(data_dir + "/" + e.path);
    if (sum != e.sha256) throw InputError("checksum mismatch for " + e.path + ": manifest " + e.sha256 + ", file " + sum);
    return sum;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline const char* omega_name(OmegaConvention c) {
    return c == OmegaConvention::PublishedLogistic ? "published-logistic" : "standard";
}

struct RunManifest {
    std::vector<std::string> command_line;
    json datasets = json::object();  // name -> sha256
    SolverOptions solver{};
    std::optional<std::uint64_t> seed;
    std::string version = MDPDE_VERSION;
    std::string timestamp = utc_timestamp();

    json to_json() const {
        json j;
        j["command_line"] = command_line;
        j["datasets"] = datasets;
        j["solver"] = {{"max_iter", solver.max_iter},     {"grad_tol", solver.grad_tol},
                       {"step_tol", solver.step_tol},     {"cold_start", solver.cold_start},
                       {"omega", omega_name(solver.omega)}, {"max_abs_eta", solver.max_abs_eta}};
        j["seed"] = seed ? json(*seed) : json(nullptr);
        j["tool_version"] = version;
        j["timestamp"] = timestamp;
        return j;
    }
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("write failed for " + path);
}

/// Non-finite doubles become JSON null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace mdpde::cli
