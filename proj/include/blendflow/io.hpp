#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "blendflow/errors.hpp"
#include "blendflow/observer.hpp"
#include "blendflow/solver.hpp"
#include "json.hpp"

#ifndef BLENDFLOW_VERSION
#define BLENDFLOW_VERSION "0.1.0"
#endif

namespace blendflow {

// 17 significant digits: enough to round-trip an IEEE double exactly.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const char* diagnostics_csv_header() {
    return "t,E_sigma,E_zero,l2_delta_plus,l2_delta_minus,l2_delta_zero,"
           "eta_sigma,eta_zero,min_mu_margin";
}

inline void write_diagnostics_row(std::ostream& os, const ErrorSample& s) {
    os << format_g17(s.t) << ',' << format_g17(s.e_sigma) << ',' << format_g17(s.e_zero)
       << ',' << format_g17(s.l2_delta_plus) << ',' << format_g17(s.l2_delta_minus) << ','
       << format_g17(s.l2_delta_zero) << ',' << format_g17(s.eta_sigma) << ','
       << format_g17(s.eta_zero) << ',' << format_g17(s.min_mu_margin) << '\n';
    os.flush();
}

// Full twin state dump, one row per grid point.
inline void write_state_snapshot(std::ostream& os, const TwinState& tw, const Network& net) {
    os << "pipe,x,S_plus,S_minus,S_zero,R_plus,R_minus,R_zero\n";
    for (const auto& [id, fp] : tw.plant.fields) {
        const PipeField& fo = tw.observer.fields.at(id);
        const double dx = net.pipe(id).dx();
        for (std::size_t i = 0; i < fp.r_plus.size(); ++i) {
            os << id << ',' << format_g17(i * dx) << ',' << format_g17(fp.r_plus[i]) << ','
               << format_g17(fp.r_minus[i]) << ',' << format_g17(fp.r_zero[i]) << ','
               << format_g17(fo.r_plus[i]) << ',' << format_g17(fo.r_minus[i]) << ','
               << format_g17(fo.r_zero[i]) << '\n';
        }
    }
}

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    std::string version = BLENDFLOW_VERSION;
    nlohmann::ordered_json scenario;  // resolved snapshot, network embedded
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;
    std::string status = "ok";
    nlohmann::ordered_json diagnostics;
};

// Written via a temporary and renamed into place, so readers never see a
// half-written manifest.
inline void write_manifest_atomic(const std::filesystem::path& path, const RunManifest& m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    j["status"] = m.status;
    j["outputs"] = m.outputs;
    j["diagnostics"] = m.diagnostics;
    j["scenario"] = m.scenario;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw SimulationError("cannot write manifest '" + tmp.string() + "'");
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace blendflow
