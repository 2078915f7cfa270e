#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "blendflow/blendflow.hpp"

namespace testhelpers {

using namespace blendflow;

// Star: feed runs inflow -> hub, branches run hub -> outflow_{b,c}.
inline Network star_network(int cells, double mu = 0.4, double u_in = 0.1167,
                            double u_out = -0.0583) {
    std::ostringstream ss;
    ss << R"({"gamma": 0.0, "pipes": [)"
       << R"({"id": "feed", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": )"
       << cells << "},"
       << R"({"id": "branch_b", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": )"
       << cells << "},"
       << R"({"id": "branch_c", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": )"
       << cells << "}],"
       << R"("nodes": [)"
       << R"({"id": "inflow", "incident": [{"pipe": "feed", "end": "left"}], "mu": )" << mu
       << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": )" << u_in
       << R"(}, "u_0": {"kind": "constant", "value": 0.05}}},)"
       << R"({"id": "hub", "incident": [{"pipe": "feed", "end": "right"},)"
       << R"({"pipe": "branch_b", "end": "left"}, {"pipe": "branch_c", "end": "left"}], "mu": )"
       << mu << "},"
       << R"({"id": "outflow_b", "incident": [{"pipe": "branch_b", "end": "right"}], "mu": )" << mu
       << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": )" << u_out
       << R"(}, "u_0": {"kind": "constant", "value": 0.05}}},)"
       << R"({"id": "outflow_c", "incident": [{"pipe": "branch_c", "end": "right"}], "mu": )" << mu
       << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": )" << u_out
       << R"(}, "u_0": {"kind": "constant", "value": 0.05}}}]})";
    return parse_network(ss.str());
}

inline Network single_pipe_network(int cells, double mu = 0.25, double u_in = 0.0833,
                                   double u_out = -0.0833, double theta = 0.08) {
    std::ostringstream ss;
    ss << R"({"gamma": 0.0, "pipes": [{"id": "main", "length": 1.0, "diameter": 0.5,)"
       << R"( "friction_theta": )" << theta << R"(, "cells": )" << cells << "}],"
       << R"("nodes": [)"
       << R"({"id": "in", "incident": [{"pipe": "main", "end": "left"}], "mu": )" << mu
       << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": )" << u_in
       << R"(}, "u_0": {"kind": "constant", "value": 0.05}}},)"
       << R"({"id": "out", "incident": [{"pipe": "main", "end": "right"}], "mu": )" << mu
       << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": )" << u_out
       << R"(}, "u_0": {"kind": "constant", "value": 0.05}}}]})";
    return parse_network(ss.str());
}

// Uniform Riemann data on every pipe.
inline SystemState uniform_state(const Network& net, double r_plus, double r_minus,
                                 double r_zero) {
    SystemState s;
    s.t = 0;
    for (const auto& [id, p] : net.pipes) {
        PipeField f = PipeField::zeros(p);
        for (int i = 0; i <= p.cells; ++i) {
            f.r_plus[i] = r_plus;
            f.r_minus[i] = r_minus;
            f.r_zero[i] = r_zero;
        }
        s.fields[id] = f;
    }
    return s;
}

inline SystemState evolve_plant(SystemState s, const Network& net, const PressureLaw& law,
                                double gamma, double horizon, double cfl) {
    while (s.t < horizon - 1e-12) {
        double dt = cfl_dt(s, net, law, gamma, cfl);
        dt = std::min(dt, horizon - s.t);
        s = advance_plant(s, net, law, gamma, dt);
    }
    return s;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("blendflow_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testhelpers
