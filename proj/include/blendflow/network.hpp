#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "blendflow/errors.hpp"
#include "json.hpp"

namespace blendflow {

// Time signal for boundary data. All kinds are C1 in t.
class Signal {
public:
    enum class Kind { constant, ramp, sine };

    static Signal constant(double value) {
        Signal s;
        s.kind_ = Kind::constant;
        s.p_[0] = value;
        return s;
    }

    // Cubic smoothstep from `from` to `to` over [t_start, t_end].
    static Signal ramp(double from, double to, double t_start, double t_end) {
        if (!(t_end > t_start)) throw ConfigError("signal ramp: t_end must be > t_start");
        Signal s;
        s.kind_ = Kind::ramp;
        s.p_[0] = from;
        s.p_[1] = to;
        s.p_[2] = t_start;
        s.p_[3] = t_end;
        return s;
    }

    // offset + amplitude * sin(2*pi*frequency*t + phase)
    static Signal sine(double offset, double amplitude, double frequency, double phase) {
        Signal s;
        s.kind_ = Kind::sine;
        s.p_[0] = offset;
        s.p_[1] = amplitude;
        s.p_[2] = frequency;
        s.p_[3] = phase;
        return s;
    }

    double operator()(double t) const {
        switch (kind_) {
            case Kind::constant:
                return p_[0];
            case Kind::ramp: {
                double s = (t - p_[2]) / (p_[3] - p_[2]);
                s = std::clamp(s, 0.0, 1.0);
                const double smooth = s * s * (3.0 - 2.0 * s);
                return p_[0] + (p_[1] - p_[0]) * smooth;
            }
            case Kind::sine:
                return p_[0] + p_[1] * std::sin(2.0 * M_PI * p_[2] * t + p_[3]);
        }
        return 0;  // unreachable
    }

    Kind kind() const { return kind_; }
    double param(int i) const { return p_[i]; }

private:
    Kind kind_ = Kind::constant;
    double p_[4] = {0, 0, 0, 0};
};

enum class PipeEnd { left, right };  // left ~ x = 0, right ~ x = L

inline const char* to_string(PipeEnd e) { return e == PipeEnd::left ? "left" : "right"; }

struct Pipe {
    std::string id;
    double length = 0;          // m
    double diameter = 0;        // m
    double friction_theta = 0;  // 1/m, lambda_fric / diameter
    double nu = 0;              // 1/m, friction_theta / 8
    int cells = 0;              // grid intervals

    double dx() const { return length / cells; }
};

struct Incident {
    std::string pipe;
    PipeEnd end = PipeEnd::left;
};

struct BoundaryData {
    Signal u_sigma;  // drives the incoming acoustic invariant
    Signal u_zero;   // hydrogen fraction fed into the network
};

struct NodeSpec {
    std::string id;
    std::vector<Incident> incident;
    double mu = 0;  // measurement blending weight in [0, 1]
    std::optional<BoundaryData> boundary;

    int degree() const { return static_cast<int>(incident.size()); }
};

struct Network {
    std::map<std::string, Pipe> pipes;
    std::map<std::string, NodeSpec> nodes;
    double gamma = 0;  // kg/m^3, hydrogen slip parameter

    const Pipe& pipe(const std::string& id) const {
        auto it = pipes.find(id);
        if (it == pipes.end()) throw ConfigError("unknown pipe id '" + id + "'");
        return it->second;
    }

    const NodeSpec& node(const std::string& id) const {
        auto it = nodes.find(id);
        if (it == nodes.end()) throw ConfigError("unknown node id '" + id + "'");
        return it->second;
    }
};

// -1 if pipe e meets node v at x=0, +1 if at x=L, 0 if not incident.
inline int incidence(const std::string& v, const std::string& e, const Network& net) {
    const NodeSpec& node = net.node(v);
    net.pipe(e);  // id check
    for (const Incident& inc : node.incident) {
        if (inc.pipe == e) return inc.end == PipeEnd::left ? -1 : 1;
    }
    return 0;
}

struct ValidationIssue {
    std::string entity;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }

    std::string to_string() const {
        std::string out;
        for (const auto& i : issues) out += i.entity + ": " + i.message + "\n";
        return out;
    }
};

inline ValidationReport validate_network(const Network& net) {
    ValidationReport rep;
    auto add = [&rep](const std::string& entity, const std::string& msg) {
        rep.issues.push_back({entity, msg});
    };

    if (net.pipes.empty()) add("network", "no pipes");
    if (!(net.gamma >= 0)) add("network", "gamma must be >= 0");

    for (const auto& [id, p] : net.pipes) {
        if (!(p.length > 0)) add(id, "length must be > 0");
        if (!(p.diameter > 0)) add(id, "diameter must be > 0");
        if (!(p.friction_theta >= 0)) add(id, "friction_theta must be >= 0");
        if (p.nu != p.friction_theta / 8.0) add(id, "nu must equal friction_theta / 8");
        if (p.cells < 4) add(id, "cells must be >= 4");
    }

    // Each pipe end must be claimed by exactly one node.
    std::map<std::pair<std::string, PipeEnd>, int> claims;
    for (const auto& [nid, node] : net.nodes) {
        if (node.degree() < 1) add(nid, "degree must be >= 1");
        if (!(node.mu >= 0 && node.mu <= 1)) add(nid, "mu must lie in [0, 1]");
        if (node.boundary.has_value() != (node.degree() == 1)) {
            add(nid, node.boundary.has_value()
                         ? "boundary data only allowed at degree-1 nodes"
                         : "degree-1 node needs boundary data");
        }
        std::set<std::string> seen;
        for (const Incident& inc : node.incident) {
            if (net.pipes.find(inc.pipe) == net.pipes.end()) {
                add(nid, "references unknown pipe '" + inc.pipe + "'");
                continue;
            }
            if (!seen.insert(inc.pipe).second) {
                add(nid, "pipe '" + inc.pipe + "' incident twice (self-loops unsupported)");
            }
            claims[{inc.pipe, inc.end}] += 1;
        }
    }
    for (const auto& [id, p] : net.pipes) {
        for (PipeEnd end : {PipeEnd::left, PipeEnd::right}) {
            const int n = claims.count({id, end}) ? claims.at({id, end}) : 0;
            if (n == 0) add(id, std::string("unclaimed ") + to_string(end) + " end");
            if (n > 1) add(id, std::string("duplicate end claim at ") + to_string(end) + " end");
        }
    }

    // Connectivity over the node-pipe incidence graph.
    if (!net.nodes.empty() && !net.pipes.empty()) {
        std::map<std::string, std::vector<std::string>> pipe_nodes;
        for (const auto& [nid, node] : net.nodes) {
            for (const Incident& inc : node.incident) pipe_nodes[inc.pipe].push_back(nid);
        }
        std::set<std::string> visited;
        std::queue<std::string> frontier;
        frontier.push(net.nodes.begin()->first);
        visited.insert(net.nodes.begin()->first);
        while (!frontier.empty()) {
            const std::string v = frontier.front();
            frontier.pop();
            for (const Incident& inc : net.node(v).incident) {
                auto it = pipe_nodes.find(inc.pipe);
                if (it == pipe_nodes.end()) continue;
                for (const std::string& other : it->second) {
                    if (visited.insert(other).second) frontier.push(other);
                }
            }
        }
        if (visited.size() != net.nodes.size()) add("network", "not connected");
    }

    return rep;
}

namespace detail {

using json = nlohmann::json;

inline const json& require_key(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + ": missing key '" + key + "'");
    return j.at(key);
}

inline double require_number(const json& j, const std::string& key, const std::string& path) {
    const json& v = require_key(j, key, path);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::string require_string(const json& j, const std::string& key, const std::string& path) {
    const json& v = require_key(j, key, path);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline Signal parse_signal(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected a signal object");
    const std::string kind = require_string(j, "kind", path);
    if (kind == "constant") {
        return Signal::constant(require_number(j, "value", path));
    }
    if (kind == "ramp") {
        return Signal::ramp(require_number(j, "from", path), require_number(j, "to", path),
                            require_number(j, "t_start", path),
                            require_number(j, "t_end", path));
    }
    if (kind == "sine") {
        return Signal::sine(require_number(j, "offset", path),
                            require_number(j, "amplitude", path),
                            require_number(j, "frequency", path),
                            require_number(j, "phase", path));
    }
    throw ConfigError(path + ": unknown signal kind '" + kind + "'");
}

inline nlohmann::ordered_json signal_to_json(const Signal& s) {
    nlohmann::ordered_json j;
    switch (s.kind()) {
        case Signal::Kind::constant:
            j["kind"] = "constant";
            j["value"] = s.param(0);
            break;
        case Signal::Kind::ramp:
            j["kind"] = "ramp";
            j["from"] = s.param(0);
            j["to"] = s.param(1);
            j["t_start"] = s.param(2);
            j["t_end"] = s.param(3);
            break;
        case Signal::Kind::sine:
            j["kind"] = "sine";
            j["offset"] = s.param(0);
            j["amplitude"] = s.param(1);
            j["frequency"] = s.param(2);
            j["phase"] = s.param(3);
            break;
    }
    return j;
}

}  // namespace detail

inline Network parse_network_json(const nlohmann::json& j) {
    using detail::require_key;
    using detail::require_number;
    using detail::require_string;

    Network net;
    net.gamma = require_number(j, "gamma", "network");

    const auto& pipes = require_key(j, "pipes", "network");
    if (!pipes.is_array()) throw ConfigError("network.pipes: expected an array");
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        const std::string path = "pipes[" + std::to_string(i) + "]";
        const auto& pj = pipes.at(i);
        Pipe p;
        p.id = require_string(pj, "id", path);
        p.length = require_number(pj, "length", path);
        p.diameter = require_number(pj, "diameter", path);
        p.friction_theta = require_number(pj, "friction_theta", path);
        p.nu = p.friction_theta / 8.0;
        const double cells = require_number(pj, "cells", path);
        p.cells = static_cast<int>(cells);
        if (p.cells != cells) throw ConfigError(path + ".cells: expected an integer");
        if (!net.pipes.emplace(p.id, p).second) {
            throw ConfigError(path + ": duplicate pipe id '" + p.id + "'");
        }
    }

    const auto& nodes = require_key(j, "nodes", "network");
    if (!nodes.is_array()) throw ConfigError("network.nodes: expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string path = "nodes[" + std::to_string(i) + "]";
        const auto& nj = nodes.at(i);
        NodeSpec node;
        node.id = require_string(nj, "id", path);
        node.mu = require_number(nj, "mu", path);
        const auto& inc = require_key(nj, "incident", path);
        if (!inc.is_array()) throw ConfigError(path + ".incident: expected an array");
        for (std::size_t k = 0; k < inc.size(); ++k) {
            const std::string ipath = path + ".incident[" + std::to_string(k) + "]";
            Incident item;
            item.pipe = require_string(inc.at(k), "pipe", ipath);
            const std::string end = require_string(inc.at(k), "end", ipath);
            if (end == "left") item.end = PipeEnd::left;
            else if (end == "right") item.end = PipeEnd::right;
            else throw ConfigError(ipath + ".end: expected \"left\" or \"right\"");
            node.incident.push_back(item);
        }
        if (nj.contains("boundary")) {
            const auto& bj = nj.at("boundary");
            BoundaryData bd;
            bd.u_sigma = detail::parse_signal(require_key(bj, "u_sigma", path + ".boundary"),
                                              path + ".boundary.u_sigma");
            bd.u_zero = detail::parse_signal(require_key(bj, "u_0", path + ".boundary"),
                                             path + ".boundary.u_0");
            node.boundary = bd;
        }
        if (!net.nodes.emplace(node.id, node).second) {
            throw ConfigError(path + ": duplicate node id '" + node.id + "'");
        }
    }

    const ValidationReport rep = validate_network(net);
    if (!rep.ok()) {
        throw ConfigError("network validation failed:\n" + rep.to_string());
    }
    return net;
}

inline Network parse_network(const std::string& config_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(config_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("network config: ") + e.what());
    }
    return parse_network_json(j);
}

inline std::string serialize_network(const Network& net) {
    nlohmann::ordered_json j;
    j["gamma"] = net.gamma;
    j["pipes"] = nlohmann::ordered_json::array();
    for (const auto& [id, p] : net.pipes) {
        nlohmann::ordered_json pj;
        pj["id"] = id;
        pj["length"] = p.length;
        pj["diameter"] = p.diameter;
        pj["friction_theta"] = p.friction_theta;
        pj["cells"] = p.cells;
        j["pipes"].push_back(pj);
    }
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& [id, n] : net.nodes) {
        nlohmann::ordered_json nj;
        nj["id"] = id;
        nj["incident"] = nlohmann::ordered_json::array();
        for (const Incident& inc : n.incident) {
            nj["incident"].push_back({{"pipe", inc.pipe}, {"end", to_string(inc.end)}});
        }
        nj["mu"] = n.mu;
        if (n.boundary) {
            nj["boundary"] = {{"u_sigma", detail::signal_to_json(n.boundary->u_sigma)},
                              {"u_0", detail::signal_to_json(n.boundary->u_zero)}};
        }
        j["nodes"].push_back(nj);
    }
    return j.dump(2);
}

}  // namespace blendflow
