#include <cstdio>
#include <fstream>
#include <sstream>

#include "uvu/env.hpp"
#include "uvu/error.hpp"

namespace uvu {

namespace {

constexpr const char* kMagic = "uvu-dataset";

void write_number(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

}  // namespace

std::string metadata_path(const std::string& dataset_path) { return dataset_path + ".meta.json"; }

void write_dataset(const Dataset& ds, const std::string& path) {
    const int sd = ds.state_dim();
    const int zd = ds.task_dim();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open dataset file for writing: " + path);
    os << kMagic << " 1 state_dim=" << sd << " task_dim=" << zd << " records=" << ds.size() << '\n';
    for (const auto& t : ds.transitions) {
        if (t.s.size() != sd || t.s_next.size() != sd || t.z.size() != zd) {
            throw ValidationError("write_dataset: inconsistent transition dimensions");
        }
        bool first = true;
        auto put = [&](double v) {
            if (!first) os << ' ';
            first = false;
            write_number(os, v);
        };
        for (double v : t.s) put(v);
        put(t.a);
        put(t.r);
        for (double v : t.z) put(v);
        for (double v : t.s_next) put(v);
        put(t.a_next);
        os << '\n';
    }
    std::ofstream meta(metadata_path(path), std::ios::binary);
    if (!meta) throw ValidationError("cannot open metadata file for writing: " + metadata_path(path));
    nlohmann::json j = {{"policy_id", ds.metadata.policy_id},
                        {"seed", ds.metadata.seed},
                        {"env", ds.metadata.env_spec},
                        {"state_dim", sd},
                        {"task_dim", zd},
                        {"records", ds.size()}};
    meta << j.dump(2) << '\n';
}

Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open dataset file: " + path);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != kMagic || version != 1) throw ValidationError("not a dataset file: " + path);
    int sd = -1, zd = -1;
    long n = -1;
    std::string tok;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "state_dim") sd = std::stoi(val);
        else if (key == "task_dim") zd = std::stoi(val);
        else if (key == "records") n = std::stol(val);
    }
    if (sd < 0 || zd < 0 || n < 0) throw ValidationError("malformed dataset header: " + header);

    Dataset ds;
    ds.transitions.reserve(static_cast<std::size_t>(n));
    std::string line;
    const int width = 2 * sd + zd + 3;
    std::vector<double> vals(static_cast<std::size_t>(width));
    for (long i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw ValidationError("dataset truncated: " + path);
        const char* p = line.c_str();
        for (int k = 0; k < width; ++k) {
            char* end = nullptr;
            vals[static_cast<std::size_t>(k)] = std::strtod(p, &end);
            if (end == p) throw ValidationError("malformed dataset record " + std::to_string(i));
            p = end;
        }
        Transition t;
        int o = 0;
        t.s = Eigen::Map<const Eigen::VectorXd>(vals.data() + o, sd);
        o += sd;
        t.a = static_cast<int>(vals[static_cast<std::size_t>(o++)]);
        t.r = vals[static_cast<std::size_t>(o++)];
        t.z = Eigen::Map<const Eigen::VectorXd>(vals.data() + o, zd);
        o += zd;
        t.s_next = Eigen::Map<const Eigen::VectorXd>(vals.data() + o, sd);
        o += sd;
        t.a_next = static_cast<int>(vals[static_cast<std::size_t>(o)]);
        ds.transitions.push_back(std::move(t));
    }

    std::ifstream meta(metadata_path(path));
    if (meta) {
        const auto j = nlohmann::json::parse(meta);
        ds.metadata.policy_id = j.value("policy_id", "");
        ds.metadata.seed = j.value("seed", std::uint64_t{0});
        ds.metadata.env_spec = j.value("env", nlohmann::json::object());
    }
    return ds;
}

}  // namespace uvu
