#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hhfl/engine.hpp"
#include "hhfl/errors.hpp"

namespace hhfl {

/// Shortest-roundtrip decimal formatting (17 significant digits).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a, used to fingerprint canonical config text in output headers.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Writes a trace as CSV: step rows carry metrics, event rows carry link and
/// transfer-unit counters. A comment header pins the config hash and seed so
/// reruns are comparable byte for byte. The file is written atomically.
inline void write_trace_csv(const std::string& path, const TrainingTrace& trace) {
    std::ostringstream out;
    out << "# config_hash=" << trace.config_digest << " seed=" << trace.seed
        << " arch=" << trace.arch << " e=" << trace.schedule.local_steps_e
        << " g=" << trace.schedule.edge_rounds_g << " t=" << trace.schedule.total_steps_t
        << "\n";
    out << "step,loss,accuracy,lr,event,links_used,unicast_units,multipoint_units\n";

    std::size_t next_event = 0;
    for (const auto& rec : trace.steps) {
        out << rec.step << ',' << format_double(rec.loss) << ',' << format_double(rec.accuracy)
            << ',' << format_double(rec.lr) << ",,,,\n";
        while (next_event < trace.events.size() && trace.events[next_event].step == rec.step) {
            const auto& ev = trace.events[next_event++];
            out << ev.step << ",,,," << event_name(ev.kind) << ','
                << format_double(ev.links_used) << ',' << format_double(ev.unicast_units) << ','
                << format_double(ev.multipoint_units) << "\n";
        }
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw InvalidConfig("cannot write " + tmp);
        f << out.str();
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string header_value(const std::string& header, const std::string& key) {
    const std::string needle = key + "=";
    const auto pos = header.find(needle);
    if (pos == std::string::npos) return {};
    auto end = header.find(' ', pos);
    if (end == std::string::npos) end = header.size();
    return header.substr(pos + needle.size(), end - pos - needle.size());
}
}  // namespace detail

/// Parses a CSV written by write_trace_csv.
inline TrainingTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open " + path);
    TrainingTrace trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            trace.config_digest = detail::header_value(line, "config_hash");
            const std::string seed = detail::header_value(line, "seed");
            if (!seed.empty()) trace.seed = std::stoull(seed);
            trace.arch = detail::header_value(line, "arch");
            const std::string e = detail::header_value(line, "e");
            const std::string g = detail::header_value(line, "g");
            const std::string t = detail::header_value(line, "t");
            if (!e.empty()) trace.schedule.local_steps_e = std::stoi(e);
            if (!g.empty()) trace.schedule.edge_rounds_g = std::stoi(g);
            if (!t.empty()) trace.schedule.total_steps_t = std::stoi(t);
            continue;
        }
        if (line.rfind("step,", 0) == 0) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 8) throw InvalidConfig(path + ": malformed row '" + line + "'");
        if (fields[4].empty()) {
            trace.steps.push_back({std::stoi(fields[0]), std::stod(fields[1]),
                                   std::stod(fields[2]), std::stod(fields[3])});
        } else {
            EventKind kind;
            if (fields[4] == "edge_agg") kind = EventKind::edge_agg;
            else if (fields[4] == "cloud_agg") kind = EventKind::cloud_agg;
            else if (fields[4] == "client_agg") kind = EventKind::client_agg;
            else throw InvalidConfig(path + ": unknown event '" + fields[4] + "'");
            trace.events.push_back({std::stoi(fields[0]), kind, std::stod(fields[5]),
                                    std::stod(fields[6]), std::stod(fields[7])});
        }
    }
    return trace;
}

/// One (experiment, arch, metric, value) summary row.
struct SummaryRow {
    std::string experiment_id;
    std::string arch;  ///< empty for cross-architecture metrics
    std::string metric;
    double value = 0.0;
};

inline void write_summary_csv(const std::string& path, const std::string& config_digest,
                              std::uint64_t seed, const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << "# config_hash=" << config_digest << " seed=" << seed << "\n";
    out << "experiment_id,arch,metric,value\n";
    for (const auto& r : rows)
        out << r.experiment_id << ',' << r.arch << ',' << r.metric << ','
            << format_double(r.value) << "\n";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw InvalidConfig("cannot write " + tmp);
        f << out.str();
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace hhfl
