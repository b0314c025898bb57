#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hhfl/analysis.hpp"
#include "hhfl/engine.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/partition.hpp"
#include "hhfl/topology.hpp"

namespace hhfl {

using Json = nlohmann::json;

struct DatasetConfig {
    std::string kind = "synth_gaussian";  ///< synth_gaussian | mnist_idx
    int num_classes = 10;
    int feature_dim = 20;
    int samples_per_class = 200;
    double separation = 4.0;
    std::string images_path;  ///< mnist_idx only
    std::string labels_path;
    int subset = 2000;          ///< mnist_idx: stratified cap, -1 = all
    std::uint64_t seed = 0;     ///< corpus/split seed; 0 = follow the run seed
};

struct LearnerConfig {
    std::string kind = "logistic";  ///< logistic | mlp | quadratic
    int hidden = 32;                ///< mlp
    int dim = 4;                    ///< quadratic
    double heterogeneity = 1.0;     ///< quadratic
    double eig_min = 0.5;
    double eig_max = 2.0;
    double noise_sigma = 0.0;
};

struct LrConfig {
    std::string kind = "exp_decay";  ///< exp_decay | inverse
    double init = 0.1;
    double factor = 0.992;
    int steps_per_epoch = 0;  ///< 0 = derive from shard size / batch size
    double beta = 0.0;        ///< inverse
    double alpha = 0.0;
};

struct ExperimentConfig {
    std::string experiment_id = "experiment";
    std::string topology_name = "fig3";  ///< "fig3" or "inline"
    TopologySpec inline_topology;
    int overlap_clients = -1;         ///< -1 = leave layout as is
    double overlap_proportion = -1.0; ///< sweep axis; resolved against K when >= 0
    std::vector<Arch> architectures{Arch::hier_fedavg, Arch::hhfl};
    CaseId case_id = CaseId::noniid_noniid2;
    LearnerConfig learner;
    DatasetConfig dataset;
    double test_fraction = 0.25;
    int batch_size = 20;
    Schedule schedule;
    LrConfig lr;
    TimeModel time_model;
    ConvergenceCriterion criterion;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::string canonical_text;  ///< normalized dump used for the config hash
};

namespace detail {

template <typename T>
T get_or(const Json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw InvalidConfig("config field '" + key + "': " + e.what());
    }
}

inline TopologySpec parse_inline_topology(const Json& j) {
    TopologySpec spec;
    spec.layout_tag = get_or<std::string>(j, "layout_tag", "inline");
    if (!j.contains("connectivity"))
        throw InvalidConfig("topology: inline spec requires 'connectivity'");
    for (const auto& row : j.at("connectivity"))
        spec.connectivity.push_back(row.get<std::vector<int>>());
    spec.num_clients = static_cast<int>(spec.connectivity.size());
    spec.num_es = get_or<int>(j, "num_es", 0);
    if (spec.num_es == 0)
        for (const auto& s : spec.connectivity)
            for (int n : s) spec.num_es = std::max(spec.num_es, n + 1);
    spec.data_weights = get_or<std::vector<double>>(j, "data_weights", {});
    return spec;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const Json& j) {
    ExperimentConfig cfg;
    cfg.experiment_id = detail::get_or<std::string>(j, "experiment_id", "experiment");
    if (!j.contains("seed")) throw InvalidConfig("config: 'seed' is required");
    cfg.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("topology")) {
        const auto& t = j.at("topology");
        if (t.is_string()) {
            cfg.topology_name = t.get<std::string>();
            if (cfg.topology_name != "fig3")
                throw InvalidConfig("topology: unknown named layout '" + cfg.topology_name +
                                    "'");
        } else {
            cfg.topology_name = "inline";
            cfg.inline_topology = detail::parse_inline_topology(t);
        }
    }
    cfg.overlap_clients = detail::get_or<int>(j, "overlap_clients", -1);

    if (j.contains("architectures")) {
        cfg.architectures.clear();
        for (const auto& a : j.at("architectures"))
            cfg.architectures.push_back(arch_from_name(a.get<std::string>()));
        if (cfg.architectures.empty())
            throw InvalidConfig("architectures: list must not be empty");
    }
    cfg.case_id = DistributionCase::id_from_name(
        detail::get_or<std::string>(j, "case", "noniid_noniid2"));

    if (j.contains("learner")) {
        const auto& l = j.at("learner");
        cfg.learner.kind = detail::get_or<std::string>(l, "kind", "logistic");
        if (cfg.learner.kind != "logistic" && cfg.learner.kind != "mlp" &&
            cfg.learner.kind != "quadratic")
            throw InvalidConfig("learner.kind: unknown kind '" + cfg.learner.kind + "'");
        cfg.learner.hidden = detail::get_or<int>(l, "hidden", 32);
        cfg.learner.dim = detail::get_or<int>(l, "dim", 4);
        cfg.learner.heterogeneity = detail::get_or<double>(l, "heterogeneity", 1.0);
        cfg.learner.eig_min = detail::get_or<double>(l, "eig_min", 0.5);
        cfg.learner.eig_max = detail::get_or<double>(l, "eig_max", 2.0);
        cfg.learner.noise_sigma = detail::get_or<double>(l, "noise_sigma", 0.0);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.kind = detail::get_or<std::string>(d, "kind", "synth_gaussian");
        if (cfg.dataset.kind != "synth_gaussian" && cfg.dataset.kind != "mnist_idx")
            throw InvalidConfig("dataset.kind: unknown kind '" + cfg.dataset.kind + "'");
        cfg.dataset.num_classes = detail::get_or<int>(d, "num_classes", 10);
        cfg.dataset.feature_dim = detail::get_or<int>(d, "feature_dim", 20);
        cfg.dataset.samples_per_class = detail::get_or<int>(d, "samples_per_class", 200);
        cfg.dataset.separation = detail::get_or<double>(d, "separation", 4.0);
        cfg.dataset.images_path = detail::get_or<std::string>(d, "images", "");
        cfg.dataset.labels_path = detail::get_or<std::string>(d, "labels", "");
        cfg.dataset.subset = detail::get_or<int>(d, "subset", 2000);
        cfg.dataset.seed = detail::get_or<std::uint64_t>(d, "seed", 0);
    }
    cfg.test_fraction = detail::get_or<double>(j, "test_fraction", 0.25);
    if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0)
        throw InvalidConfig("test_fraction: must be in [0, 1)");
    cfg.batch_size = detail::get_or<int>(j, "batch_size", 20);
    if (cfg.batch_size < 1) throw InvalidConfig("batch_size: must be >= 1");

    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        cfg.schedule.local_steps_e = detail::get_or<int>(s, "e", 5);
        cfg.schedule.edge_rounds_g = detail::get_or<int>(s, "g", 5);
        cfg.schedule.total_steps_t = detail::get_or<int>(s, "t", 1000);
    }
    cfg.schedule.validate();

    if (j.contains("lr")) {
        const auto& l = j.at("lr");
        cfg.lr.kind = detail::get_or<std::string>(l, "kind", "exp_decay");
        if (cfg.lr.kind != "exp_decay" && cfg.lr.kind != "inverse")
            throw InvalidConfig("lr.kind: unknown kind '" + cfg.lr.kind + "'");
        cfg.lr.init = detail::get_or<double>(l, "init", 0.1);
        cfg.lr.factor = detail::get_or<double>(l, "factor", 0.992);
        cfg.lr.steps_per_epoch = detail::get_or<int>(l, "steps_per_epoch", 0);
        cfg.lr.beta = detail::get_or<double>(l, "beta", 0.0);
        cfg.lr.alpha = detail::get_or<double>(l, "alpha", 0.0);
    }
    if (j.contains("time_model")) {
        const auto& t = j.at("time_model");
        cfg.time_model.ratio_ces = detail::get_or<double>(t, "ratio_ces", 10.0);
        cfg.time_model.ratio_ecs = detail::get_or<double>(t, "ratio_ecs", 10.0);
    }
    cfg.time_model.validate();
    if (j.contains("criterion")) {
        const auto& c = j.at("criterion");
        cfg.criterion.slope_threshold = detail::get_or<double>(c, "slope_threshold", 0.001);
        cfg.criterion.window = detail::get_or<int>(c, "window", 10);
    }
    cfg.criterion.validate();
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
    cfg.canonical_text = j.dump();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config file " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InvalidConfig(path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

struct SweepConfig {
    ExperimentConfig base;
    std::string axis;  ///< E | G | overlap_proportion | case
    std::vector<Json> values;
};

inline SweepConfig load_sweep_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open sweep config " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InvalidConfig(path + ": " + e.what());
    }
    if (!j.contains("base")) throw InvalidConfig("sweep: 'base' experiment config required");
    SweepConfig sweep;
    sweep.base = parse_experiment_config(j.at("base"));
    sweep.axis = detail::get_or<std::string>(j, "axis", "");
    if (sweep.axis != "E" && sweep.axis != "G" && sweep.axis != "overlap_proportion" &&
        sweep.axis != "case")
        throw InvalidConfig("sweep.axis: must be one of E, G, overlap_proportion, case");
    if (!j.contains("values") || !j.at("values").is_array() || j.at("values").empty())
        throw InvalidConfig("sweep.values: non-empty list required");
    for (const auto& v : j.at("values")) sweep.values.push_back(v);
    return sweep;
}

/// Applies one sweep-axis value to a copy of the base config.
inline ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& axis,
                                          const Json& value) {
    ExperimentConfig cfg = base;
    std::string tag;
    if (axis == "E") {
        cfg.schedule.local_steps_e = value.get<int>();
        tag = "e" + std::to_string(cfg.schedule.local_steps_e);
    } else if (axis == "G") {
        cfg.schedule.edge_rounds_g = value.get<int>();
        tag = "g" + std::to_string(cfg.schedule.edge_rounds_g);
    } else if (axis == "overlap_proportion") {
        const double prop = value.get<double>();
        if (prop < 0.0 || prop > 1.0)
            throw InvalidConfig("sweep value: overlap_proportion must be in [0, 1]");
        cfg.overlap_proportion = prop;
        tag = "ov" + std::to_string(prop);
    } else if (axis == "case") {
        cfg.case_id = DistributionCase::id_from_name(value.get<std::string>());
        tag = DistributionCase::from_id(cfg.case_id).name();
    } else {
        throw InvalidConfig("sweep.axis: unknown axis '" + axis + "'");
    }
    cfg.schedule.validate();
    cfg.experiment_id = base.experiment_id + "_" + tag;
    cfg.canonical_text = base.canonical_text + "|" + axis + "=" + value.dump();
    return cfg;
}

}  // namespace hhfl
