#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "radnet/adam.hpp"
#include "radnet/config.hpp"
#include "radnet/container.hpp"
#include "radnet/network.hpp"
#include "radnet/scene.hpp"

// Checkpointing and the deterministic training loop shared by the command
// line driver and the end-to-end tests.  A checkpoint is a volume container
// holding one float32 record per parameter plus the optimizer moments and the
// step counter, with a small text sidecar carrying the step and config hash.

namespace radnet {

struct CheckpointMeta {
    std::int64_t step = 0;
    std::string config_hash;
};

inline std::string checkpoint_meta_path(const std::string& checkpoint_path) {
    return checkpoint_path + ".meta";
}

inline CheckpointMeta read_checkpoint_meta(const std::string& checkpoint_path) {
    const std::string path = checkpoint_meta_path(checkpoint_path);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    CheckpointMeta meta;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("step: ", 0) == 0) meta.step = std::stoll(line.substr(6));
        else if (line.rfind("config_hash: ", 0) == 0) meta.config_hash = line.substr(13);
        else throw ValidationError("unknown checkpoint meta line: " + line);
    }
    return meta;
}

template <typename T>
void save_checkpoint(const std::string& path, Network<T>& net, Adam<T>& adam, std::int64_t step,
                     const std::string& cfg_hash) {
    const std::vector<Parameter<T>*> params = net.params();
    std::vector<NamedVolume> records;
    for (const Parameter<T>* p : params) {
        records.push_back({"param." + p->name, p->value.template cast<float>()});
    }
    auto& m = adam.first_moments();
    auto& v = adam.second_moments();
    for (std::size_t i = 0; i < params.size(); ++i) {
        records.push_back({"adam.m." + params[i]->name, m[i].template cast<float>()});
        records.push_back({"adam.v." + params[i]->name, v[i].template cast<float>()});
    }
    Tensor<float> step_rec({1});
    step_rec[0] = static_cast<float>(step);
    records.push_back({"step", step_rec});
    save_volumes(path, records);

    std::ofstream meta(checkpoint_meta_path(path), std::ios::trunc);
    if (!meta) throw IoError("cannot write " + checkpoint_meta_path(path));
    meta << "step: " << step << '\n';
    meta << "config_hash: " << cfg_hash << '\n';
}

template <typename T>
void load_checkpoint_params(const std::string& path, Network<T>& net) {
    for (Parameter<T>* p : net.params()) {
        Tensor<float> rec = load_volume(path, "param." + p->name);
        if (rec.shape() != p->value.shape()) {
            throw ValidationError("checkpoint parameter " + p->name + " has shape " + shape_str(rec.shape()) +
                                  ", model expects " + shape_str(p->value.shape()));
        }
        p->value = rec.template cast<T>();
    }
}

// Restores parameters, optimizer moments, and the step counter; returns the
// sidecar metadata so callers can verify the config hash.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, Network<T>& net, Adam<T>& adam) {
    load_checkpoint_params(path, net);
    const std::vector<Parameter<T>*> params = net.params();
    auto& m = adam.first_moments();
    auto& v = adam.second_moments();
    if (m.size() != params.size()) {
        throw ValidationError("optimizer tracks " + std::to_string(m.size()) + " parameters, model has " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<float> mr = load_volume(path, "adam.m." + params[i]->name);
        Tensor<float> vr = load_volume(path, "adam.v." + params[i]->name);
        if (mr.shape() != params[i]->value.shape() || vr.shape() != params[i]->value.shape()) {
            throw ValidationError("optimizer state for " + params[i]->name + " has the wrong shape");
        }
        m[i] = mr.template cast<T>();
        v[i] = vr.template cast<T>();
    }
    const Tensor<float> step_rec = load_volume(path, "step");
    const std::int64_t step = static_cast<std::int64_t>(step_rec[0]);
    adam.set_step_count(step);

    CheckpointMeta meta = read_checkpoint_meta(path);
    if (meta.step != step) {
        throw ValidationError("checkpoint meta step " + std::to_string(meta.step) +
                              " disagrees with the stored step " + std::to_string(step));
    }
    return meta;
}

inline std::string checkpoint_name(std::int64_t step) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.mrnv", static_cast<long long>(step));
    return buf;
}

inline std::string train_log_line(std::int64_t step, double total, double main, double aux) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "step=%lld total=%.6f main=%.6f aux=%.6f", static_cast<long long>(step),
                  total, main, aux);
    return buf;
}

struct TrainResult {
    std::int64_t last_step = 0;
    std::string last_checkpoint;
    bool aborted_non_finite = false;
    std::string abort_reason;
    double last_total = 0.0;
};

// The scene visited at step s is a pure function of (seed, s): a fixed
// seeded shuffle of the training list walked cyclically.  Resuming from a
// checkpoint therefore replays exactly the data order of an uninterrupted
// run.
inline std::vector<std::size_t> scene_visit_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed ^ 0x5ce9e0d5ull);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(n - i)));
        std::swap(order[i], order[j]);
    }
    return order;
}

template <typename T>
TrainResult train_loop(const Config& cfg, const std::string& data_dir, const std::string& out_dir,
                       const std::string& resume_path,
                       const std::function<void(const std::string&)>& on_log) {
    cfg.validate();
    const DatasetManifest manifest = load_manifest(data_dir);
    if (manifest.rows != cfg.data.rows || manifest.cols != cfg.data.cols || manifest.frames != cfg.data.frames) {
        throw ValidationError("dataset grid " + std::to_string(manifest.frames) + "x" +
                              std::to_string(manifest.rows) + "x" + std::to_string(manifest.cols) +
                              " does not match the configured " + std::to_string(cfg.data.frames) + "x" +
                              std::to_string(cfg.data.rows) + "x" + std::to_string(cfg.data.cols));
    }
    if (manifest.classes != cfg.model.classes) {
        throw ValidationError("dataset has " + std::to_string(manifest.classes) + " classes, model expects " +
                              std::to_string(cfg.model.classes));
    }
    if (manifest.train.empty()) throw ValidationError("dataset has no training scenes");

    std::vector<Tensor<T>> inputs, targets;
    for (const std::string& name : manifest.train) {
        const SceneFiles s = load_scene(data_dir, name);
        inputs.push_back(s.rf.template cast<T>());
        targets.push_back(s.gt.template cast<T>());
    }

    Network<T> net(cfg.model);
    Rng rng(cfg.train.seed);
    net.init(rng);
    typename Adam<T>::Options adam_opt;
    adam_opt.lr = cfg.train.lr;
    adam_opt.beta1 = cfg.train.beta1;
    adam_opt.beta2 = cfg.train.beta2;
    adam_opt.eps = cfg.train.eps;
    Adam<T> adam(net.params(), adam_opt);

    const std::string cfg_hash = trajectory_hash(cfg);
    std::int64_t start_step = 0;
    if (!resume_path.empty()) {
        const CheckpointMeta meta = load_checkpoint(resume_path, net, adam);
        if (meta.config_hash != cfg_hash) {
            throw ValidationError("checkpoint " + resume_path + " was written under config " + meta.config_hash +
                                  ", current config is " + cfg_hash);
        }
        start_step = meta.step;
    }

    const std::vector<std::size_t> order = scene_visit_order(inputs.size(), cfg.train.seed);
    TrainResult result;
    result.last_step = start_step;
    result.last_checkpoint = resume_path;

    for (std::int64_t step = start_step + 1; step <= cfg.train.steps; ++step) {
        const std::size_t scene = order[static_cast<std::size_t>((step - 1) % static_cast<std::int64_t>(order.size()))];
        LossParts<T> parts;
        try {
            parts = net.train_step(inputs[scene], targets[scene], cfg.train.alpha, adam, step);
        } catch (const NumericError& e) {
            result.aborted_non_finite = true;
            result.abort_reason = e.what();
            return result;
        }
        result.last_step = step;
        result.last_total = static_cast<double>(parts.total);
        if (on_log) {
            on_log(train_log_line(step, static_cast<double>(parts.total), static_cast<double>(parts.main),
                                  static_cast<double>(parts.aux)));
        }
        if (step % cfg.train.checkpoint_every == 0 || step == cfg.train.steps) {
            const std::string path = out_dir + "/" + checkpoint_name(step);
            save_checkpoint(path, net, adam, step, cfg_hash);
            result.last_checkpoint = path;
        }
    }
    return result;
}

}  // namespace radnet
