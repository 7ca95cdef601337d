#include "radnet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "radnet/attention.hpp"
#include "radnet/class_mask.hpp"
#include "radnet/detect.hpp"
#include "radnet/gradcheck.hpp"
#include "radnet/layers.hpp"
#include "radnet/opcount.hpp"
#include "radnet/scene.hpp"
#include "radnet/shift.hpp"
#include "radnet/trainer.hpp"

namespace radnet::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> class_names_for(std::int64_t n) {
    if (n == static_cast<std::int64_t>(default_class_names().size())) return default_class_names();
    std::vector<std::string> out;
    for (std::int64_t i = 0; i < n; ++i) out.push_back("class" + std::to_string(i));
    return out;
}

void write_config_echo(const Config& cfg, const std::string& dir) {
    const std::string path = dir + "/config.txt";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << config_text(cfg);
}

void require_parent_exists(const std::string& out_dir) {
    const fs::path parent = fs::path(out_dir).parent_path();
    if (!parent.empty() && !fs::exists(parent)) {
        throw IoError("parent directory " + parent.string() + " does not exist");
    }
}

std::string hash_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

}  // namespace

int cmd_synth(const Config& cfg, const SynthArgs& args, std::ostream& out) {
    require_parent_exists(args.out);
    DatasetOptions opt;
    opt.n_scenes = cfg.data.scenes;
    opt.seed = cfg.data.seed;
    opt.split = cfg.data.split;
    opt.difficulty = cfg.data.difficulty;
    opt.frames = cfg.data.frames;
    opt.params = cfg.ols_params();
    opt.force = args.force;

    const DatasetManifest manifest = make_dataset(args.out, opt);
    write_config_echo(cfg, args.out);
    out << "dataset: " << args.out << '\n';
    out << "scenes: " << cfg.data.scenes << " (train " << manifest.train.size() << ", test "
        << manifest.test.size() << ")\n";
    out << "difficulty: " << manifest.difficulty << '\n';
    out << "grid: " << manifest.frames << "x" << manifest.rows << "x" << manifest.cols << '\n';
    out << "manifest hash: " << hash_hex(manifest_text(manifest)) << '\n';
    return kExitOk;
}

namespace {

template <typename T>
int run_train(const Config& cfg, const TrainArgs& args, std::ostream& out) {
    fs::create_directories(args.out);
    write_config_echo(cfg, args.out);
    const std::string log_path = args.out + "/train_log.txt";
    std::ofstream log(log_path, args.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + log_path);

    const auto on_log = [&](const std::string& line) {
        log << line << '\n';
        out << line << '\n';
    };
    const TrainResult result = train_loop<T>(cfg, args.data_dir, args.out, args.resume, on_log);
    log.flush();
    if (result.aborted_non_finite) {
        out << "aborted: " << result.abort_reason << '\n';
        if (!result.last_checkpoint.empty()) {
            out << "last good checkpoint: " << result.last_checkpoint << '\n';
        }
        return kExitNumeric;
    }
    out << "trained to step " << result.last_step << '\n';
    if (!result.last_checkpoint.empty()) out << "checkpoint: " << result.last_checkpoint << '\n';
    return kExitOk;
}

void write_pgm(const std::string& path, const Tensor<float>& conf, std::int64_t t, std::int64_t cls) {
    const std::int64_t H = conf.extent(1), W = conf.extent(2), C = conf.extent(3);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "P2\n" << W << ' ' << H << "\n255\n";
    for (std::int64_t r = 0; r < H; ++r) {
        for (std::int64_t c = 0; c < W; ++c) {
            const float v = std::clamp(conf[((t * H + r) * W + c) * C + cls], 0.0f, 1.0f);
            f << static_cast<int>(std::lround(v * 255.0f));
            f << (c + 1 == W ? '\n' : ' ');
        }
    }
}

template <typename T>
int run_infer(const Config& cfg, const InferArgs& args, std::ostream& out) {
    const CheckpointMeta meta = read_checkpoint_meta(args.checkpoint);
    const std::string cfg_hash = trajectory_hash(cfg);
    if (meta.config_hash != cfg_hash) {
        throw ValidationError("checkpoint " + args.checkpoint + " was written under config " + meta.config_hash +
                              ", current config is " + cfg_hash);
    }
    Network<T> net(cfg.model);
    load_checkpoint_params(args.checkpoint, net);

    const Tensor<float> rf = load_volume(args.input, "rf");
    if (rf.rank() != 4 || rf.extent(0) != cfg.model.in_channels) {
        throw ValidationError("input volume has shape " + shape_str(rf.shape()) + ", expected [" +
                              std::to_string(cfg.model.in_channels) + ",T,H,W]");
    }
    const Tensor<T> x = rf.template cast<T>();
    const Tensor<T> conf_t = net.infer(x);
    const Tensor<float> conf = conf_t.template cast<float>();

    OlsParams params = cfg.ols_params();
    params.rows = conf.extent(1);
    params.cols = conf.extent(2);
    params.validate();
    std::vector<Detection> peaks = find_peaks(conf_t, cfg.detect.min_score);
    std::vector<Detection> kept = ols_nms(peaks, params, cfg.detect.nms_threshold);
    sort_for_export(kept);

    fs::create_directories(args.out);
    write_config_echo(cfg, args.out);
    save_volumes(args.out + "/conf.mrnv", {{"conf", conf}});
    const std::vector<std::string> names = class_names_for(cfg.model.classes);
    {
        std::ofstream det(args.out + "/detections.txt", std::ios::trunc);
        if (!det) throw IoError("cannot write " + args.out + "/detections.txt");
        det << "# frame row col class score\n";
        write_detections(det, kept, names);
    }
    if (args.dump_maps) {
        const std::string maps_dir = args.out + "/maps";
        fs::create_directories(maps_dir);
        char frame_tag[32];
        for (std::int64_t t = 0; t < conf.extent(0); ++t) {
            std::snprintf(frame_tag, sizeof(frame_tag), "frame_%03lld", static_cast<long long>(t));
            for (std::int64_t c = 0; c < conf.extent(3); ++c) {
                write_pgm(maps_dir + "/" + frame_tag + "_" + names[static_cast<std::size_t>(c)] + ".pgm",
                          conf, t, c);
            }
        }
    }
    out << "confidence maps: " << args.out << "/conf.mrnv " << shape_str(conf.shape()) << '\n';
    out << "detections: " << kept.size() << " -> " << args.out << "/detections.txt\n";
    return kExitOk;
}

}  // namespace

int cmd_train(const Config& cfg, const TrainArgs& args, std::ostream& out) {
    if (cfg.train.precision == "f64") return run_train<double>(cfg, args, out);
    return run_train<float>(cfg, args, out);
}

int cmd_infer(const Config& cfg, const InferArgs& args, std::ostream& out) {
    if (cfg.train.precision == "f64") return run_infer<double>(cfg, args, out);
    return run_infer<float>(cfg, args, out);
}

int cmd_eval(const Config& cfg, const EvalArgs& args, std::ostream& out) {
    const std::vector<std::string> names = class_names_for(cfg.model.classes);
    std::ifstream det_in(args.detections);
    if (!det_in) throw IoError("cannot open " + args.detections);
    const std::vector<Detection> dets = read_detections(det_in, names);
    std::ifstream ann_in(args.annotations);
    if (!ann_in) throw IoError("cannot open " + args.annotations);
    const std::vector<Annotation> anns = read_annotations(ann_in, names);

    const EvalResult result = match_and_score(dets, anns, cfg.ols_params(), cfg.eval_thresholds());
    const std::string report = format_eval(result, names);
    out << report;
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        write_config_echo(cfg, args.out);
        std::ofstream f(args.out + "/eval.txt", std::ios::trunc);
        if (!f) throw IoError("cannot write " + args.out + "/eval.txt");
        f << report;
    }
    return kExitOk;
}

namespace {

struct SuiteOutcome {
    std::string name;
    GradCheckReport report;
    std::int64_t probes = 0;
};

SuiteOutcome summarize(const std::string& name, const GradCheckReport& report) {
    SuiteOutcome s;
    s.name = name;
    s.report = report;
    for (const auto& b : report.blocks) s.probes += b.probes;
    return s;
}

SuiteOutcome suite_layers(std::uint64_t seed, bool corrupt) {
    Rng rng(seed);
    Linear<double> lin(6, 8, "linear");
    LayerNorm<double> norm(8, "norm");
    Ffn<double> ffn(8, 2, "ffn");
    lin.init(rng, 0.5);
    fill_random_uniform(lin.bias.value, rng, -0.2, 0.2);
    norm.gain.value.fill(1.0);
    fill_random_uniform(norm.bias.value, rng, -0.1, 0.1);
    ffn.init(rng, 0.5);

    Tensor<double> x({4, 6});
    fill_random_uniform(x, rng, -1.0, 1.0);
    Tensor<double> target({4, 8});
    fill_random_uniform(target, rng, 0.0, 1.0);

    const auto loss = [&] {
        Tensor<double> y = ffn.forward(norm.forward(lin.forward(x, false), false), false);
        double l = bce(sigmoid(y), target);
        if (corrupt) l += 0.05 * lin.weight.value[0];
        return l;
    };
    Tensor<double> p = sigmoid(ffn.forward(norm.forward(lin.forward(x, true), true), true));
    Tensor<double> dy = sigmoid_backward(p, bce_backward(p, target));
    lin.backward(norm.backward(ffn.backward(dy)));

    std::vector<Parameter<double>*> params;
    lin.collect(params);
    norm.collect(params);
    ffn.collect(params);
    return summarize("layers", gradcheck(params, loss));
}

SuiteOutcome suite_attention(std::uint64_t seed, bool corrupt) {
    Rng rng(seed);
    WindowSelfAttention<double> attn(8, 2, {2, 2, 2}, {1, 1, 1}, true, "attention");
    attn.init(rng, 0.5);
    Tensor<double> x({4, 4, 4, 8});
    fill_random_uniform(x, rng, -1.0, 1.0);
    Tensor<double> target(x.shape());
    fill_random_uniform(target, rng, 0.0, 1.0);

    std::vector<Parameter<double>*> params;
    attn.collect(params);
    const auto loss = [&] {
        double l = bce(sigmoid(attn.forward(x, false)), target);
        if (corrupt) l += 0.05 * params[0]->value[0];
        return l;
    };
    Tensor<double> p = sigmoid(attn.forward(x, true));
    attn.backward(sigmoid_backward(p, bce_backward(p, target)));
    return summarize("attention", gradcheck(params, loss));
}

SuiteOutcome suite_class_mask(std::uint64_t seed, bool corrupt) {
    Rng rng(seed);
    ClassMaskOptions mo;
    ClassMaskAttention<double> cm(8, 3, mo, "class_mask");
    cm.init(rng, 0.5);
    cm.beta().value[0] = 0.3;  // a zero beta would hide the attention path
    Tensor<double> x({2, 4, 4, 8});
    fill_random_uniform(x, rng, -1.0, 1.0);
    Tensor<double> t_enh(x.shape());
    fill_random_uniform(t_enh, rng, 0.0, 1.0);
    Tensor<double> t_pri({2, 4, 4, 3});
    fill_random_uniform(t_pri, rng, 0.0, 1.0);

    std::vector<Parameter<double>*> params;
    cm.collect(params);
    const auto loss = [&] {
        auto o = cm.forward(x, false);
        double l = bce(sigmoid(o.enhanced), t_enh) + bce(sigmoid(o.prior), t_pri);
        if (corrupt) l += 0.05 * params[0]->value[0];
        return l;
    };
    auto o = cm.forward(x, true);
    Tensor<double> pe = sigmoid(o.enhanced);
    Tensor<double> pp = sigmoid(o.prior);
    cm.backward(sigmoid_backward(pe, bce_backward(pe, t_enh)), sigmoid_backward(pp, bce_backward(pp, t_pri)));
    return summarize("class-mask", gradcheck(params, loss));
}

SuiteOutcome suite_network(std::uint64_t seed, bool corrupt) {
    ModelConfig mc;
    mc.stage_widths = {8};
    mc.stage_heads = {2};
    Network<double> net(mc);
    Rng rng(seed);
    net.init(rng);
    Tensor<double> x({2, 8, 8, 8});
    fill_random_uniform(x, rng, -1.0, 1.0);
    Tensor<double> gt({8, 8, 8, 3});
    fill_random_uniform(gt, rng, 0.0, 1.0);

    const std::vector<Parameter<double>*> params = net.params();
    const auto loss = [&] {
        double l = static_cast<double>(net.loss(net.forward(x, true), gt, 0.4).total);
        if (corrupt) l += 0.05 * params[0]->value[0];
        return l;
    };
    auto out = net.forward(x, true);
    net.loss(out, gt, 0.4);
    for (Parameter<double>* p : params) p->zero_grad();
    net.backward(out, gt, 0.4);

    GradCheckOptions opt;
    opt.max_probes_per_block = 4;
    return summarize("network", gradcheck(params, loss, opt));
}

}  // namespace

int cmd_gradcheck(const Config& cfg, const GradcheckArgs& args, std::ostream& out) {
    const double tolerance = 1e-4;
    const std::uint64_t seed = cfg.train.seed;
    const std::vector<std::pair<std::string, std::function<SuiteOutcome(bool)>>> suites = {
        {"layers", [&](bool c) { return suite_layers(seed, c); }},
        {"attention", [&](bool c) { return suite_attention(seed, c); }},
        {"class-mask", [&](bool c) { return suite_class_mask(seed, c); }},
        {"network", [&](bool c) { return suite_network(seed, c); }},
    };
    if (!args.corrupt.empty()) {
        bool known = false;
        for (const auto& [name, run] : suites) known = known || name == args.corrupt;
        if (!known) throw ValidationError("unknown gradcheck suite '" + args.corrupt + "'");
    }

    std::string failed;
    for (const auto& [name, run] : suites) {
        const SuiteOutcome s = run(name == args.corrupt);
        const bool pass = s.report.pass(tolerance);
        char line[256];
        std::snprintf(line, sizeof(line), "suite %-10s probes=%-5lld max_rel=%.3e worst=%s [%s]",
                      s.name.c_str(), static_cast<long long>(s.probes), s.report.max_rel_err,
                      s.report.worst_block.empty() ? "-" : s.report.worst_block.c_str(),
                      pass ? "PASS" : "FAIL");
        out << line << '\n';
        if (!pass && failed.empty()) failed = s.name;
    }
    if (!failed.empty()) {
        out << "gradient check failed in suite " << failed << '\n';
        return kExitNumeric;
    }
    out << "all gradient checks passed (tolerance " << tolerance << ")\n";
    return kExitOk;
}

namespace {

struct TimingStats {
    double mean_us = 0.0;
    double min_us = 0.0;
    double max_us = 0.0;
    double sd_us = 0.0;
};

template <typename F>
TimingStats time_op(F&& f, std::int64_t runs) {
    std::vector<double> samples;
    for (std::int64_t r = 0; r < runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    TimingStats s;
    s.min_us = samples[0];
    s.max_us = samples[0];
    for (double v : samples) {
        s.mean_us += v;
        s.min_us = std::min(s.min_us, v);
        s.max_us = std::max(s.max_us, v);
    }
    s.mean_us /= static_cast<double>(samples.size());
    for (double v : samples) s.sd_us += (v - s.mean_us) * (v - s.mean_us);
    s.sd_us = std::sqrt(s.sd_us / static_cast<double>(samples.size()));
    return s;
}

struct OpStats {
    std::uint64_t adds = 0;
    std::uint64_t muls = 0;
};

template <typename F>
OpStats count_ops(F&& f) {
    OpCounter::reset();
    f();
    return {OpCounter::adds, OpCounter::muls};
}

}  // namespace

int cmd_bench(const Config& cfg, const BenchArgs& args, std::ostream& out) {
    if (args.runs < 1) throw ValidationError("bench needs at least one run");
    const std::int64_t T = 8, H = 64, W = 64, C = 16;
    const ShiftPattern pattern = make_pattern(cfg.model.shift_pattern);
    const double ratio = cfg.model.channel_shift_ratio;
    Rng rng(cfg.train.seed);

    // Arithmetic-op audit on the instrumented scalar, same extents.
    Tensor<CountingScalar> xc({T, H, W, C});
    for (std::int64_t i = 0; i < xc.numel(); ++i) xc[i] = CountingScalar(rng.uniform(-1.0, 1.0));
    const OpStats patch_ops = count_ops([&] { patch_shift(xc, pattern); });
    const OpStats chan_ops = count_ops([&] { channel_shift(xc, ratio); });

    Tensor<CountingScalar> cc({C, T, H, W});
    for (std::int64_t i = 0; i < cc.numel(); ++i) cc[i] = CountingScalar(rng.uniform(-1.0, 1.0));
    Conv3dLayer<CountingScalar> conv_counted(C, C, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, "conv");
    conv_counted.init(rng, 0.02);
    const OpStats conv_ops = count_ops([&] { conv_counted.forward(cc, false); });

    // Wall time on plain floats.
    Tensor<float> xf({T, H, W, C});
    fill_random_uniform(xf, rng, -1.0, 1.0);
    Tensor<float> cf({C, T, H, W});
    fill_random_uniform(cf, rng, -1.0, 1.0);
    Conv3dLayer<float> conv(C, C, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, "conv");
    conv.init(rng, 0.02);

    double checksum = 0.0;
    const TimingStats patch_time = time_op([&] { checksum += patch_shift(xf, pattern)[0]; }, args.runs);
    const TimingStats chan_time = time_op([&] { checksum += channel_shift(xf, ratio)[0]; }, args.runs);
    const TimingStats conv_time = time_op([&] { checksum += conv.forward(cf, false)[0]; }, args.runs);

    const std::int64_t numel = T * H * W * C;
    const std::int64_t move_bytes = 2 * numel * static_cast<std::int64_t>(sizeof(float));
    const std::int64_t conv_weight_numel = C * C * 3;
    const std::int64_t conv_bytes = (2 * numel + conv_weight_numel + C) * static_cast<std::int64_t>(sizeof(float));

    char line[256];
    std::snprintf(line, sizeof(line), "volume: %lldx%lldx%lldx%lld (T x H x W x C), runs: %lld",
                  static_cast<long long>(T), static_cast<long long>(H), static_cast<long long>(W),
                  static_cast<long long>(C), static_cast<long long>(args.runs));
    out << line << '\n';
    std::snprintf(line, sizeof(line), "%-14s %12s %12s %12s %10s %10s %10s %10s", "op", "bytes_moved",
                  "adds", "muls", "mean_us", "min_us", "max_us", "sd_us");
    out << line << '\n';
    const auto row = [&](const char* name, std::int64_t bytes, const OpStats& ops, const TimingStats& t) {
        std::snprintf(line, sizeof(line), "%-14s %12lld %12llu %12llu %10.1f %10.1f %10.1f %10.1f", name,
                      static_cast<long long>(bytes), static_cast<unsigned long long>(ops.adds),
                      static_cast<unsigned long long>(ops.muls), t.mean_us, t.min_us, t.max_us, t.sd_us);
        out << line << '\n';
    };
    row("patch_shift", move_bytes, patch_ops, patch_time);
    row("channel_shift", move_bytes, chan_ops, chan_time);
    row("conv3d_3x1x1", conv_bytes, conv_ops, conv_time);
    std::snprintf(line, sizeof(line), "checksum: %.6f", checksum);
    out << line << '\n';
    return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"radar object detection on range-azimuth sequences"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool force = false;
    app.add_option("--config", config_path, "configuration file (structured text)");
    auto* seed_opt = app.add_option("--seed", seed, "override data and training seeds");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--force", force, "overwrite existing outputs");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::int64_t scenes = -1, difficulty = -1;
    synth->add_option("--scenes", scenes, "number of scenes");
    synth->add_option("--difficulty", difficulty, "scene difficulty (0 = single static object)");
    synth->fallthrough();

    auto* train = app.add_subcommand("train", "train on a synthetic dataset");
    std::string data_dir, resume;
    std::int64_t steps = -1;
    double alpha = -1.0;
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--steps", steps, "training steps");
    train->add_option("--alpha", alpha, "auxiliary loss weight");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->fallthrough();

    auto* infer = app.add_subcommand("infer", "run a checkpoint on an input volume");
    std::string checkpoint, input;
    bool dump_maps = false;
    infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer->add_option("--input", input, "input volume (record 'rf')")->required();
    infer->add_flag("--dump-maps", dump_maps, "write per-class graymap images");
    infer->fallthrough();

    auto* eval = app.add_subcommand("eval", "score detections against annotations");
    std::string detections, annotations;
    eval->add_option("--detections", detections, "detections file")->required();
    eval->add_option("--annotations", annotations, "annotations file")->required();
    eval->fallthrough();

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "verify gradients against finite differences");
    std::string corrupt;
    gradcheck_cmd->add_option("--corrupt", corrupt, "inject an untracked loss term into the named suite");
    gradcheck_cmd->fallthrough();

    auto* bench = app.add_subcommand("bench", "time shift operators against a small convolution");
    std::int64_t runs = 12;
    bench->add_option("--runs", runs, "timing repetitions");
    bench->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Config cfg = config_path.empty() ? Config{} : load_config(config_path);
        if (seed_opt->count() > 0) {
            cfg.train.seed = seed;
            cfg.data.seed = seed;
        }
        if (synth->parsed()) {
            if (scenes >= 0) cfg.data.scenes = scenes;
            if (difficulty >= 0) cfg.data.difficulty = difficulty;
            cfg.validate();
            if (out_dir.empty()) throw ValidationError("synth needs --out");
            return cmd_synth(cfg, {out_dir, force}, out);
        }
        if (train->parsed()) {
            if (steps >= 0) cfg.train.steps = steps;
            if (alpha >= 0.0) cfg.train.alpha = alpha;
            cfg.validate();
            if (out_dir.empty()) throw ValidationError("train needs --out");
            return cmd_train(cfg, {data_dir, out_dir, resume}, out);
        }
        if (infer->parsed()) {
            cfg.validate();
            if (out_dir.empty()) throw ValidationError("infer needs --out");
            return cmd_infer(cfg, {checkpoint, input, out_dir, dump_maps}, out);
        }
        if (eval->parsed()) {
            cfg.validate();
            return cmd_eval(cfg, {detections, annotations, out_dir}, out);
        }
        if (gradcheck_cmd->parsed()) {
            cfg.validate();
            return cmd_gradcheck(cfg, {corrupt}, out);
        }
        cfg.validate();
        return cmd_bench(cfg, {runs}, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "unexpected error: " << e.what() << '\n';
        return 70;
    }
}

}  // namespace radnet::cli
