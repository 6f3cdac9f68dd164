// mge: command-line front end for the motion-graph prediction pipeline.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mge/io.hpp"
#include "mge/ops.hpp"
#include "mge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mge;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape), DType::f64);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, d(gen));
    return t;
}

// Max relative error between one analytic backward pass and central finite
// differences over every entry of every input (f64).
double fd_check(std::vector<Tensor*> inputs, const std::function<Tensor()>& forward, double h = 1e-6) {
    double max_rel = 0.0;
    std::vector<Tensor> grads;
    {
        Tape tape;
        for (Tensor* in : inputs) tape.track(*in, /*leaf=*/true);
        Tensor loss = forward();
        tape.backward(loss);
        for (Tensor* in : inputs) grads.push_back(in->grad().clone());
        for (Tensor* in : inputs) in->grad().fill(0.0);
    }
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        Tensor& x = *inputs[ii];
        for (int64_t i = 0; i < x.numel(); ++i) {
            double orig = x.at(i);
            double hh = h * std::max(1.0, std::abs(orig));
            x.set(i, orig + hh);
            double lp = forward().at(0);
            x.set(i, orig - hh);
            double lm = forward().at(0);
            x.set(i, orig);
            double fd = (lp - lm) / (2.0 * hh);
            double an = grads[ii].at(i);
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            double rel = std::abs(fd - an) / denom;
            if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) rel = 0.0;
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

std::vector<SyntheticScene> load_scene_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".scene") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("no .scene files found in " + dir);
    std::vector<SyntheticScene> scenes;
    for (const auto& p : paths) {
        SyntheticScene s = parse_scene_spec(read_text_file(p));
        validate_scene(s);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    SyntheticScene scene = parse_scene_spec(read_text_file(spec_path));
    validate_scene(scene);
    fs::create_directories(out_dir);
    char name[64];
    for (int64_t t = 0; t < scene.frames; ++t) {
        std::snprintf(name, sizeof(name), "frame_%03lld.ppm", static_cast<long long>(t));
        write_ppm((fs::path(out_dir) / name).string(), render_frame(scene, t));
        if (t + 1 < scene.frames) {
            std::snprintf(name, sizeof(name), "disp_%03lld.mgt", static_cast<long long>(t));
            save_mgt(displacement_field(scene, t), (fs::path(out_dir) / name).string());
        }
    }
    std::cout << "wrote " << scene.frames << " frames to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              int64_t steps_override, uint64_t seed_override, bool seed_given) {
    PipelineConfig cfg = load_config(config_path);
    if (seed_given) cfg.seed = seed_override;
    cfg.validate();
    std::vector<SyntheticScene> scenes = load_scene_dir(data_dir);
    ParamStore ps;
    Rng rng(cfg.seed);
    build_model(ps, cfg, rng);
    OptimizerState opt;
    opt.lr_base = cfg.lr_base;
    opt.lr_final = cfg.lr_final;
    opt.weight_decay = cfg.weight_decay;
    int64_t steps = steps_override > 0 ? steps_override : cfg.train_steps;
    opt.total_steps = steps;
    TrainResult tr = train(scenes, ps, cfg, opt, steps);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "step,loss\n";
    for (size_t i = 0; i < tr.loss_history.size(); ++i) csv << i << "," << tr.loss_history[i] << "\n";
    write_text_file((fs::path(out_dir) / "loss.csv").string(), csv.str());
    save_checkpoint(out_dir, ps, cfg);
    std::cout << "trained " << steps << " steps; first loss " << tr.loss_history.front() << ", last loss "
              << tr.loss_history.back() << "; checkpoint in " << out_dir << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_dir, const std::vector<std::string>& frame_paths, int64_t steps,
                const std::string& out_dir) {
    ParamStore ps;
    PipelineConfig cfg = load_checkpoint(ckpt_dir, ps);
    if (static_cast<int64_t>(frame_paths.size()) != cfg.T)
        throw std::runtime_error("predict: checkpoint expects " + std::to_string(cfg.T) + " input frames, got " +
                                 std::to_string(frame_paths.size()));
    std::vector<Tensor> frames;
    for (const auto& p : frame_paths) frames.push_back(read_ppm(p, cfg.dtype));
    fs::create_directories(out_dir);
    std::vector<Tensor> window = frames;
    char name[64];
    for (int64_t s = 0; s < steps; ++s) {
        ForwardResult r = forward(window, ps, cfg);
        std::snprintf(name, sizeof(name), "pred_%03lld.ppm", static_cast<long long>(s));
        write_ppm((fs::path(out_dir) / name).string(), r.prediction);
        std::snprintf(name, sizeof(name), "field_%03lld.mgt", static_cast<long long>(s));
        save_mgt(r.field, (fs::path(out_dir) / name).string());
        window.erase(window.begin());
        window.push_back(r.prediction);
    }
    std::cout << "wrote " << steps << " predictions to " << out_dir << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& config_path, const std::string& op_filter, uint64_t seed) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    std::mt19937_64 gen(seed);
    struct Suite {
        std::string name;
        std::function<double()> run;
    };
    std::vector<Suite> suites;
    suites.push_back({"matmul", [&gen] {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({4, 2}, gen);
        return fd_check({&a, &b}, [&] { return ops::sum_all(ops::matmul(a, b)); });
    }});
    suites.push_back({"linear", [&gen] {
        Tensor x = random_tensor({5, 3}, gen), w = random_tensor({3, 4}, gen), b = random_tensor({4}, gen);
        return fd_check({&x, &w, &b}, [&] { return ops::sum_all(ops::linear(x, w, b)); });
    }});
    suites.push_back({"conv2d", [&gen] {
        Tensor x = random_tensor({1, 2, 5, 5}, gen), w = random_tensor({3, 2, 3, 3}, gen), b = random_tensor({3}, gen);
        return fd_check({&x, &w, &b}, [&] { return ops::sum_all(ops::conv2d(x, w, b, 2, 1)); });
    }});
    suites.push_back({"leaky_relu", [&gen] {
        Tensor x = random_tensor({4, 4}, gen);
        return fd_check({&x}, [&] { return ops::sum_all(ops::leaky_relu(x, 0.2)); });
    }});
    suites.push_back({"elementwise", [&gen] {
        Tensor a = random_tensor({3, 3}, gen), b = random_tensor({3, 3}, gen);
        return fd_check({&a, &b}, [&] { return ops::sum_all(ops::mul(ops::tanh(ops::add(a, b)), ops::exp(b))); });
    }});
    suites.push_back({"max_over_groups", [&gen] {
        Tensor x = random_tensor({12, 3}, gen);
        return fd_check({&x}, [&] { return ops::sum_all(ops::mul(ops::max_over_groups(x, 4, 3, 3),
                                                                  ops::max_over_groups(x, 4, 3, 3))); });
    }});
    suites.push_back({"pixel_shuffle", [&gen] {
        Tensor x = random_tensor({1, 8, 3, 3}, gen);
        return fd_check({&x}, [&] {
            Tensor y = ops::pixel_shuffle(x, 2);
            return ops::sum_all(ops::mul(ops::pixel_unshuffle(y, 2), x));
        });
    }});
    suites.push_back({"cosine", [&gen] {
        Tensor a = random_tensor({4, 5}, gen), b = random_tensor({3, 5}, gen);
        return fd_check({&a, &b}, [&] { return ops::sum_all(ops::cosine_similarity_rows(a, b, 1e-8)); });
    }});
    suites.push_back({"layout", [&gen] {
        Tensor a = random_tensor({3, 2}, gen), b = random_tensor({3, 4}, gen);
        return fd_check({&a, &b}, [&] {
            Tensor c = ops::concat_cols({a, b});
            Tensor s = ops::slice_cols(c, 1, 4);
            Tensor g = ops::gather_rows(s, {2, 0, 1, 2});
            return ops::sum_all(ops::mul(g, g));
        });
    }});
    suites.push_back({"warp", [&gen] {
        std::uniform_real_distribution<double> d01(0.0, 1.0), dd(-1.2, 1.2);
        Tensor frames({2, 4, 4, 3}, DType::f64), field({2 * 4 * 4, 3}, DType::f64);
        for (int64_t i = 0; i < frames.numel(); ++i) frames.set(i, d01(gen));
        for (int64_t i = 0; i < field.numel(); ++i) field.set(i, dd(gen));
        WarpConfig wc;
        return fd_check({&frames, &field}, [&] {
            Tensor out = forward_warp(frames, field, 1, wc);
            return ops::sum_all(ops::mul(out, out));
        });
    }});
    suites.push_back({"pipeline", [&gen] {
        PipelineConfig toy;
        toy.H = 8; toy.W = 8; toy.T = 2; toy.M = 1; toy.k = 2; toy.d_tf = 3; toy.d_lf = 2;
        toy.C_img = 3; toy.dtype = DType::f64;
        ParamStore ps;
        Rng rng(11);
        build_model(ps, toy, rng);
        std::vector<Tensor> frames;
        std::uniform_real_distribution<double> d01(0.0, 1.0);
        for (int64_t t = 0; t < toy.T; ++t) {
            Tensor f({toy.H, toy.W, 3}, DType::f64);
            for (int64_t i = 0; i < f.numel(); ++i) f.set(i, d01(gen));
            frames.push_back(f);
        }
        Tensor target({toy.H, toy.W, 3}, DType::f64);
        for (int64_t i = 0; i < target.numel(); ++i) target.set(i, d01(gen));
        auto fwd = [&] {
            ForwardResult r = forward(frames, ps, toy);
            return loss(r.prediction, target, LossKind::mse);
        };
        // Entrywise FD drowns in roundoff for the tiniest end-to-end
        // gradients, so check the directional derivative along the analytic
        // gradient: fd must equal ||g||.
        std::vector<Tensor> grads;
        {
            Tape tape;
            for (auto& p : ps.all()) tape.track(p.value, /*leaf=*/true);
            Tensor l = fwd();
            tape.backward(l);
            for (auto& p : ps.all()) grads.push_back(p.grad().clone());
            for (auto& p : ps.all()) p.grad().fill(0.0);
        }
        double gnorm = 0;
        for (auto& g : grads)
            for (int64_t i = 0; i < g.numel(); ++i) gnorm += g.at(i) * g.at(i);
        gnorm = std::sqrt(gnorm);
        auto shift = [&](double s) {
            for (size_t pi = 0; pi < grads.size(); ++pi) {
                auto& v = ps.all()[pi].value;
                for (int64_t i = 0; i < v.numel(); ++i) v.set(i, v.at(i) + s * grads[pi].at(i) / gnorm);
            }
        };
        double h = 1e-6;
        shift(+h);
        double lp = fwd().at(0);
        shift(-2 * h);
        double lm = fwd().at(0);
        shift(+h);
        double fd = (lp - lm) / (2 * h);
        return std::abs(fd - gnorm) / std::max(std::abs(fd), gnorm);
    }});

    bool any = false, failed = false;
    for (auto& s : suites) {
        if (!op_filter.empty() && s.name != op_filter) continue;
        any = true;
        double rel = s.run();
        bool ok = rel < 1e-6;
        failed |= !ok;
        std::cout << s.name << " max_rel_err " << rel << (ok ? " ok" : " FAIL") << "\n";
    }
    if (!any) throw std::runtime_error("gradcheck: unknown op '" + op_filter + "'");
    return failed ? 2 : 0;
}

int cmd_bench(const std::string& sizes_csv, int64_t T, int64_t k) {
    std::vector<std::pair<int64_t, int64_t>> sizes;
    std::istringstream ss(sizes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        int64_t n = std::stoll(tok);
        if (n < 1) throw std::runtime_error("bench: sizes must be positive");
        int64_t hs = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
        while (hs > 1 && n % hs != 0) --hs;
        sizes.emplace_back(hs, n / hs);
    }
    if (sizes.empty()) throw std::runtime_error("bench: no sizes given");
    MemoryBenchReport rep = bench_memory(sizes, T, k);
    std::cout << "n,hs,ws,graph_bytes,dense_bytes\n";
    for (const auto& r : rep.rows)
        std::cout << r.n << "," << r.hs << "," << r.ws << "," << r.graph_bytes << "," << r.dense_bytes << "\n";
    std::cout << "slope,graph," << rep.graph_slope << "\nslope,dense," << rep.dense_slope << "\n";
    return 0;
}

int cmd_dump_graph(const std::string& config_path, const std::vector<std::string>& frame_paths, uint64_t seed) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    cfg.seed = seed;
    cfg.validate();
    std::vector<Tensor> frames;
    for (const auto& p : frame_paths) frames.push_back(read_ppm(p, cfg.dtype));
    if (static_cast<int64_t>(frames.size()) != cfg.T)
        throw std::runtime_error("dump-graph: config expects " + std::to_string(cfg.T) + " frames, got " +
                                 std::to_string(frames.size()));
    ParamStore ps;
    Rng rng(cfg.seed);
    build_model(ps, cfg, rng);
    ForwardResult r = forward(frames, ps, cfg);
    std::cout << dump_graph_text(r.graph, cfg.resolved_k());
    return 0;
}

int cmd_summary(const std::string& config_path) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    cfg.validate();
    ParamStore ps;
    Rng rng(cfg.seed);
    build_model(ps, cfg, rng);
    std::cout << "grid " << cfg.Hs() << "x" << cfg.Ws() << " k " << cfg.resolved_k() << "\n";
    for (const auto& [group, count] : parameter_summary(ps)) std::cout << group << " " << count << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-graph video prediction pipeline"};
    app.require_subcommand(1);
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    app.add_option("--seed", seed, "RNG seed")->each([&seed_given](const std::string&) { seed_given = true; });
    app.add_option("--threads", threads, "worker cap (also MGE_THREADS)");

    std::string spec_path, out_dir, config_path, data_dir, ckpt_dir, op_filter, sizes_csv = "256,1024,4096";
    std::vector<std::string> frame_paths;
    int64_t steps = 1, train_steps = 0, bench_T = 4, bench_k = 4;

    auto* synth = app.add_subcommand("synth", "render a synthetic scene");
    synth->add_option("--spec", spec_path, "scene spec file")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train on a directory of .scene specs");
    tr->add_option("--config", config_path, "pipeline config")->required();
    tr->add_option("--data", data_dir, "directory of .scene files")->required();
    tr->add_option("--out", out_dir, "checkpoint directory")->required();
    tr->add_option("--steps", train_steps, "override train_steps");

    auto* pred = app.add_subcommand("predict", "autoregressive rollout from a checkpoint");
    pred->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    pred->add_option("--frames", frame_paths, "T input frames (PPM)")->required();
    pred->add_option("--steps", steps, "rollout length");
    pred->add_option("--out", out_dir, "output directory")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    gc->add_option("--config", config_path, "pipeline config (optional)");
    gc->add_option("--op", op_filter, "run a single suite");

    auto* bench = app.add_subcommand("bench", "graph vs dense storage benchmark");
    bench->add_option("--sizes", sizes_csv, "comma-separated node counts");
    bench->add_option("--T", bench_T, "frames");
    bench->add_option("--k", bench_k, "neighbors per node");

    auto* dump = app.add_subcommand("dump-graph", "emit the edge text format");
    dump->add_option("--config", config_path, "pipeline config (optional)");
    dump->add_option("--frames", frame_paths, "T input frames (PPM)")->required();

    auto* summary = app.add_subcommand("summary", "parameter counts per module");
    summary->add_option("--config", config_path, "pipeline config (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // exit 1 on any usage error, 0 for --help
    }

    if (const char* env = std::getenv("MGE_THREADS"); env && threads == 0) threads = std::atoi(env);
    (void)threads;  // compute is single-threaded; the cap is accepted for interface stability

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_dir);
        if (tr->parsed()) return cmd_train(config_path, data_dir, out_dir, train_steps, seed, seed_given);
        if (pred->parsed()) return cmd_predict(ckpt_dir, frame_paths, steps, out_dir);
        if (gc->parsed()) return cmd_gradcheck(config_path, op_filter, seed_given ? seed : 0);
        if (bench->parsed()) return cmd_bench(sizes_csv, bench_T, bench_k);
        if (dump->parsed()) return cmd_dump_graph(config_path, frame_paths, seed);
        if (summary->parsed()) return cmd_summary(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
