// rapnet: train / fuse / evaluate / ablate / gradcheck / simulate in one binary.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "rapnet/data_io.hpp"
#include "rapnet/gradcheck_suite.hpp"
#include "rapnet/metrics.hpp"
#include "rapnet/training.hpp"

namespace fs = std::filesystem;
using namespace rapnet;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- run configuration: TOML-style key=value file + dotted-key overrides ----

struct RunConfig {
    TrainConfig train;
    Hyper net;
    DegradeSpec degrade;

    void set(const std::string& key, const std::string& raw) {
        auto as_int = [&] {
            try {
                std::size_t used = 0;
                const int v = std::stoi(raw, &used);
                if (used != raw.size()) throw std::invalid_argument(raw);
                return v;
            } catch (const std::exception&) {
                throw UsageError("config: '" + key + "' expects an integer, got '" + raw + "'");
            }
        };
        auto as_double = [&] {
            try {
                std::size_t used = 0;
                const double v = std::stod(raw, &used);
                if (used != raw.size()) throw std::invalid_argument(raw);
                return v;
            } catch (const std::exception&) {
                throw UsageError("config: '" + key + "' expects a number, got '" + raw + "'");
            }
        };
        auto as_bool = [&] {
            if (raw == "true" || raw == "1") return true;
            if (raw == "false" || raw == "0") return false;
            throw UsageError("config: '" + key + "' expects true/false, got '" + raw + "'");
        };
        if (key == "train.lr") train.lr = as_double();
        else if (key == "train.batch_size") train.batch_size = as_int();
        else if (key == "train.epochs") train.epochs = as_int();
        else if (key == "train.beta1") train.beta1 = as_double();
        else if (key == "train.beta2") train.beta2 = as_double();
        else if (key == "train.eps") train.eps = as_double();
        else if (key == "train.seed") train.seed = static_cast<std::uint64_t>(std::stoull(raw));
        else if (key == "train.checkpoint_every") train.checkpoint_every = as_int();
        else if (key == "train.grad_clip") train.grad_clip = as_double();
        else if (key == "net.bands") net.bands = as_int();
        else if (key == "net.features") net.features = as_int();
        else if (key == "net.ratio") net.ratio = as_int();
        else if (key == "net.ghbm_hidden") net.ghbm_hidden = as_int();
        else if (key == "net.ablate_rapconv") net.ablate_rapconv = as_bool();
        else if (key == "degrade.gnyq") degrade.gnyq = as_double();
        else if (key == "degrade.ratio") degrade.ratio = as_int();
        else throw UsageError("config: unknown key '" + key + "'");
    }

    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                s.erase(0, s.find_first_not_of(" \t\r"));
                s.erase(s.find_last_not_of(" \t\r") + 1);
                return s;
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void apply_overrides(const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
            set(kv.substr(0, eq), kv.substr(eq + 1));
        }
    }

    std::string echo() const {
        std::ostringstream ss;
        ss.precision(17);
        ss << "train.lr = " << train.lr << "\n"
           << "train.batch_size = " << train.batch_size << "\n"
           << "train.epochs = " << train.epochs << "\n"
           << "train.beta1 = " << train.beta1 << "\n"
           << "train.beta2 = " << train.beta2 << "\n"
           << "train.eps = " << train.eps << "\n"
           << "train.seed = " << train.seed << "\n"
           << "train.checkpoint_every = " << train.checkpoint_every << "\n"
           << "train.grad_clip = " << train.grad_clip << "\n"
           << "net.bands = " << net.bands << "\n"
           << "net.features = " << net.features << "\n"
           << "net.ratio = " << net.ratio << "\n"
           << "net.ghbm_hidden = " << net.ghbm_hidden << "\n"
           << "net.ablate_rapconv = " << (net.ablate_rapconv ? "true" : "false") << "\n"
           << "degrade.gnyq = " << degrade.gnyq << "\n"
           << "degrade.ratio = " << degrade.ratio << "\n";
        return ss.str();
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << text;
}

TensorD to_single_image(const TensorF& t, const std::string& what) {
    if (t.n != 1) throw ShapeError(what + ": expected a single image, got " + t.shape_str());
    return t.cast<double>();
}

// one trained run: returns the final mean epoch loss
double run_training(const std::vector<FusionPair>& pairs, const RunConfig& rc,
                    RapNetParams<float>& params, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text((out_dir / "config.txt").string(), rc.echo());
    double final_loss = 0.0;
    TrainResult result = train(
        pairs, rc.train, params,
        [&](int epoch, double loss) {
            final_loss = loss;
            std::cout << "epoch " << epoch << " loss " << loss << std::endl;
        },
        [&](int epoch) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_epoch%04d.rapn", epoch + 1);
            save_checkpoint(params, (out_dir / name).string());
        });
    save_checkpoint(params, (out_dir / "model.rapn").string());
    write_loss_csv(result.curve, (out_dir / "loss.csv").string());
    return final_loss;
}

// ---- subcommand bodies ----

int cmd_train(const RunConfig& rc0, const std::string& manifest, const std::string& out,
              bool ablate) {
    RunConfig rc = rc0;
    rc.net.ablate_rapconv = ablate || rc.net.ablate_rapconv;
    rc.train.validate();
    rc.net.validate();
    const auto entries = load_manifest(manifest);
    const auto pairs = load_pairs(entries, rc.net.ratio, /*require_ref=*/true);
    RapNetParams<float> params = RapNetParams<float>::init(rc.net, rc.train.seed);
    std::cout << rc.echo();
    std::cout << "training on " << pairs.size() << " pairs, " << params.param_count()
              << " parameters" << std::endl;
    const double final_loss = run_training(pairs, rc, params, out);
    std::cout << "final epoch loss " << final_loss << "; model written to " << out << "/model.rapn"
              << std::endl;
    return 0;
}

int cmd_ablate(const RunConfig& rc0, const std::string& manifest, const std::string& out) {
    RunConfig rc = rc0;
    rc.train.validate();
    rc.net.validate();
    const auto entries = load_manifest(manifest);
    auto pairs = load_pairs(entries, rc.net.ratio, /*require_ref=*/true);
    if (pairs.size() < 2)
        throw ValueError("ablate: need at least 2 pairs (one is held out for evaluation)");
    // hold out the last pair for the metric comparison
    FusionPair held = std::move(pairs.back());
    pairs.pop_back();

    struct Variant {
        std::string name;
        bool ablate;
        double final_loss = 0.0;
        std::int64_t params = 0;
        MetricsReport report;
    };
    std::vector<Variant> variants = {{"full", false, 0.0, 0, {}}, {"ablated", true, 0.0, 0, {}}};
    for (auto& var : variants) {
        RunConfig vrc = rc;
        vrc.net.ablate_rapconv = var.ablate;
        RapNetParams<float> params = RapNetParams<float>::init(vrc.net, vrc.train.seed);
        var.params = params.param_count();
        std::cout << "== " << var.name << " model (" << var.params << " parameters) ==" << std::endl;
        var.final_loss = run_training(pairs, vrc, params, fs::path(out) / var.name);
        const TensorF fused = rapnet_infer(params, held.pan, held.ms);
        var.report = reduced_report({fused.cast<double>()}, {held.ref->cast<double>()},
                                    vrc.net.ratio);
    }

    std::ostringstream cmp;
    cmp << "variant,parameters,final_loss";
    for (const auto& n : variants[0].report.metric_names) cmp << "," << n;
    cmp << "\n";
    cmp.precision(12);
    for (const auto& var : variants) {
        cmp << var.name << "," << var.params << "," << var.final_loss;
        for (double v : var.report.mean) cmp << "," << v;
        cmp << "\n";
    }
    fs::create_directories(out);
    write_text((fs::path(out) / "comparison.csv").string(), cmp.str());
    std::cout << "\nheld-out pair comparison:\n" << cmp.str();
    for (const auto& var : variants)
        std::cout << "\n" << var.name << " reduced metrics:\n" << var.report.summary_lines();
    return 0;
}

int cmd_fuse(const std::string& ckpt, const std::string& pan_path, const std::string& ms_path,
             const std::string& out_path, const std::string& png_path,
             const std::string& png_bands) {
    RapNetParams<float> params = load_checkpoint(ckpt);
    TensorF pan = load_array(pan_path);
    TensorF ms = load_array(ms_path);
    if (ms.c != params.hyper.bands)
        throw ShapeError("fuse: checkpoint expects " + std::to_string(params.hyper.bands) +
                         " bands, MS has " + std::to_string(ms.c));
    if (pan.h != ms.h * params.hyper.ratio || pan.w != ms.w * params.hyper.ratio)
        throw ShapeError("fuse: checkpoint ratio " + std::to_string(params.hyper.ratio) +
                         " does not relate PAN " + pan.shape_str() + " to MS " + ms.shape_str());
    float peak = 1.0f;
    for (float v : pan.data) peak = std::max(peak, v);
    for (float v : ms.data) peak = std::max(peak, v);
    const float inv = 1.0f / peak;
    for (auto& v : pan.data) v *= inv;
    for (auto& v : ms.data) v *= inv;
    TensorF fused = rapnet_infer(params, pan, ms);
    for (auto& v : fused.data) v *= peak;
    if (!fused.all_finite()) throw NumericError("fuse: non-finite values in the fused output");

    if (out_path.size() > 5 && out_path.substr(out_path.size() - 5) == ".rapt")
        save_rapt(fused, out_path);
    else
        save_npy(fused, out_path);
    std::cout << "fused " << fused.shape_str() << " -> " << out_path << std::endl;

    if (!png_path.empty()) {
        std::vector<int> bands;
        std::stringstream ss(png_bands);
        std::string tok;
        while (std::getline(ss, tok, ',')) bands.push_back(std::stoi(tok));
        export_png(fused, bands, png_path);
        std::cout << "preview -> " << png_path << std::endl;
    }
    return 0;
}

int cmd_eval(bool reduced, const std::vector<std::string>& fused_paths,
             const std::vector<std::string>& second, const std::vector<std::string>& pan_paths,
             int ratio, double gnyq, const std::string& out_prefix) {
    if (fused_paths.empty()) throw UsageError("eval: at least one --fused file required");
    if (fused_paths.size() != second.size())
        throw UsageError(reduced ? "eval-reduced: --fused and --ref counts differ"
                                 : "eval-full: --fused and --ms counts differ");
    std::vector<TensorD> fused, other, pans;
    for (const auto& p : fused_paths) fused.push_back(to_single_image(load_array(p), "fused"));
    for (const auto& p : second) other.push_back(to_single_image(load_array(p), "reference/ms"));
    MetricsReport rep;
    if (reduced) {
        rep = reduced_report(fused, other, ratio);
    } else {
        if (pan_paths.size() != fused_paths.size())
            throw UsageError("eval-full: --fused and --pan counts differ");
        for (const auto& p : pan_paths) pans.push_back(to_single_image(load_array(p), "pan"));
        rep = full_report(fused, other, pans, ratio, gnyq);
    }
    std::cout << rep.summary_lines();
    if (!out_prefix.empty()) {
        rep.write_json(out_prefix + ".json");
        rep.write_csv(out_prefix + ".csv");
        std::cout << "reports -> " << out_prefix << ".json / .csv" << std::endl;
    }
    return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
    const double tol = 1e-4;
    std::vector<GradCheckEntry> worst;
    auto fold = [&](const GradCheckEntry& e) {
        for (auto& w : worst)
            if (w.name == e.name) {
                w.err = std::max(w.err, e.err);
                return;
            }
        worst.push_back(e);
    };
    for (std::uint64_t s : {seed, seed + 101, seed + 202}) {
        if (scope == "ops" || scope == "all")
            for (const auto& e : gradcheck_ops(s)) fold(e);
        if (scope == "rapconv" || scope == "all") fold(gradcheck_rapconv(s));
        if (scope == "network" || scope == "all") fold(gradcheck_micro_network(s));
    }
    bool ok = true;
    std::printf("%-20s %-14s %s\n", "check", "max rel err", "status");
    for (const auto& e : worst) {
        const bool pass = e.err < tol;
        ok = ok && pass;
        std::printf("%-20s %-14.3e %s\n", e.name.c_str(), e.err, pass ? "ok" : "FAIL");
    }
    if (!ok) throw NumericError("gradient check failed (tolerance 1e-4)");
    return 0;
}

int cmd_simulate(const std::string& hrms_path, const std::string& pan_path, int ratio, double gnyq,
                 const std::string& out) {
    TensorF hrms = load_array(hrms_path);
    TensorF pan = load_array(pan_path);
    DegradeSpec spec;
    spec.ratio = ratio;
    spec.gnyq = gnyq;
    FusionPair pair = wald_degrade(hrms, pan, spec);
    fs::create_directories(out);
    const fs::path dir(out);
    save_npy(pair.ms, (dir / "ms.npy").string());
    save_npy(pair.pan, (dir / "pan.npy").string());
    save_npy(*pair.ref, (dir / "ref.npy").string());
    write_manifest({{(dir / "pan.npy").string(), (dir / "ms.npy").string(),
                     (dir / "ref.npy").string()}},
                   (dir / "manifest.json").string());
    std::cout << "simulated pair: ms " << pair.ms.shape_str() << ", pan " << pair.pan.shape_str()
              << ", ref " << pair.ref->shape_str() << " -> " << out << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RAPNet pansharpening toolkit"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = hardware)")->capture_default_str();

    // shared config plumbing for train/ablate
    std::string config_path, manifest, out_dir;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;

    auto add_run_opts = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--set", overrides, "dotted-key override, e.g. train.lr=1e-4")
            ->take_all();
        sub->add_option("--data", manifest, "dataset manifest (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
            seed_given = true;
        });
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest");
    add_run_opts(train_cmd);
    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "train full + ablated variants from one seed and compare");
    add_run_opts(ablate_cmd);

    CLI::App* fuse_cmd = app.add_subcommand("fuse", "pansharpen one PAN/MS pair");
    std::string ckpt, pan_path, ms_path, fuse_out, png_path, png_bands = "0";
    fuse_cmd->add_option("--checkpoint", ckpt)->required();
    fuse_cmd->add_option("--pan", pan_path)->required();
    fuse_cmd->add_option("--ms", ms_path)->required();
    fuse_cmd->add_option("--out", fuse_out, ".npy or .rapt output")->required();
    fuse_cmd->add_option("--png", png_path, "optional PNG preview path");
    fuse_cmd->add_option("--png-bands", png_bands, "comma-separated bands for the preview");

    std::vector<std::string> ev_fused, ev_refs, ev_ms, ev_pan;
    int ev_ratio = 4;
    double ev_gnyq = 0.3;
    std::string ev_out;
    CLI::App* evr = app.add_subcommand("eval-reduced", "reference metrics (ERGAS/SAM/Q2n/SCC)");
    evr->add_option("--fused", ev_fused)->required()->take_all();
    evr->add_option("--ref", ev_refs)->required()->take_all();
    evr->add_option("--ratio", ev_ratio)->capture_default_str();
    evr->add_option("--out", ev_out, "report path prefix (.json/.csv appended)");
    CLI::App* evf = app.add_subcommand("eval-full", "no-reference metrics (D_lambda/D_S/QNR)");
    evf->add_option("--fused", ev_fused)->required()->take_all();
    evf->add_option("--ms", ev_ms)->required()->take_all();
    evf->add_option("--pan", ev_pan)->required()->take_all();
    evf->add_option("--ratio", ev_ratio)->capture_default_str();
    evf->add_option("--gnyq", ev_gnyq)->capture_default_str();
    evf->add_option("--out", ev_out, "report path prefix (.json/.csv appended)");

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit of the autodiff core");
    std::string gc_scope = "all";
    std::uint64_t gc_seed = 101;
    gc->add_option("--scope", gc_scope)->check(CLI::IsMember({"ops", "rapconv", "network", "all"}));
    gc->add_option("--seed", gc_seed)->capture_default_str();

    CLI::App* sim = app.add_subcommand("simulate", "Wald-protocol degradation of an HRMS/PAN pair");
    std::string sim_hrms, sim_pan, sim_out;
    int sim_ratio = 4;
    double sim_gnyq = 0.3;
    sim->add_option("--hrms", sim_hrms)->required();
    sim->add_option("--pan", sim_pan)->required();
    sim->add_option("--ratio", sim_ratio)->capture_default_str();
    sim->add_option("--gnyq", sim_gnyq)->capture_default_str();
    sim->add_option("--out", sim_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        set_num_threads(threads);
        if (*train_cmd || *ablate_cmd) {
            RunConfig rc;
            if (!config_path.empty()) rc.load_file(config_path);
            rc.apply_overrides(overrides);
            if (seed_given) rc.train.seed = seed;
            return *train_cmd ? cmd_train(rc, manifest, out_dir, false)
                              : cmd_ablate(rc, manifest, out_dir);
        }
        if (*fuse_cmd) return cmd_fuse(ckpt, pan_path, ms_path, fuse_out, png_path, png_bands);
        if (*evr) return cmd_eval(true, ev_fused, ev_refs, {}, ev_ratio, ev_gnyq, ev_out);
        if (*evf) return cmd_eval(false, ev_fused, ev_ms, ev_pan, ev_ratio, ev_gnyq, ev_out);
        if (*gc) return cmd_gradcheck(gc_scope, gc_seed);
        if (*sim) return cmd_simulate(sim_hrms, sim_pan, sim_ratio, sim_gnyq, sim_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return 3;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 1;
}
