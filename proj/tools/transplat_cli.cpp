#include <transplat/commands.hpp>
#include <transplat/parallel.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

using namespace transplat;

namespace {

Vec3 to_vec3(const std::vector<double>& v, const char* what) {
    if (v.size() != 3) throw ConfigError(std::string(what) + " needs exactly 3 values");
    return {v[0], v[1], v[2]};
}

int threads_from_env() {
    const char* env = std::getenv("TRANSPLAT_THREADS");
    if (!env || !*env) return 0;
    try {
        std::size_t used = 0;
        const int n = std::stoi(env, &used);
        if (used != std::string(env).size() || n < 0) throw std::invalid_argument(env);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(std::string("TRANSPLAT_THREADS must be a non-negative integer, got '") + env + "'");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian splatting with joint RGB and surface-embedding supervision"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read options from a TOML/INI file (flags override it)");

    int threads = -1;
    std::uint64_t seed = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "Worker threads (default: TRANSPLAT_THREADS, then hardware)");
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_flag("--deterministic", deterministic, "Fixed-order gradient reduction");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic transparent-object dataset");
    std::string synth_out, synth_spec;
    int synth_views = 0;
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--spec", synth_spec, "Scene spec JSON (default: built-in glass sphere scene)");
    synth->add_option("--views", synth_views, "Override the number of orbit views");

    // fit
    auto* fit = app.add_subcommand("fit", "Optimize a Gaussian cloud on a dataset");
    std::string fit_data, fit_out, fit_mode = "joint";
    std::vector<double> fit_bg;
    FitOptions fo;
    TrainConfig& tc = fo.train;
    bool no_densify = false;
    fit->add_option("--data", fit_data, "Dataset directory")->required();
    fit->add_option("--out", fit_out, "Output directory")->required();
    fit->add_option("--mode", fit_mode, "joint or rgb-only")->capture_default_str();
    fit->add_option("--iterations", tc.iterations, "Optimization steps")->capture_default_str();
    fit->add_option("--lambda", tc.lambda, "D-SSIM weight within each channel loss")->capture_default_str();
    fit->add_option("--lr-position", tc.lr.position, "Initial position rate (times scene extent)")->capture_default_str();
    fit->add_option("--lr-position-final", tc.position_lr_final, "Final position rate")->capture_default_str();
    fit->add_option("--lr-scale", tc.lr.log_scale, "Log-scale rate")->capture_default_str();
    fit->add_option("--lr-rotation", tc.lr.rotation, "Rotation rate")->capture_default_str();
    fit->add_option("--lr-opacity", tc.lr.opacity, "Opacity-logit rate")->capture_default_str();
    fit->add_option("--lr-sh-rgb", tc.lr.sh_rgb, "RGB SH rate")->capture_default_str();
    fit->add_option("--lr-sh-surf", tc.lr.sh_surf, "Embedding SH rate")->capture_default_str();
    fit->add_flag("--no-densify", no_densify, "Disable clone/split/prune");
    fit->add_flag("--mask-surf-loss", tc.mask_surf_loss, "Embedding loss only where the target embedding is non-zero");
    fit->add_option("--densify-from", tc.densify.start_iteration, "First densification iteration")
        ->capture_default_str();
    fit->add_option("--densify-until", tc.densify.stop_iteration, "Last densification iteration")
        ->capture_default_str();
    fit->add_option("--densify-interval", tc.densify.interval, "Iterations between densification steps")
        ->capture_default_str();
    fit->add_option("--densify-grad-threshold", tc.densify.grad_threshold, "Mean NDC gradient threshold")
        ->capture_default_str();
    fit->add_option("--prune-opacity", tc.densify.prune_opacity, "Prune below this opacity")->capture_default_str();
    fit->add_option("--max-kernels", tc.densify.max_kernels, "Kernel budget")->capture_default_str();
    fit->add_option("--opacity-reset-interval", tc.densify.opacity_reset_interval, "0 disables")
        ->capture_default_str();
    fit->add_option("--sh-interval", tc.sh_increase_interval, "Iterations per unlocked SH band")
        ->capture_default_str();
    fit->add_option("--sh-degree", fo.sh_degree, "RGB SH degree")->capture_default_str();
    fit->add_option("--surf-sh-degree", fo.surf_sh_degree, "Embedding SH degree")->capture_default_str();
    fit->add_option("--init-stride", fo.init_stride, "Pixel stride for the initial back-projection")
        ->capture_default_str();
    fit->add_option("--random-points", fo.random_init_points, "Random points added to the initial cloud")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    fit->add_option("--background", fit_bg, "Background RGB (default: from scene.json)")->expected(3);
    fit->add_option("--progress-every", fo.progress_every, "Progress line interval")->capture_default_str();

    // render
    auto* rnd = app.add_subcommand("render", "Render a cloud from a camera file");
    std::string rnd_ply, rnd_cams, rnd_out;
    std::vector<double> rnd_bg{0.0, 0.0, 0.0};
    rnd->add_option("--ply", rnd_ply, "Gaussian cloud PLY")->required();
    rnd->add_option("--cameras", rnd_cams, "cameras.json")->required();
    rnd->add_option("--out", rnd_out, "Output directory")->required();
    rnd->add_option("--background", rnd_bg, "Background RGB")->expected(3)->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Depth metrics of predictions against a dataset");
    std::string ev_pred, ev_gt, ev_mask = "object", ev_csv, ev_label = "prediction";
    ev->add_option("--pred", ev_pred, "Prediction directory (depth/NNNN.pfm, optional rgb/)")->required();
    ev->add_option("--gt", ev_gt, "Dataset directory")->required();
    ev->add_option("--mask", ev_mask, "object or full")->capture_default_str();
    ev->add_option("--csv", ev_csv, "Write per-view metrics CSV here");
    ev->add_option("--label", ev_label, "Row label in the console table")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        set_thread_count(threads >= 0 ? threads : threads_from_env());
        std::cerr << "# effective configuration\n" << app.config_to_str(true, false);
        std::cerr << "# threads = " << thread_count() << "\n";

        if (*synth) {
            SynthOptions so;
            if (!synth_spec.empty()) so.spec_path = synth_spec;
            if (synth->count("--views")) so.views = synth_views;
            if (app.count("--seed")) so.seed = seed;
            const SynthResult r = cmd_synth(so, synth_out);
            std::cout << "views " << r.dataset.views.size() << " seed " << r.spec.seed << "\n";
        } else if (*fit) {
            fo.mode = parse_fit_mode(fit_mode);
            tc.seed = seed;
            tc.deterministic = deterministic;
            tc.densify.enabled = !no_densify;
            if (!fit_bg.empty()) fo.background = to_vec3(fit_bg, "--background");
            const FitResult r = cmd_fit(fit_data, fit_out, fo);
            std::cerr << "fit: final loss " << r.final_loss << ", " << r.cloud.size() << " kernels\n";
            if (r.heldout) std::cerr << format_eval_table(*r.heldout, fit_mode_name(fo.mode));
        } else if (*rnd) {
            std::vector<std::string> warnings;
            const auto views = cmd_render(rnd_ply, rnd_cams, rnd_out, to_vec3(rnd_bg, "--background"), &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
            std::cerr << "render: " << views.size() << " views written to " << rnd_out << "\n";
        } else if (*ev) {
            const EvalResult r = cmd_eval(ev_pred, ev_gt, parse_mask_mode(ev_mask));
            if (!ev_csv.empty()) write_file_bytes(ev_csv, format_eval_csv(r));
            std::cout << format_eval_table(r, ev_label);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
