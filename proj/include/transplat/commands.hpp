#pragma once

// Pipeline commands behind the transplat CLI: synth, fit, render, eval.

#include <transplat/io.hpp>
#include <transplat/metrics.hpp>
#include <transplat/synth.hpp>
#include <transplat/trainer.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace transplat {

enum class FitMode { joint, rgb_only };

inline const char* fit_mode_name(FitMode m) { return m == FitMode::joint ? "joint" : "rgb-only"; }

inline FitMode parse_fit_mode(const std::string& s) {
    if (s == "joint") return FitMode::joint;
    if (s == "rgb-only") return FitMode::rgb_only;
    throw ConfigError("unknown mode '" + s + "' (expected joint or rgb-only)");
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::optional<fs::path> spec_path;
    std::optional<int> views;
    std::optional<std::uint64_t> seed;
    int holdout_stride = 4;
};

struct SynthResult {
    SceneSpec spec;
    Dataset dataset;
};

inline SynthResult cmd_synth(const SynthOptions& opt, const fs::path& out_dir) {
    SynthResult r;
    r.spec = opt.spec_path ? scene_from_json(read_json(*opt.spec_path)) : default_scene_spec();
    if (opt.views) r.spec.orbit.count = *opt.views;
    if (opt.seed) r.spec.seed = *opt.seed;
    if (opt.holdout_stride < 2) throw ConfigError("holdout stride must be >= 2");
    r.spec.validate();
    r.dataset.views = generate_views(r.spec);
    r.dataset.train = train_view_indices(r.spec.orbit.count, opt.holdout_stride);
    r.dataset.test = test_view_indices(r.spec.orbit.count, opt.holdout_stride);
    try {
        fs::create_directories(out_dir);
    } catch (const fs::filesystem_error& e) {
        throw ValidationError("cannot create output directory '" + out_dir.string() + "': " + e.what());
    }
    write_dataset(out_dir, r.dataset, scene_to_json(r.spec));
    return r;
}

// ---------------------------------------------------------------------------
// render

struct RenderedView {
    int view = 0;
    RenderOutput output;
};

/// Camera list with optional per-entry "view" ids (position otherwise).
inline std::vector<int> read_camera_view_ids(const fs::path& path) {
    const json j = read_json(path);
    std::vector<int> ids;
    for (std::size_t i = 0; i < j.size(); ++i) ids.push_back(j[i].value("view", static_cast<int>(i)));
    return ids;
}

inline void write_cameras_with_ids(const std::vector<Camera>& cams, const std::vector<int>& ids, const fs::path& path) {
    json arr = json::array();
    for (std::size_t i = 0; i < cams.size(); ++i) {
        json c = camera_to_json(cams[i]);
        c["view"] = ids[i];
        arr.push_back(std::move(c));
    }
    write_json(arr, path);
}

inline void write_render(const RenderOutput& out, const fs::path& dir, int view) {
    for (const char* sub : {"rgb", "surf", "depth", "alpha"}) fs::create_directories(dir / sub);
    const std::string stem = view_stem(static_cast<std::size_t>(view));
    write_png(out.rgb, dir / "rgb" / (stem + ".png"));
    write_surf(out.surf, dir / "surf", stem);
    write_pfm(out.depth, dir / "depth" / (stem + ".pfm"));
    write_png(out.alpha, dir / "alpha" / (stem + ".png"));
}

inline std::vector<RenderedView> render_views(const GaussianCloud& cloud, const std::vector<Camera>& cams,
                                              const std::vector<int>& ids, const RenderSettings& settings,
                                              const std::optional<fs::path>& out_dir) {
    std::vector<RenderedView> out;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        RenderedView rv{ids[i], render(cloud, cams[i], settings)};
        if (out_dir) write_render(rv.output, *out_dir, rv.view);
        out.push_back(std::move(rv));
    }
    return out;
}

inline std::vector<RenderedView> cmd_render(const fs::path& ply, const fs::path& cameras, const fs::path& out_dir,
                                            const Vec3& background = Vec3::Zero(),
                                            std::vector<std::string>* warnings = nullptr) {
    std::vector<std::string> ply_warnings;
    const GaussianCloud cloud = read_ply(ply, &ply_warnings);
    // Only a file without surf_* properties warns; it has no embedding to render.
    const bool has_surf = ply_warnings.empty();
    for (const auto& w : ply_warnings) detail::warn(warnings, w);
    cloud.validate();
    const std::vector<Camera> cams = read_cameras(cameras);
    const std::vector<int> ids = read_camera_view_ids(cameras);
    RenderSettings settings;
    settings.background = background;
    fs::create_directories(out_dir);
    std::vector<RenderedView> out;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        RenderedView rv{ids[i], render(cloud, cams[i], settings)};
        if (!has_surf) std::fill(rv.output.surf.data.begin(), rv.output.surf.data.end(), 0.0);
        write_render(rv.output, out_dir, rv.view);
        out.push_back(std::move(rv));
    }
    return out;
}

// ---------------------------------------------------------------------------
// eval

enum class MaskMode { object, full };

inline MaskMode parse_mask_mode(const std::string& s) {
    if (s == "object") return MaskMode::object;
    if (s == "full") return MaskMode::full;
    throw ConfigError("unknown mask mode '" + s + "' (expected object or full)");
}

struct EvalViewRow {
    int view = 0;
    ViewDepthMetrics depth;
    std::optional<ImageMetrics> image;
};

struct EvalResult {
    std::vector<EvalViewRow> rows;
    DepthMetrics aggregate;
    std::optional<ImageMetrics> image_mean;
};

inline Mask evaluation_mask(const GroundTruthView& gt, MaskMode mode) {
    if (mode == MaskMode::object) return gt.object_mask;
    Mask m(gt.depth.width, gt.depth.height);
    for (std::size_t p = 0; p < m.data.size(); ++p) m.data[p] = gt.depth.data[p] > 0.0 ? 1 : 0;
    return m;
}

inline Mask depth_validity(const Image& depth) {
    Mask m(depth.width, depth.height);
    for (std::size_t p = 0; p < m.data.size(); ++p) m.data[p] = std::isfinite(depth.data[p]) && depth.data[p] > 0.0;
    return m;
}

/// Scores predictions against ground truth. Rendered depth maps store 0 where
/// accumulated alpha is negligible; those pixels count as invalid.
inline EvalResult evaluate(const std::map<int, Image>& pred_depth, const std::map<int, Image>& pred_rgb,
                           const Dataset& gt, MaskMode mode) {
    EvalResult r;
    std::vector<ViewDepthMetrics> views;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t image_count = 0;
    for (const auto& [view, depth] : pred_depth) {
        const GroundTruthView& g = gt.views[static_cast<std::size_t>(view)];
        EvalViewRow row;
        row.view = view;
        row.depth = view_depth_metrics(depth, depth_validity(depth), g.depth, evaluation_mask(g, mode));
        if (auto it = pred_rgb.find(view); it != pred_rgb.end()) {
            row.image = image_metrics(it->second, g.rgb);
            psnr_sum += row.image->psnr;
            ssim_sum += row.image->ssim;
            ++image_count;
        }
        views.push_back(row.depth);
        r.rows.push_back(row);
    }
    r.aggregate = aggregate_depth_metrics(views);
    if (image_count == pred_depth.size() && image_count > 0) {
        r.image_mean = ImageMetrics{psnr_sum / image_count, ssim_sum / image_count};
    }
    return r;
}

inline std::string format_eval_csv(const EvalResult& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "view,mae,rmse,valid_pixel_fraction,evaluated,masked,psnr,ssim\n";
    for (const auto& row : r.rows) {
        os << row.view << "," << row.depth.mae << "," << row.depth.rmse << "," << row.depth.valid_pixel_fraction << ","
           << row.depth.evaluated << "," << row.depth.masked << ",";
        if (row.image) os << row.image->psnr << "," << row.image->ssim;
        else os << ",";
        os << "\n";
    }
    os << "mean," << r.aggregate.mae << "," << r.aggregate.rmse << "," << r.aggregate.valid_pixel_fraction << ",,,";
    if (r.image_mean) os << r.image_mean->psnr << "," << r.image_mean->ssim;
    else os << ",";
    os << "\npooled," << r.aggregate.pooled_mae << "," << r.aggregate.pooled_rmse << ",,,,,\n";
    return os.str();
}

inline std::string format_eval_table(const EvalResult& r, const std::string& label) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(16) << "method" << std::right << std::setw(9) << "MAE" << std::setw(9) << "RMSE"
       << std::setw(9) << "valid" << std::setw(7) << "views" << "\n";
    os << std::left << std::setw(16) << label << std::right << std::setw(9) << r.aggregate.mae << std::setw(9)
       << r.aggregate.rmse << std::setw(9) << r.aggregate.valid_pixel_fraction << std::setw(7) << r.rows.size()
       << "\n";
    return os.str();
}

namespace detail {

inline std::map<int, fs::path> indexed_files(const fs::path& dir, const std::string& ext) {
    std::map<int, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto& p = e.path();
        if (p.extension() != ext) continue;
        const std::string stem = p.stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
        out[std::stoi(stem)] = p;
    }
    return out;
}

} // namespace detail

/// Evaluates a prediction directory (depth/NNNN.pfm, optional rgb/NNNN.png;
/// a dataset's depth_gt/ is accepted too) against a dataset directory.
inline EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, MaskMode mode) {
    const Dataset gt = read_dataset(gt_dir);
    auto depth_files = detail::indexed_files(pred_dir / "depth", ".pfm");
    if (depth_files.empty()) depth_files = detail::indexed_files(pred_dir / "depth_gt", ".pfm");
    if (depth_files.empty()) throw ValidationError("eval: no depth maps found under '" + pred_dir.string() + "'");
    const auto rgb_files = detail::indexed_files(pred_dir / "rgb", ".png");

    std::vector<std::string> problems;
    std::map<int, Image> depth, rgb;
    for (const auto& [view, path] : depth_files) {
        if (view >= static_cast<int>(gt.views.size())) {
            problems.push_back("prediction view " + view_stem(static_cast<std::size_t>(view)) +
                               " has no ground truth");
            continue;
        }
        const auto& g = gt.views[static_cast<std::size_t>(view)];
        try {
            Image d = read_pfm(path);
            if (d.width != g.depth.width || d.height != g.depth.height) {
                problems.push_back("prediction view " + view_stem(static_cast<std::size_t>(view)) + " is " +
                                   std::to_string(d.width) + "x" + std::to_string(d.height) + ", ground truth is " +
                                   std::to_string(g.depth.width) + "x" + std::to_string(g.depth.height));
                continue;
            }
            depth[view] = std::move(d);
            if (auto it = rgb_files.find(view); it != rgb_files.end()) rgb[view] = read_png(it->second);
        } catch (const Error& e) {
            problems.push_back("prediction view " + view_stem(static_cast<std::size_t>(view)) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "eval: prediction and ground-truth view sets do not match:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return evaluate(depth, rgb, gt, mode);
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    TrainConfig train;
    FitMode mode = FitMode::joint;
    /// Pixel stride when back-projecting training depth into initial points.
    int init_stride = 8;
    /// Skip back-projected pixels inside the object mask; GT depth there is the transparent surface.
    bool init_exclude_mask = true;
    /// Uniform random points added to the initial cloud, in a box around the scene.
    int random_init_points = 2000;
    int sh_degree = 3;
    int surf_sh_degree = 0;
    /// Overrides the background stored in scene.json.
    std::optional<Vec3> background;
    int progress_every = 100;
    bool quiet = false;
};

struct FitResult {
    GaussianCloud cloud;
    TrainReport report;
    std::optional<EvalResult> heldout;
    double final_loss = 0.0;
};

inline Vec3 dataset_background(const fs::path& dir) {
    if (!fs::exists(dir / "scene.json")) return Vec3::Zero();
    return scene_from_json(read_json(dir / "scene.json")).background;
}

/// Initial cloud: ground-truth depth of the training views back-projected on
/// a pixel grid.
inline GaussianCloud initial_cloud(const Dataset& ds, const std::vector<int>& views, const FitOptions& opt) {
    PointSample ps;
    for (int i : views) {
        const auto& v = ds.views[static_cast<std::size_t>(i)];
        ps = backproject_depth(v.camera, v.depth, v.rgb, opt.init_stride, std::move(ps),
                               opt.init_exclude_mask ? v.object_mask : Mask{});
    }
    if (opt.random_init_points > 0 && !ps.points.empty()) {
        Vec3 centroid = Vec3::Zero();
        for (const auto& p : ps.points) centroid += p;
        centroid /= static_cast<double>(ps.points.size());
        double dist = 0.0;
        for (int i : views) dist += (ds.views[static_cast<std::size_t>(i)].camera.center - centroid).norm();
        const double half = 0.33 * dist / static_cast<double>(views.size());
        const Vec3 h = Vec3::Constant(half);
        ps = random_points(centroid - h, centroid + h, static_cast<std::size_t>(opt.random_init_points),
                           opt.train.seed, std::move(ps));
    }
    InitConfig ic;
    ic.sh_degree_rgb = opt.sh_degree;
    ic.sh_degree_surf = opt.surf_sh_degree;
    ic.surf_channels = ds.views.front().surf.channels;
    return init_from_points(ps.points, ps.colors, ic);
}

inline json fit_metrics_json(const FitResult& r, const FitOptions& opt) {
    json j;
    j["mode"] = fit_mode_name(opt.mode);
    j["seed"] = opt.train.seed;
    j["iterations"] = opt.train.iterations;
    j["lambda"] = opt.train.lambda;
    j["final_loss"] = r.final_loss;
    j["final_objective"] = r.report.history.back().objective;
    j["kernels"] = r.cloud.size();
    j["scene_extent"] = r.report.scene_extent;
    j["wall_seconds"] = r.report.wall_seconds;
    if (r.heldout) {
        const auto& a = r.heldout->aggregate;
        j["heldout"] = {{"mae", a.mae},
                        {"rmse", a.rmse},
                        {"valid_pixel_fraction", a.valid_pixel_fraction},
                        {"pooled_mae", a.pooled_mae},
                        {"pooled_rmse", a.pooled_rmse}};
        if (r.heldout->image_mean) {
            j["heldout"]["psnr"] = r.heldout->image_mean->psnr;
            j["heldout"]["ssim"] = r.heldout->image_mean->ssim;
        }
        json per = json::array();
        for (const auto& row : r.heldout->rows) {
            per.push_back({{"view", row.view},
                           {"mae", row.depth.mae},
                           {"rmse", row.depth.rmse},
                           {"valid_pixel_fraction", row.depth.valid_pixel_fraction}});
        }
        j["heldout"]["per_view"] = per;
    }
    j["warnings"] = r.report.warnings;
    return j;
}

inline std::string loss_curve_csv(const TrainReport& report) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "iteration,view,total,objective,l_rgb,l_surf,l1_rgb,dssim_rgb,l1_surf,dssim_surf,kernels\n";
    for (std::size_t i = 0; i < report.history.size(); ++i) {
        const auto& b = report.history[i];
        os << i + 1 << "," << report.view_index[i] << "," << b.total << "," << b.objective << "," << b.l_rgb << ","
           << b.l_surf << "," << b.l1_rgb << "," << b.dssim_rgb << "," << b.l1_surf << "," << b.dssim_surf << ","
           << report.kernel_count[i] << "\n";
    }
    return os.str();
}

/// Trains on the dataset's training split, scores held-out views and writes
/// point_cloud.ply, metrics.json, loss.csv, test_cameras.json and test/.
inline FitResult cmd_fit(const fs::path& dataset_dir, const fs::path& out_dir, const FitOptions& opt) {
    opt.train.validate();
    if (opt.init_stride < 1) throw ConfigError("init stride must be >= 1");
    if (opt.sh_degree < 0 || opt.sh_degree > kMaxShDegree || opt.surf_sh_degree < 0 ||
        opt.surf_sh_degree > kMaxShDegree) {
        throw ConfigError("SH degrees must lie in [0, 3]");
    }
    const Dataset ds = read_dataset(dataset_dir);
    std::vector<int> train_ids = ds.train.empty() ? train_view_indices(static_cast<int>(ds.views.size())) : ds.train;
    if (train_ids.empty()) throw ValidationError("dataset has no training views");

    TrainConfig cfg = opt.train;
    cfg.background = opt.background.value_or(dataset_background(dataset_dir));
    if (opt.mode == FitMode::rgb_only) cfg.weights.surf = 0.0;

    std::vector<TrainView> views;
    for (int i : train_ids) {
        const auto& v = ds.views[static_cast<std::size_t>(i)];
        views.push_back({v.camera, v.rgb, v.surf});
    }
    GaussianCloud init = initial_cloud(ds, train_ids, opt);
    if (!opt.quiet) {
        std::cerr << "fit: " << views.size() << " training views, " << init.size() << " initial kernels, mode "
                  << fit_mode_name(opt.mode) << "\n";
    }

    const TrainProgress progress = [&](int it, const LossBreakdown& b, std::size_t k) {
        if (!opt.quiet && opt.progress_every > 0 && (it % opt.progress_every == 0 || it == cfg.iterations)) {
            std::cerr << "  iter " << it << "/" << cfg.iterations << "  loss " << b.total << "  rgb " << b.l_rgb
                      << "  surf " << b.l_surf << "  kernels " << k << "\n";
        }
    };
    auto [cloud, report] = train(std::move(init), views, cfg, progress);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

    FitResult r{std::move(cloud), std::move(report), std::nullopt, 0.0};
    r.final_loss = r.report.history.back().total;

    fs::create_directories(out_dir);
    write_ply(r.cloud, out_dir / "point_cloud.ply");
    write_file_bytes(out_dir / "loss.csv", loss_curve_csv(r.report));

    if (!ds.test.empty()) {
        std::vector<Camera> cams;
        for (int i : ds.test) cams.push_back(ds.views[static_cast<std::size_t>(i)].camera);
        write_cameras_with_ids(cams, ds.test, out_dir / "test_cameras.json");
        RenderSettings settings;
        settings.background = cfg.background;
        const auto rendered = render_views(r.cloud, cams, ds.test, settings, out_dir / "test");
        std::map<int, Image> depth, rgb;
        for (const auto& rv : rendered) {
            depth[rv.view] = rv.output.depth;
            rgb[rv.view] = rv.output.rgb;
        }
        try {
            r.heldout = evaluate(depth, rgb, ds, MaskMode::object);
            r.report.heldout = r.heldout->aggregate;
        } catch (const ValidationError& e) {
            r.report.warnings.push_back(std::string("held-out evaluation skipped: ") + e.what());
        }
    }
    write_json(fit_metrics_json(r, opt), out_dir / "metrics.json");
    return r;
}

} // namespace transplat
