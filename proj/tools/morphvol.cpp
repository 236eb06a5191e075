// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// morphvol command line: render | animate | blend | invert | metrics |
// gradcheck | microtrain | serve.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "morphvol/autodiff.hpp"
#include "morphvol/config.hpp"
#include "morphvol/experiments.hpp"
#include "morphvol/io.hpp"
#include "morphvol/scene.hpp"
#include "morphvol/service.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace morphvol;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    int threads = 0;
    bool deterministic = false;
};

SceneConfig scene_config(const Globals& g) {
    if (g.config.empty()) return SceneConfig{};
    if (!fs::is_regular_file(g.config)) throw UsageError("config file not found: " + g.config);
    try {
        return load_config(g.config);
    } catch (const std::exception& e) {
        throw UsageError(std::string("bad config: ") + e.what());
    }
}

std::shared_ptr<PortraitModel> load_model(const Globals& g) {
    return std::make_shared<PortraitModel>(PortraitModel::create(scene_config(g)));
}

ControlParams load_params(const PortraitModel& m, const std::string& path) {
    if (path.empty()) return neutral_params(m.epsilon_dim());
    return params_from_json(read_json(path), m.epsilon_dim());
}

void apply_threads(const Globals& g) {
    int n = g.threads;
    if (const char* env = std::getenv("MORPHVOL_THREADS"); env && *env) {
        try {
            n = std::stoi(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("MORPHVOL_THREADS is not an integer: ") + env);
        }
    }
    if (n < 0) throw UsageError("thread count must be >= 0");
    if (n > 0) ad::set_num_threads(n);
}

void dump_output(const fs::path& path, const RenderOutput& out) {
    write_tensors(path, {tensor_from_mat("rgb", out.rgb), tensor_from_mat("semantic", out.semantic),
                         tensor_from_mat("alpha", out.alpha), tensor_from_mat("depth", out.depth)});
}

json report_json(const LossReport& r) {
    json j{{"total", r.total}};
    for (const auto& [k, v] : r.terms) j["terms"][k] = v;
    return j;
}

std::string frame_name(std::size_t i, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04zu.%s", i, ext.c_str());
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"morphvol: semantic tri-plane portrait renderer"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "scene config JSON");
    app.add_option("--seed", g.seed, "render / sampling seed");
    app.add_option("--threads", g.threads, "worker threads (MORPHVOL_THREADS overrides)");
    app.add_flag("--deterministic", g.deterministic, "midpoint samples instead of jittered strata");

    struct View {
        std::string params;
        std::optional<double> yaw, pitch;
        int size = 0;
    };
    auto add_view = [](CLI::App* c, View& v) {
        c->add_option("--params", v.params, "ControlParams JSON (default: neutral)");
        c->add_option("--yaw", v.yaw);
        c->add_option("--pitch", v.pitch);
        c->add_option("--size", v.size, "square output size (default: config camera)");
    };
    auto posed = [](const PortraitModel& m, const View& v) {
        ControlParams p = load_params(m, v.params);
        if (v.yaw) p.pose.yaw = *v.yaw;
        if (v.pitch) p.pose.pitch = *v.pitch;
        return p;
    };

    View rv;
    std::string r_out, r_semantic, r_dump;
    bool r_blend = false;
    auto* render = app.add_subcommand("render", "render one image");
    add_view(render, rv);
    render->add_option("--out", r_out, "output .ppm or .png")->required();
    render->add_option("--semantic", r_semantic, "class-argmax image");
    render->add_option("--dump", r_dump, "tensor container with rgb / semantic / alpha / depth");
    render->add_flag("--blend", r_blend, "blend against the neutral expression");

    View av;
    std::string a_driving, a_outdir, a_blend = "off", a_format = "ppm";
    auto* animate = app.add_subcommand("animate", "render a driving sequence");
    add_view(animate, av);
    animate->add_option("--driving", a_driving, "JSON array of {beta, pose}")->required();
    animate->add_option("--out-dir", a_outdir)->required();
    animate->add_option("--blend", a_blend)->check(CLI::IsMember({"on", "off"}));
    animate->add_option("--format", a_format)->check(CLI::IsMember({"ppm", "png"}));

    View bv;
    std::string b_out, b_background;
    std::optional<double> b_weight;
    auto* blend = app.add_subcommand("blend", "render with explicit volume blending");
    add_view(blend, bv);
    blend->add_option("--out", b_out)->required();
    blend->add_option("--weight", b_weight, "force the blend weight everywhere")->check(CLI::Range(0.0, 1.0));
    blend->add_option("--background", b_background, "replace the background with this PPM");

    std::string i_target, i_out;
    InversionOptions iopt;
    auto* invert_cmd = app.add_subcommand("invert", "recover a latent from a model-generated target");
    invert_cmd->add_option("--target", i_target, "ground-truth ControlParams JSON (default: neutral)");
    invert_cmd->add_option("--steps", iopt.steps);
    invert_cmd->add_option("--lr", iopt.lr);
    invert_cmd->add_option("--perturb", iopt.perturbation, "norm of the initial latent offset");
    invert_cmd->add_option("--size", iopt.size);
    invert_cmd->add_option("--out", i_out, "report JSON (default: stdout)");

    int m_draws = 50;
    std::string m_variances, m_reference;
    auto* metrics = app.add_subcommand("metrics", "fitting round trip and DS");
    metrics->add_option("--draws", m_draws);
    metrics->add_option("--variances", m_variances, "JSON {attribute: variance}");
    metrics->add_option("--reference", m_reference, "JSON {attribute: reference variance}");

    double gc_h = 1e-4, gc_tol = 1e-4;
    std::uint64_t gc_seed = 3;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    gradcheck_cmd->add_option("--step", gc_h);
    gradcheck_cmd->add_option("--tolerance", gc_tol);
    gradcheck_cmd->add_option("--scene-seed", gc_seed);

    std::string t_mode = "imitative", t_save, t_log;
    int t_steps = -1, t_size = 0;
    double t_lr = 0.0;
    auto* microtrain = app.add_subcommand("microtrain", "small training runs");
    microtrain->add_option("--mode", t_mode)->check(CLI::IsMember({"imitative", "prior"}));
    microtrain->add_option("--steps", t_steps);
    microtrain->add_option("--lr", t_lr);
    microtrain->add_option("--size", t_size);
    microtrain->add_option("--save", t_save, "weights file (prior mode)");
    microtrain->add_option("--log", t_log, "per-step loss reports JSON");

    std::string s_host = "127.0.0.1", s_static;
    int s_port = 8080, s_max = 512;
    auto* serve = app.add_subcommand("serve", "HTTP render service");
    serve->add_option("--host", s_host);
    serve->add_option("--port", s_port);
    serve->add_option("--static", s_static, "viewer bundle directory");
    serve->add_option("--max-size", s_max);

    CLI11_PARSE(app, argc, argv);

    try {
        apply_threads(g);

        if (*render) {
            const auto model = load_model(g);
            const ControlParams p = posed(*model, rv);
            const Camera cam = model->camera_for(p.pose, rv.size, rv.size);
            const RenderOptions ro = model->render_options(g.deterministic, g.seed);
            const RenderOutput out = r_blend ? model->render_blended(p, neutral_params(model->epsilon_dim()).beta, cam, ro)
                                             : model->render(p, cam, ro);
            write_image(r_out, out.rgb_image());
            if (!r_semantic.empty()) write_image(r_semantic, label_image(out.semantic_labels(), out.width, out.height));
            if (!r_dump.empty()) dump_output(r_dump, out);
        } else if (*animate) {
            const auto model = load_model(g);
            const ControlParams base = posed(*model, av);
            const json driving = read_json(a_driving);
            if (!driving.is_array() || driving.empty()) throw std::runtime_error("driving file must be a non-empty JSON array");
            fs::create_directories(a_outdir);
            const RenderOptions ro = model->render_options(g.deterministic, g.seed);
            const auto neutral = neutral_params(model->epsilon_dim()).beta;
            for (std::size_t i = 0; i < driving.size(); ++i) {
                const json& f = driving[i];
                if (!f.is_object()) throw std::runtime_error("driving frame " + std::to_string(i) + " is not an object");
                for (const auto& [k, v] : f.items())
                    if (k != "beta" && k != "pose")
                        throw std::runtime_error("driving frame " + std::to_string(i) + ": unknown key '" + k + "'");
                ControlParams p;
                try {
                    p = merge_params(base, f, model->epsilon_dim());
                } catch (const std::exception& e) {
                    throw std::runtime_error("driving frame " + std::to_string(i) + ": " + e.what());
                }
                const Camera cam = model->camera_for(p.pose, av.size, av.size);
                const RenderOutput out = a_blend == "on" ? model->render_blended(p, neutral, cam, ro) : model->render(p, cam, ro);
                write_image(fs::path(a_outdir) / frame_name(i, a_format), out.rgb_image());
            }
        } else if (*blend) {
            const auto model = load_model(g);
            const ControlParams p = posed(*model, bv);
            const Camera cam = model->camera_for(p.pose, bv.size, bv.size);
            const RenderOutput out = model->render_blended(p, neutral_params(model->epsilon_dim()).beta, cam,
                                                           model->render_options(g.deterministic, g.seed), b_weight);
            if (b_background.empty()) {
                write_image(b_out, out.rgb_image());
            } else {
                const Image bg = read_ppm(b_background);
                if (bg.width != out.width || bg.height != out.height)
                    throw std::runtime_error("background size does not match the render");
                write_image(b_out, replace_background(out, bg));
            }
        } else if (*invert_cmd) {
            const auto model = load_model(g);
            iopt.seed = g.seed;
            const InversionResult r = invert(*model, load_params(*model, i_target), iopt);
            const json j{{"steps", r.steps},
                         {"pixel_initial", r.pixel_initial},
                         {"pixel_final", r.pixel_final},
                         {"z_error_initial", r.z_error_initial},
                         {"z_error_final", r.z_error_final},
                         {"initial", report_json(r.initial)},
                         {"final", report_json(r.final)},
                         {"z", r.z}};
            if (i_out.empty())
                std::cout << j.dump(2) << "\n";
            else
                write_file(i_out, j.dump(2) + "\n");
        } else if (*metrics) {
            const auto model = load_model(g);
            const FitRoundTrip rt = fitting_round_trip(model->basis, m_draws, g.seed);
            json j{{"fitting", {{"draws", rt.draws},
                                {"max_abs_error", rt.max_abs_error},
                                {"aed", rt.accuracy.aed},
                                {"apd", rt.accuracy.apd},
                                {"aid", rt.accuracy.aid},
                                {"flags", rt.flags}}}};
            if (m_variances.empty() != m_reference.empty()) throw UsageError("--variances and --reference go together");
            if (!m_variances.empty()) {
                const auto var = read_json(m_variances).get<std::map<std::string, double>>();
                const auto ref = read_json(m_reference).get<std::map<std::string, double>>();
                j["ds"] = ds_score(var, ref);
            }
            std::cout << j.dump(2) << "\n";
        } else if (*gradcheck_cmd) {
            bool ok = true;
            for (const auto& e : gradient_suite(gc_seed, gc_h)) {
                const bool pass = e.max_rel_error < gc_tol;
                ok = ok && pass;
                std::printf("%-14s %.3e  %4zu checked %3zu skipped  %s\n", e.name.c_str(), e.max_rel_error, e.coords, e.skipped,
                            pass ? "ok" : "FAIL");
            }
            return ok ? 0 : 1;
        } else if (*microtrain) {
            std::vector<LossReport> reports;
            if (t_mode == "imitative") {
                MicroImitativeOptions o;
                o.seed = g.seed;
                if (t_steps >= 0) o.steps = t_steps;
                if (t_lr > 0.0) o.lr = t_lr;
                if (t_size > 0) o.size = t_size;
                const MicroImitativeResult r = micro_imitative(o);
                std::printf("initial %.6g final %.6g drop %.4f\n", r.initial, r.final, r.drop());
                reports = r.reports;
                reports.push_back(r.last);
            } else {
                const auto model = load_model(g);
                PriorFitOptions o;
                o.seed = g.seed;
                if (t_steps >= 0) o.steps = t_steps;
                if (t_lr > 0.0) o.lr = t_lr;
                if (t_size > 0) o.size = t_size;
                reports = fit_prior(*model, o);
                if (!reports.empty()) std::printf("first %.6g last %.6g\n", reports.front().total, reports.back().total);
                if (!t_save.empty()) model->save_weights(t_save);
            }
            if (!t_log.empty()) {
                json j = json::array();
                for (const auto& r : reports) j.push_back(report_json(r));
                write_file(t_log, j.dump() + "\n");
            }
        } else if (*serve) {
            ServiceOptions so;
            so.deterministic = g.deterministic;
            so.seed = g.seed;
            so.static_dir = s_static;
            so.max_size = s_max;
            RenderService service(load_model(g), so);
            const int port = service.bind(s_host, s_port);
            if (port < 0) throw std::runtime_error("cannot bind " + s_host + ":" + std::to_string(s_port));
            std::printf("listening on http://%s:%d\n", s_host.c_str(), port);
            std::fflush(stdout);
            return service.run() ? 0 : 1;
        }
    } catch (const UsageError& e) {
        std::cerr << "morphvol: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "morphvol: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
