// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <type_traits>

#include "morphvol/io.hpp"

namespace morphvol {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
    throw std::invalid_argument("config: " + where + ": " + msg);
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where, "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
            fail(where, "unknown key '" + it.key() + "'");
}

double get_number(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(where, "must be finite");
    return v;
}

template <class T>
void read_int(const json& j, const char* key, const std::string& where, T& out) {
    if (!j.contains(key)) return;
    const json& v = j[key];
    if (!v.is_number_integer()) fail(where + "." + key, "must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) out = v.get<T>();
        else if (v.get<std::int64_t>() < 0) fail(where + "." + key, "must be non-negative");
        else out = static_cast<T>(v.get<std::int64_t>());
    } else {
        out = v.get<T>();
    }
}

void read_double(const json& j, const char* key, const std::string& where, double& out) {
    if (j.contains(key)) out = get_number(j[key], where + "." + key);
}

void read_bool(const json& j, const char* key, const std::string& where, bool& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) fail(where + "." + key, "must be a boolean");
    out = j[key].get<bool>();
}

std::vector<std::string> read_strings(const json& j, const std::string& where) {
    if (!j.is_array()) fail(where, "must be an array of strings");
    std::vector<std::string> out;
    for (const auto& s : j) {
        if (!s.is_string()) fail(where, "must be an array of strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
    if (p.empty() || p == "synthetic" || base.empty()) return p;
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace

std::vector<int> SceneConfig::face_class_ids() const {
    std::vector<int> ids;
    for (const auto& name : face_classes) {
        const auto it = std::find(classes.begin(), classes.end(), name);
        if (it == classes.end()) fail("face_classes", "'" + name + "' is not a declared class");
        ids.push_back(static_cast<int>(it - classes.begin()));
    }
    return ids;
}

void SceneConfig::validate() const {
    if (basis.empty()) fail("basis", "must be \"synthetic\" or a path");
    if (camera.radius <= 0.0) fail("camera.radius", "must be positive");
    if (camera.fov_y <= 0.0 || camera.fov_y >= 3.1) fail("camera.fov_y", "must lie in (0, 3.1)");
    if (camera.near_scale <= 0.0 || camera.far_scale <= camera.near_scale)
        fail("camera", "need 0 < near_scale < far_scale");
    if (camera.width <= 0 || camera.height <= 0 || camera.width > 4096 || camera.height > 4096)
        fail("camera", "width and height must lie in [1, 4096]");
    if (sampling.coarse < 1 || sampling.fine < 0) fail("sampling", "need coarse >= 1 and fine >= 0");
    if (classes.size() < 2) fail("classes", "need at least two classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
        for (std::size_t k = i + 1; k < classes.size(); ++k)
            if (classes[i] == classes[k]) fail("classes", "duplicate class '" + classes[i] + "'");
    if (face_classes.empty()) fail("face_classes", "must not be empty");
    face_class_ids();
    if (model.epsilon_dim == 0 || model.w_rows == 0 || model.w_cols == 0 || model.mapping_layers == 0)
        fail("model", "dimensions must be positive");
    if (model.plane_resolution < 2 || model.plane_channels < 1) fail("model", "need plane_resolution >= 2, plane_channels >= 1");
    if (model.bound <= 0.0) fail("model.bound", "must be positive");
    if (model.generator_hidden == 0 || model.decoder_hidden == 0) fail("model", "hidden widths must be positive");
}

SceneConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    only_keys(j, "root",
              {"basis", "weights", "camera", "sampling", "loss_weights", "seed", "classes", "face_classes", "model",
               "canonical_translation"});
    SceneConfig c;
    if (j.contains("basis")) {
        if (!j["basis"].is_string()) fail("basis", "must be a string");
        c.basis = resolve(j["basis"].get<std::string>(), base_dir);
    }
    if (j.contains("weights")) {
        if (!j["weights"].is_string()) fail("weights", "must be a string");
        c.weights = resolve(j["weights"].get<std::string>(), base_dir);
    }
    if (j.contains("camera")) {
        const json& cam = j["camera"];
        only_keys(cam, "camera", {"radius", "fov_y", "near_scale", "far_scale", "width", "height"});
        read_double(cam, "radius", "camera", c.camera.radius);
        read_double(cam, "fov_y", "camera", c.camera.fov_y);
        read_double(cam, "near_scale", "camera", c.camera.near_scale);
        read_double(cam, "far_scale", "camera", c.camera.far_scale);
        read_int(cam, "width", "camera", c.camera.width);
        read_int(cam, "height", "camera", c.camera.height);
    }
    if (j.contains("sampling")) {
        only_keys(j["sampling"], "sampling", {"coarse", "fine"});
        read_int(j["sampling"], "coarse", "sampling", c.sampling.coarse);
        read_int(j["sampling"], "fine", "sampling", c.sampling.fine);
    }
    if (j.contains("loss_weights")) {
        const json& lw = j["loss_weights"];
        only_keys(lw, "loss_weights", {"imitative", "dis_beta", "inversion"});
        if (lw.contains("imitative")) {
            const json& w = lw["imitative"];
            only_keys(w, "loss_weights.imitative", {"tex", "id", "lmk", "ill", "ce"});
            auto& o = c.loss_weights.imitative;
            read_double(w, "tex", "loss_weights.imitative", o.tex);
            read_double(w, "id", "loss_weights.imitative", o.id);
            read_double(w, "lmk", "loss_weights.imitative", o.lmk);
            read_double(w, "ill", "loss_weights.imitative", o.ill);
            read_double(w, "ce", "loss_weights.imitative", o.ce);
        }
        if (lw.contains("dis_beta")) {
            const json& w = lw["dis_beta"];
            only_keys(w, "loss_weights.dis_beta", {"id", "tex", "lip"});
            auto& o = c.loss_weights.dis_beta;
            read_double(w, "id", "loss_weights.dis_beta", o.id);
            read_double(w, "tex", "loss_weights.dis_beta", o.tex);
            read_double(w, "lip", "loss_weights.dis_beta", o.lip);
        }
        if (lw.contains("inversion")) {
            const json& w = lw["inversion"];
            only_keys(w, "loss_weights.inversion", {"pixel", "lmk", "id", "reg"});
            auto& o = c.loss_weights.inversion;
            read_double(w, "pixel", "loss_weights.inversion", o.pixel);
            read_double(w, "lmk", "loss_weights.inversion", o.lmk);
            read_double(w, "id", "loss_weights.inversion", o.id);
            read_double(w, "reg", "loss_weights.inversion", o.reg);
        }
    }
    read_int(j, "seed", "root", c.seed);
    if (j.contains("classes")) c.classes = read_strings(j["classes"], "classes");
    if (j.contains("face_classes")) c.face_classes = read_strings(j["face_classes"], "face_classes");
    if (j.contains("model")) {
        const json& m = j["model"];
        only_keys(m, "model",
                  {"epsilon_dim", "w_rows", "w_cols", "mapping_layers", "plane_resolution", "plane_channels", "bound",
                   "generator_hidden", "decoder_hidden", "pose_conditioned", "view_conditioned"});
        auto& o = c.model;
        read_int(m, "epsilon_dim", "model", o.epsilon_dim);
        read_int(m, "w_rows", "model", o.w_rows);
        read_int(m, "w_cols", "model", o.w_cols);
        read_int(m, "mapping_layers", "model", o.mapping_layers);
        read_int(m, "plane_resolution", "model", o.plane_resolution);
        read_int(m, "plane_channels", "model", o.plane_channels);
        read_double(m, "bound", "model", o.bound);
        read_int(m, "generator_hidden", "model", o.generator_hidden);
        read_int(m, "decoder_hidden", "model", o.decoder_hidden);
        read_bool(m, "pose_conditioned", "model", o.pose_conditioned);
        read_bool(m, "view_conditioned", "model", o.view_conditioned);
    }
    if (j.contains("canonical_translation")) {
        const json& t = j["canonical_translation"];
        if (!t.is_array() || t.size() != 3) fail("canonical_translation", "must be an array of 3 numbers");
        for (int k = 0; k < 3; ++k) c.canonical_translation[k] = get_number(t[k], "canonical_translation");
    }
    c.validate();
    return c;
}

SceneConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw std::runtime_error("config file not found: " + path.string());
    return config_from_json(read_json(path), path.parent_path());
}

nlohmann::json config_to_json(const SceneConfig& c) {
    const auto& im = c.loss_weights.imitative;
    const auto& db = c.loss_weights.dis_beta;
    const auto& iv = c.loss_weights.inversion;
    const auto& m = c.model;
    json j{{"basis", c.basis},
           {"camera",
            {{"radius", c.camera.radius},
             {"fov_y", c.camera.fov_y},
             {"near_scale", c.camera.near_scale},
             {"far_scale", c.camera.far_scale},
             {"width", c.camera.width},
             {"height", c.camera.height}}},
           {"sampling", {{"coarse", c.sampling.coarse}, {"fine", c.sampling.fine}}},
           {"loss_weights",
            {{"imitative", {{"tex", im.tex}, {"id", im.id}, {"lmk", im.lmk}, {"ill", im.ill}, {"ce", im.ce}}},
             {"dis_beta", {{"id", db.id}, {"tex", db.tex}, {"lip", db.lip}}},
             {"inversion", {{"pixel", iv.pixel}, {"lmk", iv.lmk}, {"id", iv.id}, {"reg", iv.reg}}}}},
           {"seed", c.seed},
           {"classes", c.classes},
           {"face_classes", c.face_classes},
           {"model",
            {{"epsilon_dim", m.epsilon_dim},
             {"w_rows", m.w_rows},
             {"w_cols", m.w_cols},
             {"mapping_layers", m.mapping_layers},
             {"plane_resolution", m.plane_resolution},
             {"plane_channels", m.plane_channels},
             {"bound", m.bound},
             {"generator_hidden", m.generator_hidden},
             {"decoder_hidden", m.decoder_hidden},
             {"pose_conditioned", m.pose_conditioned},
             {"view_conditioned", m.view_conditioned}}},
           {"canonical_translation", c.canonical_translation}};
    if (!c.weights.empty()) j["weights"] = c.weights;
    return j;
}

}  // namespace morphvol
