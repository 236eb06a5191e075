// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "morphvol/config.hpp"
#include "morphvol/io.hpp"

using namespace morphvol;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "morphvol_tests";
    fs::create_directories(dir);
    return dir / name;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    return true;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("tensor container round trip over a generated corpus") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tensor> ts;
        const int n = 1 + static_cast<int>(rng.uniform() * 5);
        for (int k = 0; k < n; ++k) {
            Tensor t;
            t.name = "t" + std::to_string(trial) + "_" + std::to_string(k);
            t.dtype = rng.uniform() < 0.5 ? DType::f32 : DType::f64;
            const int rank = static_cast<int>(rng.uniform() * 4);
            std::uint64_t count = 1;
            for (int r = 0; r < rank; ++r) {
                t.shape.push_back(static_cast<std::uint64_t>(rng.uniform() * 4));
                count *= t.shape.back();
            }
            for (std::uint64_t i = 0; i < count; ++i) {
                const double v = rng.normal(0.0, 1e3);
                t.data.push_back(t.dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v);
            }
            if (count > 2 && t.dtype == DType::f64) {
                t.data[0] = -0.0;
                t.data[1] = std::numeric_limits<double>::denorm_min();
                t.data[2] = std::numeric_limits<double>::infinity();
            }
            ts.push_back(std::move(t));
        }
        const auto back = decode_tensors(encode_tensors(ts));
        REQUIRE(back.size() == ts.size());
        for (std::size_t k = 0; k < ts.size(); ++k) {
            CHECK(back[k].name == ts[k].name);
            CHECK(back[k].dtype == ts[k].dtype);
            CHECK(back[k].shape == ts[k].shape);
            CHECK(bit_equal(back[k].data, ts[k].data));
        }
        CHECK(encode_tensors(back) == encode_tensors(ts));
    }
}

TEST_CASE("tensor container layout is little endian with a JSON header") {
    const std::string bytes = encode_tensors({Tensor{"x", DType::f32, {2}, {1.0, -2.0}}});
    CHECK(bytes.substr(0, 4) == "NTC1");
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
    const json header = json::parse(bytes.substr(8, len));
    CHECK(header["entries"][0]["byteLen"] == 8);
    CHECK(header["entries"][0]["dtype"] == "f32");
    CHECK(bytes.size() == 8 + len + 8);
    float f;
    std::memcpy(&f, bytes.data() + 8 + len + 4, 4);
    CHECK(f == -2.0f);
}

TEST_CASE("tensor container rejects corrupt input") {
    std::string good = encode_tensors({Tensor{"x", DType::f64, {2}, {1.0, 2.0}}});
    CHECK_THROWS(decode_tensors("NTC2" + good.substr(4)));
    CHECK_THROWS(decode_tensors(good.substr(0, good.size() - 1)));
    CHECK_THROWS(decode_tensors(good.substr(0, 6)));
    CHECK_THROWS(encode_tensors({Tensor{"x", DType::f64, {3}, {1.0}}}));
    CHECK_THROWS(encode_tensors({Tensor{"x", DType::f64, {1}, {1.0}}, Tensor{"x", DType::f64, {1}, {2.0}}}));
}

TEST_CASE("basis survives the container") {
    const FaceBasis b = make_synthetic_basis();
    const fs::path p = temp_path("basis.ntc");
    write_tensors(p, basis_to_tensors(b));
    const FaceBasis c = basis_from_tensors(read_tensors(p));
    CHECK(c.triangles == b.triangles);
    CHECK(c.landmark_idx == b.landmark_idx);
    CHECK(c.region_label == b.region_label);
    CHECK((c.exp_basis - b.exp_basis).norm() == 0.0);
    CHECK((c.mean_shape - b.mean_shape).norm() == 0.0);
}

TEST_CASE("quantization and PPM") {
    CHECK(quantize(-0.5) == 0);
    CHECK(quantize(std::nan("")) == 0);
    CHECK(quantize(1.5) == 255);
    CHECK(quantize(0.5) == 128);
    Image img(3, 2, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i * 13 % 256) / 255.0;
    const std::string ppm = encode_ppm(img);
    CHECK(ppm.substr(0, 11) == "P6\n3 2\n255\n");
    const Image back = decode_ppm(ppm);
    CHECK(back.width == 3);
    CHECK(encode_ppm(back) == ppm);
    CHECK_THROWS(decode_ppm("P5\n1 1\n255\n\0"));
}

TEST_CASE("PNG signature and label palette") {
    const std::string png = encode_png(Image(4, 4, 3, 0.5));
    CHECK(png.substr(1, 3) == "PNG");
    const Image l = label_image({0, 1, 2, 1}, 2, 2);
    CHECK(l.width == 2);
    for (int c = 0; c < 3; ++c) CHECK(l.at(1, 0, c) == l.at(1, 1, c));
    CHECK(l.data != label_image({0, 0, 0, 0}, 2, 2).data);
    CHECK_THROWS(write_image(temp_path("x.bmp"), l));
}

TEST_CASE("params JSON: strict parse, schema, merge") {
    ControlParams p;
    p.beta[3] = 0.25;
    p.pose.yaw = 0.1;
    p.pose.t = {1.0, 2.0, 3.0};
    const json j = params_to_json(p);
    CHECK(j["alpha"].size() == 80);
    CHECK(j["delta"].size() == 80);
    CHECK(j["beta"].size() == 64);
    CHECK(j["gamma"].size() == 27);
    CHECK(j["pose"]["t"].size() == 3);
    CHECK(params_from_json(j, 64) == p);

    json missing = j;
    missing.erase("gamma");
    CHECK_THROWS(params_from_json(missing, 64));
    json extra = j;
    extra["zeta"] = 1;
    CHECK_THROWS(params_from_json(extra, 64));
    json bad_pose = j;
    bad_pose["pose"]["twist"] = 0.0;
    CHECK_THROWS(params_from_json(bad_pose, 64));
    json short_beta = j;
    short_beta["beta"] = json::array({1.0});
    CHECK_THROWS(params_from_json(short_beta, 64));
    CHECK_THROWS(params_from_json(j, 32));

    const ControlParams m = merge_params(p, json{{"pose", {{"pitch", 0.2}}}, {"beta", std::vector<double>(64, 1.0)}}, 64);
    CHECK(m.pose.pitch == 0.2);
    CHECK(m.pose.yaw == 0.1);
    CHECK(m.beta == std::vector<double>(64, 1.0));
    CHECK(m.alpha == p.alpha);
    CHECK_THROWS(merge_params(p, json{{"nope", 1}}, 64));
    CHECK_THROWS(merge_params(p, json{{"gamma", {1.0}}}, 64));
    CHECK(merge_params(p, json::object(), 64) == p);
}

TEST_CASE("config: defaults, unknown keys, relative paths") {
    const SceneConfig d = config_from_json(json::object());
    CHECK(d.sampling.coarse == 48);
    CHECK(d.sampling.fine == 48);
    CHECK(d.face_class_ids() == std::vector<int>{1, 3, 4});
    CHECK_THROWS(config_from_json(json{{"colour", 1}}));
    CHECK_THROWS(config_from_json(json{{"camera", {{"radious", 2.0}}}}));
    CHECK_THROWS(config_from_json(json{{"face_classes", {"tail"}}}));
    CHECK_THROWS(config_from_json(json{{"sampling", {{"coarse", 0}}}}));
    const SceneConfig r = config_from_json(json{{"basis", "b.ntc"}, {"weights", "w.ntc"}}, "/data/scene");
    CHECK(fs::path(r.basis) == fs::path("/data/scene/b.ntc"));
    CHECK(fs::path(r.weights) == fs::path("/data/scene/w.ntc"));
    const json round = config_to_json(d);
    CHECK(config_to_json(config_from_json(round)) == round);
    CHECK_THROWS_AS(load_config(temp_path("does_not_exist.json")), std::runtime_error);
}

}
