// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "morphvol/io.hpp"
#include "morphvol/scene.hpp"

using namespace morphvol;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path d = [] {
        const fs::path p = fs::temp_directory_path() / "morphvol_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        json cfg{{"camera", {{"width", 16}, {"height", 16}}},
                 {"sampling", {{"coarse", 12}, {"fine", 12}}},
                 {"model", {{"plane_resolution", 8}, {"plane_channels", 4}, {"w_rows", 2}, {"w_cols", 16},
                            {"mapping_layers", 3}, {"generator_hidden", 16}, {"decoder_hidden", 8}}}};
        write_file(p / "scene.json", cfg.dump());
        return p;
    }();
    return d;
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " MORPHVOL_CLI " --config " + (workdir() / "scene.json").string() + " " + args +
                            " > " + (workdir() / "stdout.txt").string() + " 2> " + (workdir() / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string out(const std::string& name) { return read_file(workdir() / name); }
std::string path(const std::string& name) { return (workdir() / name).string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("render: fixed seed is byte-identical, --size sets the output") {
    REQUIRE(run("--seed 7 render --out " + path("a.ppm")) == 0);
    REQUIRE(run("--seed 7 render --out " + path("b.ppm")) == 0);
    CHECK(out("a.ppm") == out("b.ppm"));
    REQUIRE(run("--seed 8 render --out " + path("c.ppm")) == 0);
    CHECK(out("a.ppm") != out("c.ppm"));
    REQUIRE(run("render --size 32 --out " + path("s.ppm")) == 0);
    const Image s = read_ppm(path("s.ppm"));
    CHECK(s.width == 32);
    CHECK(s.height == 32);
}

TEST_CASE("missing config exits with 2") {
    const std::string cmd = std::string(MORPHVOL_CLI) + " --config " + path("absent.json") + " render --out " +
                            path("x.ppm") + " 2> " + path("stderr.txt");
    const int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 2);
    CHECK(out("stderr.txt").find("config") != std::string::npos);
    write_file(path("broken.json"), "{\"camera\": {\"radious\": 1}}");
    const std::string bad = std::string(MORPHVOL_CLI) + " --config " + path("broken.json") + " render --out " +
                            path("x.ppm") + " 2> " + path("stderr.txt");
    CHECK(WEXITSTATUS(std::system(bad.c_str())) == 2);
}

TEST_CASE("bad params file is a nonzero exit with a diagnostic") {
    write_file(path("bad_params.json"), "{\"alpha\": [1]}");
    CHECK(run("render --params " + path("bad_params.json") + " --out " + path("x.ppm")) == 1);
    CHECK_FALSE(out("stderr.txt").empty());
}

TEST_CASE("deterministic renders are stable across thread counts") {
    REQUIRE(run("--deterministic --threads 1 render --yaw 0.2 --out " + path("t1.ppm") + " --dump " + path("t1.ntc")) == 0);
    REQUIRE(run("--deterministic --threads 4 render --yaw 0.2 --out " + path("t4.ppm") + " --dump " + path("t4.ntc")) == 0);
    REQUIRE(run("--deterministic render --yaw 0.2 --out " + path("te.ppm"), "MORPHVOL_THREADS=3") == 0);
    CHECK(out("t1.ppm") == out("t4.ppm"));
    CHECK(out("t1.ppm") == out("te.ppm"));
    CHECK(out("t1.ntc") == out("t4.ntc"));
    const auto ts = read_tensors(path("t1.ntc"));
    CHECK(find_tensor(ts, "semantic").shape == std::vector<std::uint64_t>{256, 6});
    CHECK(run("render --out " + path("x.ppm"), "MORPHVOL_THREADS=lots") == 2);
}

TEST_CASE("animate: neutral single frame equals render, neutral blend equals plain") {
    const json neutral = params_to_json(neutral_params(64));
    write_file(path("neutral_drive.json"), json::array({{{"beta", neutral["beta"]}, {"pose", neutral["pose"]}}}).dump());
    REQUIRE(run("--seed 3 render --out " + path("r.ppm")) == 0);
    REQUIRE(run("--seed 3 animate --driving " + path("neutral_drive.json") + " --out-dir " + path("plain")) == 0);
    REQUIRE(run("--seed 3 animate --blend on --driving " + path("neutral_drive.json") + " --out-dir " + path("blend")) == 0);
    CHECK(out("plain/frame_0000.ppm") == out("r.ppm"));
    CHECK(out("blend/frame_0000.ppm") == out("r.ppm"));

    json drive = json::array();
    for (int f = 0; f < 3; ++f) drive.push_back({{"beta", std::vector<double>(64, 0.3 * f)}, {"pose", {{"yaw", 0.1 * f}}}});
    write_file(path("drive.json"), drive.dump());
    REQUIRE(run("animate --driving " + path("drive.json") + " --out-dir " + path("seq") + " --format png") == 0);
    CHECK(fs::exists(workdir() / "seq" / "frame_0002.png"));
    write_file(path("bad_drive.json"), R"([{"beta": [1], "pose": {}}])");
    CHECK(run("animate --driving " + path("bad_drive.json") + " --out-dir " + path("bad")) == 1);
    write_file(path("bad_drive2.json"), R"([{"alpha": []}])");
    CHECK(run("animate --driving " + path("bad_drive2.json") + " --out-dir " + path("bad")) == 1);
}

TEST_CASE("blend: forced weights pick the dynamic or static render") {
    ControlParams p = neutral_params(64);
    for (std::size_t i = 0; i < 64; ++i) p.beta[i] = 0.05 * static_cast<double>(i % 7);
    write_file(path("expr.json"), params_to_json(p).dump());
    ControlParams q = p;
    q.beta.assign(64, 0.0);
    write_file(path("expr_neutral.json"), params_to_json(q).dump());
    REQUIRE(run("render --params " + path("expr.json") + " --out " + path("dyn.ppm")) == 0);
    REQUIRE(run("render --params " + path("expr_neutral.json") + " --out " + path("stat.ppm")) == 0);
    REQUIRE(run("blend --params " + path("expr.json") + " --weight 1 --out " + path("w1.ppm")) == 0);
    REQUIRE(run("blend --params " + path("expr.json") + " --weight 0 --out " + path("w0.ppm")) == 0);
    CHECK(out("w1.ppm") == out("dyn.ppm"));
    CHECK(out("w0.ppm") == out("stat.ppm"));
    CHECK(run("blend --weight 2 --out " + path("x.ppm")) != 0);
}

TEST_CASE("invert: zero steps return the init, ground-truth init has near zero loss") {
    REQUIRE(run("invert --steps 0 --size 8 --out " + path("inv0.json")) == 0);
    const json a = json::parse(out("inv0.json"));
    CHECK(a["steps"] == 0);
    CHECK(a["z_error_final"].get<double>() == doctest::Approx(0.1).epsilon(1e-12));
    REQUIRE(run("invert --steps 0 --perturb 0 --size 8 --out " + path("inv1.json")) == 0);
    const json b = json::parse(out("inv1.json"));
    CHECK(b["pixel_final"].get<double>() < 1e-20);
    CHECK(b["z_error_final"].get<double>() == 0.0);
    REQUIRE(run("invert --steps 0 --size 8 --out " + path("inv2.json")) == 0);
    CHECK(out("inv0.json") == out("inv2.json"));
}

TEST_CASE("metrics, gradcheck and microtrain") {
    REQUIRE(run("metrics --draws 3") == 0);
    const json m = json::parse(out("stdout.txt"));
    CHECK(m["fitting"]["max_abs_error"].get<double>() < 1e-6);
    write_file(path("var.json"), R"({"alpha": 1, "beta": 2, "gamma": 1})");
    write_file(path("ref.json"), R"({"alpha": 1, "beta": 1, "gamma": 1})");
    REQUIRE(run("metrics --draws 2 --variances " + path("var.json") + " --reference " + path("ref.json")) == 0);
    CHECK(json::parse(out("stdout.txt"))["ds"]["beta"] == 4.0);
    CHECK(run("gradcheck") == 0);
    CHECK(run("gradcheck --tolerance 1e-30") == 1);
    REQUIRE(run("microtrain --mode prior --steps 3 --size 6 --save " + path("w.ntc") + " --log " + path("log.json")) == 0);
    CHECK(json::parse(out("log.json")).size() == 3);
    json cfg = json::parse(out("scene.json"));
    cfg["weights"] = "w.ntc";
    write_file(path("trained.json"), cfg.dump());
    const std::string cmd = std::string(MORPHVOL_CLI) + " --config " + path("trained.json") + " render --out " + path("tw.ppm");
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
}

}
