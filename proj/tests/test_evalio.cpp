#include <doctest.h>

#include <cstring>
#include <fstream>

#include "depthweave/config.hpp"
#include "depthweave/dataset.hpp"
#include "depthweave/errors.hpp"
#include "depthweave/formats.hpp"
#include "depthweave/metrics.hpp"
#include "gen.hpp"
#include "tmpdir.hpp"

using namespace depthweave;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

FlowField2D float_flow(gen::Rng& rng, int w, int h) {
    FlowField2D f = gen::flow_field(rng, w, h);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.u[i] = static_cast<float>(f.u[i]);
        f.v[i] = static_cast<float>(f.v[i]);
        if (!f.valid[i]) f.u[i] = f.v[i] = 0.0;
    }
    return f;
}

}  // namespace

TEST_CASE("pfm round trip is bit-identical") {
    TempDir tmp("pfm");
    gen::Rng rng(1);
    const DepthMap d = gen::depth_map(rng, 17, 9, 0.1, 20, 0.25);
    io::write_pfm(tmp / "a.pfm", d);
    const DepthMap r = io::read_pfm(tmp / "a.pfm");
    CHECK(r.width == 17);
    CHECK(r.height == 9);
    CHECK(std::memcmp(r.depth.data(), d.depth.data(), d.depth.size() * sizeof(float)) == 0);
    CHECK(r.valid == d.valid);
    CHECK(slurp(tmp / "a.pfm").rfind("Pf\n17 9\n-1", 0) == 0);
}

TEST_CASE("pfm errors") {
    TempDir tmp("pfm_err");
    gen::Rng rng(2);
    io::write_pfm(tmp / "a.pfm", gen::depth_map(rng, 8, 8));
    std::string bytes = slurp(tmp / "a.pfm");
    spit(tmp / "trunc.pfm", bytes.substr(0, bytes.size() - 10));
    try {
        io::read_pfm(tmp / "trunc.pfm");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 256 bytes") != std::string::npos);
        CHECK(msg.find("got 246") != std::string::npos);
    }
    spit(tmp / "color.pfm", "PF\n2 2\n-1.0\n");
    CHECK_THROWS_AS(io::read_pfm(tmp / "color.pfm"), ParseError);
    spit(tmp / "junk.pfm", "P6\nhello");
    CHECK_THROWS_AS(io::read_pfm(tmp / "junk.pfm"), ParseError);
    CHECK_THROWS_AS(io::read_pfm(tmp / "missing.pfm"), InputError);
}

TEST_CASE("pfm big-endian files are accepted") {
    TempDir tmp("pfm_be");
    std::string s = "Pf\n2 1\n1.0\n";
    for (float v : {1.5f, 2.25f}) {
        unsigned char b[4];
        std::memcpy(b, &v, 4);
        for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>(b[k]));
    }
    spit(tmp / "be.pfm", s);
    const DepthMap d = io::read_pfm(tmp / "be.pfm");
    CHECK(d.at(0, 0) == 1.5f);
    CHECK(d.at(1, 0) == 2.25f);
}

TEST_CASE("flo round trip and magic") {
    TempDir tmp("flo");
    gen::Rng rng(3);
    const FlowField2D f = float_flow(rng, 13, 7);
    io::write_flo(tmp / "a.flo", f);
    const FlowField2D r = io::read_flo(tmp / "a.flo");
    CHECK(r.width == 13);
    CHECK(r.height == 7);
    CHECK(r.valid == f.valid);
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f.valid[i]) {
            CHECK(r.u[i] == f.u[i]);
            CHECK(r.v[i] == f.v[i]);
        }
    std::string bytes = slurp(tmp / "a.flo");
    bytes[0] = 'X';
    spit(tmp / "bad.flo", bytes);
    CHECK_THROWS_AS(io::read_flo(tmp / "bad.flo"), ParseError);
    spit(tmp / "short.flo", slurp(tmp / "a.flo").substr(0, 30));
    CHECK_THROWS_AS(io::read_flo(tmp / "short.flo"), ParseError);
}

TEST_CASE("sf3d round trip") {
    TempDir tmp("sf3d");
    gen::Rng rng(4);
    io::SceneFlowFile sf;
    sf.width = 5;
    sf.height = 4;
    for (int s = 0; s < 3; ++s) {
        std::vector<Vec3> f(20);
        for (auto& v : f) v = gen::float_rounded(rng.vec3(0.1));
        f[7] = Vec3::Constant(std::nan(""));
        sf.frames.push_back(f);
    }
    io::write_sf3d(tmp / "a.sf3d", sf);
    const std::string bytes = slurp(tmp / "a.sf3d");
    CHECK(bytes.substr(0, 4) == "SF3D");
    CHECK(bytes.size() == 16 + 3 * 20 * 12);
    const auto r = io::read_sf3d(tmp / "a.sf3d");
    REQUIRE(r.frames.size() == 3);
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < 20; ++i) {
            if (i == 7) {
                CHECK(std::isnan(r.frames[s][i].x()));
                continue;
            }
            CHECK((r.frames[s][i] - sf.frames[s][i]).cwiseAbs().maxCoeff() == 0.0);
        }
}

TEST_CASE("ppm, pgm and png round trips") {
    TempDir tmp("img");
    gen::Rng rng(5);
    ColorImage c = gen::texture(rng, 11, 6);
    for (auto& v : c.rgb) v = std::round(v * 255.0f) / 255.0f;
    c.update_intensity();
    io::write_ppm(tmp / "a.ppm", c);
    CHECK(io::read_ppm(tmp / "a.ppm").rgb == c.rgb);
    io::write_png(tmp / "a.png", c);
    CHECK(io::read_png(tmp / "a.png").rgb == c.rgb);
    CHECK(io::read_color(tmp / "a.png").rgb == c.rgb);

    io::GrayImage g;
    g.width = 3;
    g.height = 2;
    g.pixels = {0, 50, 100, 150, 200, 250};
    io::write_pgm(tmp / "a.pgm", g);
    CHECK(io::read_pgm(tmp / "a.pgm").pixels == g.pixels);

    spit(tmp / "trunc.ppm", "P6\n4 4\n255\nabc");
    CHECK_THROWS_AS(io::read_ppm(tmp / "trunc.ppm"), ParseError);
}

TEST_CASE("16-bit ppm is rescaled") {
    TempDir tmp("ppm16");
    std::string s = "P6\n1 1\n65535\n";
    for (int k = 0; k < 3; ++k) {
        s.push_back(static_cast<char>(0xFF));
        s.push_back(static_cast<char>(0xFF));
    }
    spit(tmp / "w.ppm", s);
    const ColorImage c = io::read_ppm(tmp / "w.ppm");
    CHECK(c.rgb[0] == 1.0f);
}

TEST_CASE("sintel depth reader") {
    TempDir tmp("dpt");
    std::string s;
    auto put = [&](const void* p, std::size_t n) { s.append(static_cast<const char*>(p), n); };
    const float magic = 202021.25f;
    const std::int32_t w = 2, h = 1;
    const float vals[2] = {3.5f, 7.0f};
    put(&magic, 4);
    put(&w, 4);
    put(&h, 4);
    put(vals, 8);
    spit(tmp / "a.dpt", s);
    const DepthMap d = io::read_sintel_depth(tmp / "a.dpt");
    CHECK(d.width == 2);
    CHECK(d.at(1, 0) == 7.0f);
}

TEST_CASE("epe and aae examples") {
    const FlowField2D z(8, 6);
    CHECK(metrics::epe(z, z) == 0.0);
    CHECK(metrics::aae(z, z) == 0.0);
    const FlowField2D off = FlowField2D::constant(8, 6, 3, 4);
    CHECK(metrics::epe(off, z) == doctest::Approx(5.0).epsilon(1e-15));
    const FlowField2D one = FlowField2D::constant(8, 6, 1, 0);
    CHECK(metrics::aae(one, z) == doctest::Approx(45.0).epsilon(1e-12));
    CHECK(metrics::rmse_flow(off, z) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("metrics match scalar-loop oracles") {
    gen::Rng rng(6);
    for (int t = 0; t < 10; ++t) {
        const FlowField2D a = gen::flow_field(rng, 23, 17), b = gen::flow_field(rng, 23, 17);
        double se = 0, sa = 0, sr = 0;
        int n = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a.valid[i] || !b.valid[i]) continue;
            const double du = a.u[i] - b.u[i], dv = a.v[i] - b.v[i];
            se += std::sqrt(du * du + dv * dv);
            sr += du * du + dv * dv;
            const double dot = a.u[i] * b.u[i] + a.v[i] * b.v[i] + 1.0;
            const double na = std::sqrt(a.u[i] * a.u[i] + a.v[i] * a.v[i] + 1.0);
            const double nb = std::sqrt(b.u[i] * b.u[i] + b.v[i] * b.v[i] + 1.0);
            sa += std::acos(std::min(1.0, std::max(-1.0, dot / (na * nb)))) * 180.0 / M_PI;
            ++n;
        }
        CHECK(std::abs(metrics::epe(a, b) - se / n) < 1e-9);
        CHECK(std::abs(metrics::aae(a, b) - sa / n) < 1e-9);
        CHECK(std::abs(metrics::rmse_flow(a, b) - std::sqrt(sr / n)) < 1e-9);

        const DepthMap da = gen::depth_map(rng, 23, 17), db = gen::depth_map(rng, 23, 17);
        double sd = 0;
        int m = 0;
        for (std::size_t i = 0; i < da.size(); ++i) {
            if (!da.valid[i] || !db.valid[i]) continue;
            const double d = static_cast<double>(da.depth[i]) - db.depth[i];
            sd += d * d;
            ++m;
        }
        CHECK(std::abs(metrics::rmse_depth(da, db) - std::sqrt(sd / m)) < 1e-9);
    }
}

TEST_CASE("metric properties: nonnegative, zero on equal inputs, bias law") {
    gen::Rng rng(7);
    const FlowField2D a = gen::flow_field(rng, 10, 10);
    CHECK(metrics::epe(a, a) == 0.0);
    CHECK(metrics::aae(a, a) < 1e-6);
    const DepthMap d = gen::depth_map(rng, 10, 10, 1.0, 2.0, 0.0);
    DepthMap biased = d;
    for (auto& v : biased.depth) v += 0.25f;
    CHECK(metrics::rmse_depth(biased, d) == doctest::Approx(0.25).epsilon(1e-5));
    CHECK(metrics::rmse_depth(d, d) == 0.0);
}

TEST_CASE("metric errors") {
    FlowField2D a(4, 4), b(4, 4);
    for (auto& v : a.valid) v = 0;
    CHECK_THROWS_AS(metrics::epe(a, b), UndefinedMetricError);
    CHECK_THROWS_AS(metrics::epe(FlowField2D(3, 3), b), InputError);
    CHECK_THROWS_AS(metrics::rmse_depth(DepthMap(4, 4), DepthMap(4, 4)), UndefinedMetricError);
}

TEST_CASE("metrics report text and json") {
    const FlowField2D z(4, 4), off = FlowField2D::constant(4, 4, 3, 4);
    const auto rep = metrics::flow_report(off, z);
    CHECK(rep.valid_pixel_count == 16);
    CHECK(rep.to_text().find("EPE:        5.000 px") != std::string::npos);
    CHECK(rep.to_json().find("\"epe\":5.0") != std::string::npos);
    CHECK(rep.to_json().find("\"aae_unit\":\"deg\"") != std::string::npos);
    CHECK_THROWS_AS(metrics::depth_report(DepthMap(2, 2), DepthMap(2, 2), "mm"), UndefinedMetricError);
}

TEST_CASE("config examples") {
    const config::Config def = config::parse_config("{}");
    CHECK(def.weights.lambda_iso == 3.0);
    CHECK(def.solver.levels == 3);

    const config::Config iso = config::parse_config(R"({"lambda_iso": 6.0})");
    CHECK(iso.weights.lambda_iso == 6.0);
    EnergyWeights expect;
    expect.lambda_iso = 6.0;
    CHECK(iso.weights.lambda_opti == expect.lambda_opti);
    CHECK(iso.weights.sigma_2 == expect.sigma_2);

    try {
        config::parse_config(R"({"lamda_iso": 6.0})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "lamda_iso");
    }
}

TEST_CASE("config type checks") {
    CHECK_THROWS_AS(config::parse_config(R"({"lambda_iso": "big"})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"levels": 2.5})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"levels": 0})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"sigma_t": -1})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"layout": {"colour_dir": "x"}})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(config::parse_config("[1]"), ConfigError);
    try {
        config::parse_config(R"({"crop": {"x": 0, "y": 0, "width": 4}})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "crop.height");
    }
}

TEST_CASE("config is total: dumping and reparsing reproduces every value") {
    config::Config c;
    c.weights.lambda_point = 0.33;
    c.weights.sigma_2 = 12;
    c.solver.icp_rounds = 2;
    c.flow.alpha = 7.5;
    c.fill.merge_tolerance = 0.02;
    c.depth_scale = 0.001;
    c.depth_unit = "mm";
    c.backward_pass = false;
    c.crop = camera::CropRect{1, 2, 30, 20};
    c.rig = CameraRig::aligned(gen::intrinsics(40, 30));
    c.layout.prefix = "img_";
    const config::Config r = config::parse_config(config::dump_config(c));
    CHECK(config::dump_config(r) == config::dump_config(c));
    CHECK(r.weights.lambda_point == 0.33);
    CHECK(r.layout.prefix == "img_");
    CHECK(r.crop->height == 20);
    CHECK(r.rig->color_intrinsics.fx == c.rig->color_intrinsics.fx);
}

TEST_CASE("load_config reports the file") {
    TempDir tmp("cfg");
    spit(tmp / "c.json", R"({"bogus": 1})");
    try {
        config::load_config(tmp / "c.json");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "bogus");
        CHECK(std::string(e.what()).find("c.json") != std::string::npos);
    }
    CHECK_THROWS_AS(config::load_config(tmp / "none.json"), ConfigError);
}

TEST_CASE("dataset write then read") {
    TempDir tmp("ds");
    auto spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, 24, 20);
    spec.g = 2;
    spec.frames = 7;
    const auto ds = synth::generate(spec);
    io::write_dataset(tmp.path, ds);
    CHECK(fs::exists(tmp / "gt_depth/frame_000006.pfm"));
    CHECK(fs::exists(tmp / "gt_flow/frame_000005.flo"));
    CHECK(fs::exists(tmp / "gt_sceneflow/frame_000005.sf3d"));
    CHECK_FALSE(fs::exists(tmp / "depth/frame_000001.pfm"));

    const auto seq = io::read_dataset(tmp.path, config::Config{});
    CHECK(seq.g == 2);
    CHECK(seq.colors.size() == 7);
    CHECK(seq.depths.size() == 4);
    CHECK(seq.depths[2].depth == ds.depths[2].depth);
    CHECK(seq.rig.color_intrinsics.fx == ds.rig.color_intrinsics.fx);

    config::Config scaled;
    scaled.depth_scale = 1000.0;
    scaled.crop = camera::CropRect{2, 3, 10, 8};
    const auto sc = io::read_dataset(tmp.path, scaled);
    CHECK(sc.depths[0].width == 10);
    CHECK(sc.depths[0].at(0, 0) == doctest::Approx(1000.0 * ds.depths[0].at(2, 3)).epsilon(1e-6));
    CHECK(sc.rig.depth_intrinsics.cx == ds.rig.depth_intrinsics.cx - 2);
}

TEST_CASE("dataset layout errors") {
    TempDir tmp("ds_err");
    auto spec = synth::SceneSpec::defaults(synth::Scene::translating_plane, 16, 16);
    spec.g = 2;
    spec.frames = 5;
    io::write_dataset(tmp.path, synth::generate(spec));

    SUBCASE("corrupt calib.json") {
        spit(tmp / "calib.json", "{\"depth\": ");
        try {
            io::read_dataset(tmp.path, config::Config{});
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("calib.json") != std::string::npos);
        }
    }
    SUBCASE("g disagrees with calib.json") {
        std::string calib = slurp(tmp / "calib.json");
        const auto pos = calib.find("\"g\": 2");
        REQUIRE(pos != std::string::npos);
        calib.replace(pos, 6, "\"g\": 4");
        spit(tmp / "calib.json", calib);
        CHECK_THROWS_AS(io::read_dataset(tmp.path, config::Config{}), ConfigError);
    }
    SUBCASE("unevenly spaced depth") {
        fs::copy_file(tmp / "depth/frame_000000.pfm", tmp / "depth/frame_000003.pfm");
        CHECK_THROWS_AS(io::read_dataset(tmp.path, config::Config{}), InputError);
    }
    SUBCASE("gap in color numbering") {
        fs::remove(tmp / "color/frame_000002.ppm");
        CHECK_THROWS_AS(io::read_dataset(tmp.path, config::Config{}), InputError);
    }
    SUBCASE("missing directory") {
        CHECK_THROWS_AS(io::read_dataset(tmp / "nope", config::Config{}), InputError);
    }
}
