#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthweave/dataset.hpp"
#include "depthweave/formats.hpp"
#include "depthweave/metrics.hpp"
#include "depthweave_cli/cli.hpp"
#include "gen.hpp"
#include "tmpdir.hpp"

using namespace depthweave;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "depthweave");
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// last line of stdout is the machine-readable summary
json summary(const Run& r) {
    std::istringstream in(r.out);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return json::parse(last);
}

void write_fast_config(const fs::path& p) {
    std::ofstream(p) << R"({"levels": 2, "gn_iters_per_level": 2, "pcg_iters": 8, "icp_rounds": 1,
                           "flow_pyramid_levels": 2, "flow_inner_iterations": 15})";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
    std::size_t n = 0;
    if (!fs::exists(dir)) return 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ext) ++n;
    return n;
}

}  // namespace

TEST_CASE("synth writes the standard layout") {
    TempDir tmp("cli_synth");
    const Run r = run({"synth", "--scene", "translating-plane", "--g", "4", "--frames", "9", "--width", "32",
                       "--height", "24", "--seed", "3", "--output", (tmp / "ds").string()});
    REQUIRE(r.code == 0);
    CHECK(count_files(tmp / "ds/color", ".ppm") == 9);
    CHECK(count_files(tmp / "ds/depth", ".pfm") == 3);
    CHECK(count_files(tmp / "ds/gt_depth", ".pfm") == 9);
    CHECK(count_files(tmp / "ds/gt_flow", ".flo") == 8);
    CHECK(count_files(tmp / "ds/gt_sceneflow", ".sf3d") == 8);
    CHECK(fs::exists(tmp / "ds/calib.json"));
    const json j = summary(r);
    CHECK(j["colors"] == 9);
    CHECK(j["depths"] == 3);
}

TEST_CASE("synth rejects bad arguments") {
    TempDir tmp("cli_synth_bad");
    CHECK(run({"synth", "--scene", "teapot", "--output", tmp.path.string()}).code == 1);
    CHECK(run({"synth", "--g", "3", "--frames", "9", "--output", tmp.path.string()}).code == 1);
    CHECK(run({"synth", "--g", "0", "--output", tmp.path.string()}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("upsample end to end") {
    TempDir tmp("cli_up");
    REQUIRE(run({"synth", "--scene", "translating-plane", "--g", "2", "--frames", "5", "--width", "24", "--height",
                 "20", "--output", (tmp / "ds").string()})
                .code == 0);
    write_fast_config(tmp / "fast.json");
    const Run r = run({"upsample", "--input", (tmp / "ds").string(), "--output", (tmp / "out").string(), "--config",
                       (tmp / "fast.json").string(), "--dump-energy", (tmp / "out/energy.csv").string(),
                       "--dump-holes"});
    INFO(r.out << r.err);
    REQUIRE(r.code == 0);
    CHECK(count_files(tmp / "out/depth", ".pfm") == 5);
    CHECK(count_files(tmp / "out/sceneflow", ".sf3d") == 2);
    CHECK(count_files(tmp / "out/holes", ".pgm") == 5);
    const std::string csv = slurp(tmp / "out/energy.csv");
    CHECK(csv.rfind("interval,", 0) == 0);
    CHECK(csv.find("\n1,") != std::string::npos);
    const json j = summary(r);
    CHECK(j["frames"] == 5);
    CHECK(j["failed_intervals"] == 0);

    const auto sf = io::read_sf3d(tmp / "out/sceneflow/interval_0000.sf3d");
    CHECK(sf.frames.size() == 2);

    SUBCASE("deterministic output") {
        const Run again = run({"upsample", "--input", (tmp / "ds").string(), "--output", (tmp / "out2").string(),
                               "--config", (tmp / "fast.json").string()});
        REQUIRE(again.code == 0);
        for (int t = 0; t < 5; ++t) {
            const std::string name = io::frame_name(config::LayoutSpec{}, t, ".pfm");
            CHECK(slurp(tmp / "out/depth" / name) == slurp(tmp / "out2/depth" / name));
        }
    }
    SUBCASE("eval-depth agrees with the metric") {
        const fs::path est = tmp / "out/depth/frame_000001.pfm", gt = tmp / "ds/gt_depth/frame_000001.pfm";
        const Run e = run({"eval-depth", "--est", est.string(), "--gt", gt.string()});
        REQUIRE(e.code == 0);
        const double expect = metrics::rmse_depth(io::read_pfm(est), io::read_pfm(gt));
        CHECK(std::abs(summary(e)["rmse_depth"].get<double>() - expect) < 1e-12);
    }
}

TEST_CASE("upsample input errors") {
    TempDir tmp("cli_up_bad");
    REQUIRE(run({"synth", "--g", "2", "--frames", "3", "--width", "16", "--height", "16", "--output",
                 (tmp / "ds").string()})
                .code == 0);
    SUBCASE("corrupt calib.json") {
        std::ofstream(tmp / "ds/calib.json") << "{\"depth\": [";
        const Run r = run({"upsample", "--input", (tmp / "ds").string(), "--output", (tmp / "out").string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("calib.json") != std::string::npos);
    }
    SUBCASE("unknown config key") {
        std::ofstream(tmp / "c.json") << R"({"lamda_iso": 2})";
        const Run r = run({"upsample", "--input", (tmp / "ds").string(), "--output", (tmp / "out").string(),
                           "--config", (tmp / "c.json").string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("lamda_iso") != std::string::npos);
    }
    SUBCASE("missing input") {
        CHECK(run({"upsample", "--input", (tmp / "none").string(), "--output", (tmp / "out").string()}).code == 1);
    }
    SUBCASE("missing required option") { CHECK(run({"upsample", "--input", (tmp / "ds").string()}).code == 1); }
}

TEST_CASE("sceneflow on an identical pair") {
    TempDir tmp("cli_sf");
    REQUIRE(run({"synth", "--scene", "translating-plane", "--g", "1", "--frames", "2", "--width", "24", "--height",
                 "20", "--output", (tmp / "ds").string()})
                .code == 0);
    write_fast_config(tmp / "fast.json");
    const std::string c0 = (tmp / "ds/color/frame_000000.ppm").string();
    const std::string d0 = (tmp / "ds/depth/frame_000000.pfm").string();
    io::write_flo(tmp / "zero.flo", FlowField2D(24, 20));

    const Run r = run({"sceneflow", "--frame0", c0, "--frame1", c0, "--depth0", d0, "--depth1", d0, "--config",
                       (tmp / "fast.json").string(), "--calib", (tmp / "ds/calib.json").string(), "--out-flow",
                       (tmp / "est.flo").string(), "--out-sf", (tmp / "est.sf3d").string(), "--gt-flow",
                       (tmp / "zero.flo").string()});
    INFO(r.out << r.err);
    REQUIRE(r.code == 0);
    const double printed = summary(r)["metrics"]["epe"].get<double>();
    CHECK(printed < 0.05);

    const Run e = run({"eval-flow", "--est", (tmp / "est.flo").string(), "--gt", (tmp / "zero.flo").string()});
    REQUIRE(e.code == 0);
    CHECK(std::abs(summary(e)["epe"].get<double>() - printed) < 1e-6);
    CHECK(io::read_sf3d(tmp / "est.sf3d").frames.size() == 1);

    SUBCASE("missing --depth1") {
        CHECK(run({"sceneflow", "--frame0", c0, "--frame1", c0, "--depth0", d0}).code == 1);
    }
    SUBCASE("no rig") {
        const Run nr = run({"sceneflow", "--frame0", c0, "--frame1", c0, "--depth0", d0, "--depth1", d0});
        CHECK(nr.code == 1);
        CHECK(nr.err.find("rig") != std::string::npos);
    }
}

TEST_CASE("eval-flow on equal inputs") {
    TempDir tmp("cli_ef");
    gen::Rng rng(9);
    FlowField2D f = gen::flow_field(rng, 12, 9);
    io::write_flo(tmp / "a.flo", f);
    const Run r = run({"eval-flow", "--est", (tmp / "a.flo").string(), "--gt", (tmp / "a.flo").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("flow metrics (AAE in degrees)") != std::string::npos);
    CHECK(r.out.find("EPE:        0.000 px") != std::string::npos);
    CHECK(summary(r)["epe"].get<double>() == 0.0);
    CHECK(run({"eval-flow", "--est", (tmp / "a.flo").string(), "--gt", (tmp / "none.flo").string()}).code == 1);
}
