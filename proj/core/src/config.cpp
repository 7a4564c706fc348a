#include "depthweave/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthweave/errors.hpp"

namespace depthweave::config {

using nlohmann::json;

namespace {

double get_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
}

int get_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<int>();
}

bool get_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
    return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context, "expected an object");
    for (const auto& [k, v] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(context.empty() ? k : context + "." + k, "unknown key");
    }
}

CameraIntrinsics parse_intrinsics(const json& j, const std::string& ctx) {
    check_keys(j, {"fx", "fy", "cx", "cy", "width", "height"}, ctx);
    CameraIntrinsics k;
    for (const char* req : {"fx", "fy", "cx", "cy", "width", "height"})
        if (!j.contains(req)) throw ConfigError(ctx + "." + req, "missing");
    k.fx = get_number(j["fx"], ctx + ".fx");
    k.fy = get_number(j["fy"], ctx + ".fy");
    k.cx = get_number(j["cx"], ctx + ".cx");
    k.cy = get_number(j["cy"], ctx + ".cy");
    k.width = get_int(j["width"], ctx + ".width");
    k.height = get_int(j["height"], ctx + ".height");
    try {
        k.validate();
    } catch (const InputError& e) {
        throw ConfigError(ctx, e.what());
    }
    return k;
}

json intrinsics_to_json(const CameraIntrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

using Setter = std::function<void(Config&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto num = [&t](const char* key, auto member) {
            t[key] = [member](Config& c, const json& v, const std::string& k) { c.*member = get_number(v, k); };
        };
        auto w = [&t](const char* key, double EnergyWeights::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.weights.*m = get_number(v, k); };
        };
        w("lambda_opti", &EnergyWeights::lambda_opti);
        w("lambda_point", &EnergyWeights::lambda_point);
        w("lambda_plane", &EnergyWeights::lambda_plane);
        w("lambda_proj", &EnergyWeights::lambda_proj);
        w("lambda_iso", &EnergyWeights::lambda_iso);
        w("lambda_reg", &EnergyWeights::lambda_reg);
        w("lambda_short", &EnergyWeights::lambda_short);
        w("epsilon", &EnergyWeights::epsilon);
        w("d_A", &EnergyWeights::d_A);
        w("sigma_c", &EnergyWeights::sigma_c);
        w("sigma_d", &EnergyWeights::sigma_d);
        w("sigma_t", &EnergyWeights::sigma_t);
        w("sigma_1", &EnergyWeights::sigma_1);
        w("sigma_2", &EnergyWeights::sigma_2);

        auto si = [&t](const char* key, int SolverParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.solver.*m = get_int(v, k); };
        };
        auto sd = [&t](const char* key, double SolverParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.solver.*m = get_number(v, k); };
        };
        si("levels", &SolverParams::levels);
        si("gn_iters_per_level", &SolverParams::gn_iters_per_level);
        si("pcg_iters", &SolverParams::pcg_iters);
        si("icp_rounds", &SolverParams::icp_rounds);
        sd("damping", &SolverParams::damping);
        sd("energy_tol", &SolverParams::energy_tol);
        sd("correspondence_gate", &SolverParams::correspondence_gate);
        si("normal_neighbors", &SolverParams::normal_neighbors);

        auto fi = [&t](const char* key, int FlowParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.flow.*m = get_int(v, k); };
        };
        auto fd = [&t](const char* key, double FlowParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.flow.*m = get_number(v, k); };
        };
        fi("flow_pyramid_levels", &FlowParams::pyramid_levels);
        fi("flow_warps_per_level", &FlowParams::warps_per_level);
        fd("flow_alpha", &FlowParams::alpha);
        fi("flow_median_radius", &FlowParams::median_radius);
        fi("flow_inner_iterations", &FlowParams::inner_iterations);
        fd("flow_median_sigma", &FlowParams::median_sigma);

        auto bi = [&t](const char* key, int FillParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.fill.*m = get_int(v, k); };
        };
        auto bd = [&t](const char* key, double FillParams::*m) {
            t[key] = [m](Config& c, const json& v, const std::string& k) { c.fill.*m = get_number(v, k); };
        };
        bi("bilateral_radius", &FillParams::bilateral_radius);
        bd("bilateral_sigma_space", &FillParams::bilateral_sigma_space);
        bd("bilateral_sigma_color", &FillParams::bilateral_sigma_color);
        bi("bilateral_min_neighbors", &FillParams::bilateral_min_neighbors);
        bd("merge_tolerance", &FillParams::merge_tolerance);

        num("depth_scale", &Config::depth_scale);
        t["depth_unit"] = [](Config& c, const json& v, const std::string& k) { c.depth_unit = get_string(v, k); };
        t["detect_topology"] = [](Config& c, const json& v, const std::string& k) { c.detect_topology = get_bool(v, k); };
        t["backward_pass"] = [](Config& c, const json& v, const std::string& k) { c.backward_pass = get_bool(v, k); };
        t["rig"] = [](Config& c, const json& v, const std::string&) { c.rig = parse_rig(v, "rig"); };
        t["crop"] = [](Config& c, const json& v, const std::string&) {
            check_keys(v, {"x", "y", "width", "height"}, "crop");
            camera::CropRect r;
            for (const char* req : {"x", "y", "width", "height"})
                if (!v.contains(req)) throw ConfigError(std::string("crop.") + req, "missing");
            r.x = get_int(v["x"], "crop.x");
            r.y = get_int(v["y"], "crop.y");
            r.width = get_int(v["width"], "crop.width");
            r.height = get_int(v["height"], "crop.height");
            if (r.x < 0 || r.y < 0 || r.width <= 0 || r.height <= 0) throw ConfigError("crop", "invalid rectangle");
            c.crop = r;
        };
        t["layout"] = [](Config& c, const json& v, const std::string&) {
            check_keys(v, {"color_dir", "depth_dir", "color_ext", "depth_ext", "prefix", "digits"}, "layout");
            auto& l = c.layout;
            if (v.contains("color_dir")) l.color_dir = get_string(v["color_dir"], "layout.color_dir");
            if (v.contains("depth_dir")) l.depth_dir = get_string(v["depth_dir"], "layout.depth_dir");
            if (v.contains("color_ext")) l.color_ext = get_string(v["color_ext"], "layout.color_ext");
            if (v.contains("depth_ext")) l.depth_ext = get_string(v["depth_ext"], "layout.depth_ext");
            if (v.contains("prefix")) l.prefix = get_string(v["prefix"], "layout.prefix");
            if (v.contains("digits")) l.digits = get_int(v["digits"], "layout.digits");
            if (l.digits < 1 || l.digits > 12) throw ConfigError("layout.digits", "must be in [1, 12]");
        };
        return t;
    }();
    return table;
}

void validate_all(const Config& c) {
    auto wrap = [](const char* group, auto&& fn) {
        try {
            fn();
        } catch (const InputError& e) {
            throw ConfigError(group, e.what());
        }
    };
    wrap("weights", [&] { c.weights.validate(); });
    wrap("solver", [&] { c.solver.validate(); });
    wrap("flow", [&] { c.flow.validate(); });
    wrap("fill", [&] { c.fill.validate(); });
    if (!(c.depth_scale > 0.0) || !std::isfinite(c.depth_scale)) throw ConfigError("depth_scale", "must be positive");
}

}  // namespace

CameraRig parse_rig(const json& j, const std::string& ctx) {
    check_keys(j, {"depth", "color", "depth_to_color"}, ctx);
    if (!j.contains("depth")) throw ConfigError(ctx + ".depth", "missing");
    CameraRig rig;
    rig.depth_intrinsics = parse_intrinsics(j["depth"], ctx + ".depth");
    rig.color_intrinsics = j.contains("color") ? parse_intrinsics(j["color"], ctx + ".color") : rig.depth_intrinsics;
    if (j.contains("depth_to_color")) {
        const json& t = j["depth_to_color"];
        const std::string tc = ctx + ".depth_to_color";
        check_keys(t, {"rotation", "translation"}, tc);
        if (t.contains("rotation")) {
            const json& r = t["rotation"];
            if (!r.is_array() || r.size() != 9) throw ConfigError(tc + ".rotation", "expected 9 numbers (row-major)");
            for (int k = 0; k < 9; ++k) rig.depth_to_color.rotation(k / 3, k % 3) = get_number(r[k], tc + ".rotation");
        }
        if (t.contains("translation")) {
            const json& v = t["translation"];
            if (!v.is_array() || v.size() != 3) throw ConfigError(tc + ".translation", "expected 3 numbers");
            for (int k = 0; k < 3; ++k) rig.depth_to_color.translation[k] = get_number(v[k], tc + ".translation");
        }
    }
    try {
        rig.validate();
    } catch (const InputError& e) {
        throw ConfigError(ctx, e.what());
    }
    return rig;
}

json rig_to_json(const CameraRig& rig) {
    json r = json::array(), t = json::array();
    for (int k = 0; k < 9; ++k) r.push_back(rig.depth_to_color.rotation(k / 3, k % 3));
    for (int k = 0; k < 3; ++k) t.push_back(rig.depth_to_color.translation[k]);
    return {{"depth", intrinsics_to_json(rig.depth_intrinsics)},
            {"color", intrinsics_to_json(rig.color_intrinsics)},
            {"depth_to_color", {{"rotation", r}, {"translation", t}}}};
}

Config parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<json>", std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("<json>", "top level must be an object");
    Config cfg;
    const auto& table = setters();
    for (const auto& [key, value] : j.items()) {
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError(key, "unknown key");
        it->second(cfg, value, key);
    }
    validate_all(cfg);
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(e.key(), std::string(e.what()) + " in " + path.string());
    }
}

std::string dump_config(const Config& c) {
    json j;
    const auto& w = c.weights;
    j["lambda_opti"] = w.lambda_opti;
    j["lambda_point"] = w.lambda_point;
    j["lambda_plane"] = w.lambda_plane;
    j["lambda_proj"] = w.lambda_proj;
    j["lambda_iso"] = w.lambda_iso;
    j["lambda_reg"] = w.lambda_reg;
    j["lambda_short"] = w.lambda_short;
    j["epsilon"] = w.epsilon;
    j["d_A"] = w.d_A;
    j["sigma_c"] = w.sigma_c;
    j["sigma_d"] = w.sigma_d;
    j["sigma_t"] = w.sigma_t;
    j["sigma_1"] = w.sigma_1;
    j["sigma_2"] = w.sigma_2;
    const auto& s = c.solver;
    j["levels"] = s.levels;
    j["gn_iters_per_level"] = s.gn_iters_per_level;
    j["pcg_iters"] = s.pcg_iters;
    j["icp_rounds"] = s.icp_rounds;
    j["damping"] = s.damping;
    j["energy_tol"] = s.energy_tol;
    j["correspondence_gate"] = s.correspondence_gate;
    j["normal_neighbors"] = s.normal_neighbors;
    const auto& f = c.flow;
    j["flow_pyramid_levels"] = f.pyramid_levels;
    j["flow_warps_per_level"] = f.warps_per_level;
    j["flow_alpha"] = f.alpha;
    j["flow_median_radius"] = f.median_radius;
    j["flow_inner_iterations"] = f.inner_iterations;
    j["flow_median_sigma"] = f.median_sigma;
    const auto& b = c.fill;
    j["bilateral_radius"] = b.bilateral_radius;
    j["bilateral_sigma_space"] = b.bilateral_sigma_space;
    j["bilateral_sigma_color"] = b.bilateral_sigma_color;
    j["bilateral_min_neighbors"] = b.bilateral_min_neighbors;
    j["merge_tolerance"] = b.merge_tolerance;
    j["depth_scale"] = c.depth_scale;
    j["depth_unit"] = c.depth_unit;
    j["detect_topology"] = c.detect_topology;
    j["backward_pass"] = c.backward_pass;
    if (c.rig) j["rig"] = rig_to_json(*c.rig);
    if (c.crop) j["crop"] = {{"x", c.crop->x}, {"y", c.crop->y}, {"width", c.crop->width}, {"height", c.crop->height}};
    j["layout"] = {{"color_dir", c.layout.color_dir}, {"depth_dir", c.layout.depth_dir},
                   {"color_ext", c.layout.color_ext}, {"depth_ext", c.layout.depth_ext},
                   {"prefix", c.layout.prefix},       {"digits", c.layout.digits}};
    return j.dump(2);
}

}  // namespace depthweave::config
