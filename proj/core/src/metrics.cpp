#include "depthweave/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthweave/errors.hpp"

namespace depthweave::metrics {

namespace {

void check_sizes(int w0, int h0, int w1, int h1) {
    if (w0 != w1 || h0 != h1) throw InputError("metrics: sizes differ");
}

template <typename F>
double mean_over_flow(const FlowField2D& est, const FlowField2D& gt, F f) {
    check_sizes(est.width, est.height, gt.width, gt.height);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < est.size(); ++p) {
        if (!est.valid[p] || !gt.valid[p]) continue;
        sum += f(est.u[p], est.v[p], gt.u[p], gt.v[p]);
        ++n;
    }
    if (n == 0) throw UndefinedMetricError("metrics: no jointly valid flow pixels");
    return sum / static_cast<double>(n);
}

std::size_t joint_flow(const FlowField2D& a, const FlowField2D& b) {
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.size(); ++p) n += (a.valid[p] && b.valid[p]) ? 1 : 0;
    return n;
}

}  // namespace

double epe(const FlowField2D& est, const FlowField2D& gt) {
    return mean_over_flow(est, gt, [](double u, double v, double ug, double vg) { return std::hypot(u - ug, v - vg); });
}

double aae(const FlowField2D& est, const FlowField2D& gt) {
    return mean_over_flow(est, gt, [](double u, double v, double ug, double vg) {
        const double c = (u * ug + v * vg + 1.0) / (std::sqrt(u * u + v * v + 1.0) * std::sqrt(ug * ug + vg * vg + 1.0));
        return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
    });
}

double rmse_flow(const FlowField2D& est, const FlowField2D& gt) {
    return std::sqrt(mean_over_flow(est, gt, [](double u, double v, double ug, double vg) {
        return (u - ug) * (u - ug) + (v - vg) * (v - vg);
    }));
}

double rmse_depth(const DepthMap& est, const DepthMap& gt, const Mask& mask) {
    check_sizes(est.width, est.height, gt.width, gt.height);
    if (mask.size() != est.size()) throw InputError("metrics: mask size differs");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < est.size(); ++p) {
        if (!mask[p] || !est.valid[p] || !gt.valid[p]) continue;
        const double d = static_cast<double>(est.depth[p]) - gt.depth[p];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw UndefinedMetricError("metrics: no jointly valid depth pixels");
    return std::sqrt(sum / static_cast<double>(n));
}

double rmse_depth(const DepthMap& est, const DepthMap& gt) { return rmse_depth(est, gt, Mask(est.size(), 1)); }

double epe_3d(std::span<const Vec3> est, std::span<const Vec3> gt) {
    if (est.size() != gt.size()) throw InputError("metrics: sizes differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (!est[i].allFinite() || !gt[i].allFinite()) continue;
        sum += (est[i] - gt[i]).norm();
        ++n;
    }
    if (n == 0) throw UndefinedMetricError("metrics: no jointly valid scene-flow vectors");
    return sum / static_cast<double>(n);
}

MetricsReport flow_report(const FlowField2D& est, const FlowField2D& gt) {
    MetricsReport r;
    r.epe = epe(est, gt);
    r.aae = aae(est, gt);
    r.rmse_flow = rmse_flow(est, gt);
    r.valid_pixel_count = joint_flow(est, gt);
    return r;
}

MetricsReport depth_report(const DepthMap& est, const DepthMap& gt, const std::string& unit) {
    MetricsReport r;
    r.rmse_depth = rmse_depth(est, gt);
    r.depth_unit = unit;
    for (std::size_t p = 0; p < est.size(); ++p) r.valid_pixel_count += (est.valid[p] && gt.valid[p]) ? 1 : 0;
    return r;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << "valid pixels: " << valid_pixel_count << '\n';
    if (epe) os << "EPE:        " << *epe << " px\n";
    if (aae) os << "AAE:        " << *aae << " deg\n";
    if (rmse_flow) os << "RMSE flow:  " << *rmse_flow << " px\n";
    if (rmse_depth) os << "RMSE depth: " << *rmse_depth << ' ' << depth_unit << '\n';
    return os.str();
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    if (epe) j["epe"] = *epe;
    if (aae) {
        j["aae"] = *aae;
        j["aae_unit"] = "deg";
    }
    if (rmse_flow) j["rmse_flow"] = *rmse_flow;
    if (rmse_depth) {
        j["rmse_depth"] = *rmse_depth;
        j["depth_unit"] = depth_unit;
    }
    j["valid_pixel_count"] = valid_pixel_count;
    return j.dump();
}

}  // namespace depthweave::metrics
