#include "depthweave/formats.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "depthweave/errors.hpp"

namespace depthweave::io {

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr float kFloInvalid = 1e10f;
constexpr double kFloThreshold = 1e9;

std::vector<unsigned char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw InputError("write failed: " + path.string());
}

template <typename T>
T swap_bytes(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
}

// Little-endian binary cursor over a file image.
class Reader {
public:
    Reader(std::vector<unsigned char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            throw ParseError(name_ + ": truncated " + what + ": expected " + std::to_string(n) + " bytes, got " +
                                 std::to_string(remaining()),
                             pos_);
    }

    template <typename T>
    T get(bool little = true) {
        need(sizeof(T), "payload");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if (little != (std::endian::native == std::endian::little)) v = swap_bytes(v);
        return v;
    }

    std::uint8_t byte() {
        need(1, "payload");
        return data_[pos_++];
    }

    // Whitespace-separated header token; '#' starts a comment when `comments` is set.
    std::string token(bool comments) {
        for (;;) {
            while (pos_ < data_.size() && std::isspace(data_[pos_])) ++pos_;
            if (comments && pos_ < data_.size() && data_[pos_] == '#') {
                while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        const std::size_t start = pos_;
        while (pos_ < data_.size() && !std::isspace(data_[pos_])) ++pos_;
        if (start == pos_) throw ParseError(name_ + ": unexpected end of header", pos_);
        return {data_.begin() + static_cast<std::ptrdiff_t>(start), data_.begin() + static_cast<std::ptrdiff_t>(pos_)};
    }

    // The single whitespace byte that ends a header.
    void header_end() {
        if (pos_ >= data_.size() || !std::isspace(data_[pos_])) throw ParseError(name_ + ": malformed header", pos_);
        ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(name_ + ": " + what, pos_); }

private:
    std::vector<unsigned char> data_;
    std::string name_;
    std::size_t pos_ = 0;
};

int parse_dim(Reader& r, const std::string& tok) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception&) {
        r.fail("bad dimension '" + tok + "'");
    }
    if (used != tok.size() || v <= 0 || v > (1 << 24)) r.fail("bad dimension '" + tok + "'");
    return static_cast<int>(v);
}

template <typename T>
void put(std::ofstream& out, T v) {
    if constexpr (std::endian::native != std::endian::little) v = swap_bytes(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

// ---------------------------------------------------------------------------

DepthMap read_pfm(const fs::path& path) {
    Reader r(slurp(path), path.string());
    const std::string magic = r.token(false);
    if (magic != "Pf") r.fail(magic == "PF" ? "color PFM is not a depth map" : "bad PFM magic '" + magic + "'");
    const int w = parse_dim(r, r.token(false));
    const int h = parse_dim(r, r.token(false));
    const std::string scale_tok = r.token(false);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        r.fail("bad PFM scale '" + scale_tok + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale)) r.fail("bad PFM scale '" + scale_tok + "'");
    r.header_end();
    const bool little = scale < 0.0;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    r.need(4 * n, "PFM payload");
    DepthMap d(w, h);
    for (int row = 0; row < h; ++row) {
        const int y = h - 1 - row;
        for (int x = 0; x < w; ++x) d.set(x, y, r.get<float>(little));
    }
    return d;
}

void write_pfm(const fs::path& path, const DepthMap& depth) {
    depth.validate();
    auto out = open_out(path);
    out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
    for (int row = 0; row < depth.height; ++row) {
        const int y = depth.height - 1 - row;
        for (int x = 0; x < depth.width; ++x) put<float>(out, depth.is_valid(x, y) ? depth.at(x, y) : 0.0f);
    }
    finish(out, path);
}

// ---------------------------------------------------------------------------

FlowField2D read_flo(const fs::path& path) {
    Reader r(slurp(path), path.string());
    const float magic = r.get<float>();
    if (magic != kFloMagic) {
        throw ParseError(path.string() + ": bad .flo magic", 0);
    }
    const auto w = r.get<std::int32_t>();
    const auto h = r.get<std::int32_t>();
    if (w <= 0 || h <= 0 || w > (1 << 24) || h > (1 << 24)) r.fail("bad .flo dimensions");
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    r.need(8 * n, ".flo payload");
    FlowField2D f(w, h);
    for (std::size_t p = 0; p < n; ++p) {
        const double u = r.get<float>(), v = r.get<float>();
        if (!(std::abs(u) <= kFloThreshold) || !(std::abs(v) <= kFloThreshold)) {
            f.u[p] = f.v[p] = 0.0;
            f.valid[p] = 0;
        } else {
            f.u[p] = u;
            f.v[p] = v;
        }
    }
    return f;
}

void write_flo(const fs::path& path, const FlowField2D& flow) {
    if (flow.u.size() != flow.size() || flow.v.size() != flow.size() || flow.valid.size() != flow.size())
        throw InputError("write_flo: inconsistent flow field");
    auto out = open_out(path);
    put<float>(out, kFloMagic);
    put<std::int32_t>(out, flow.width);
    put<std::int32_t>(out, flow.height);
    for (std::size_t p = 0; p < flow.size(); ++p) {
        put<float>(out, flow.valid[p] ? static_cast<float>(flow.u[p]) : kFloInvalid);
        put<float>(out, flow.valid[p] ? static_cast<float>(flow.v[p]) : kFloInvalid);
    }
    finish(out, path);
}

// ---------------------------------------------------------------------------

SceneFlowFile read_sf3d(const fs::path& path) {
    Reader r(slurp(path), path.string());
    r.need(4, "SF3D magic");
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.byte());
    if (std::memcmp(magic, "SF3D", 4) != 0) throw ParseError(path.string() + ": bad SF3D magic", 0);
    SceneFlowFile sf;
    const auto w = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), g = r.get<std::uint32_t>();
    if (w == 0 || h == 0 || w > (1u << 24) || h > (1u << 24) || g > (1u << 16)) r.fail("bad SF3D dimensions");
    sf.width = static_cast<int>(w);
    sf.height = static_cast<int>(h);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    r.need(12 * n * g, "SF3D payload");
    sf.frames.resize(g);
    for (auto& frame : sf.frames) {
        frame.resize(n);
        for (auto& v : frame) {
            const float x = r.get<float>(), y = r.get<float>(), z = r.get<float>();
            v = Vec3(x, y, z);
        }
    }
    return sf;
}

void write_sf3d(const fs::path& path, const SceneFlowFile& sf) {
    const std::size_t n = static_cast<std::size_t>(sf.width) * sf.height;
    for (const auto& f : sf.frames)
        if (f.size() != n) throw InputError("write_sf3d: frame size differs from width x height");
    auto out = open_out(path);
    out.write("SF3D", 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sf.width));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sf.height));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sf.frames.size()));
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (const auto& f : sf.frames) {
        for (const Vec3& v : f) {
            const bool ok = v.allFinite();
            for (int k = 0; k < 3; ++k) put<float>(out, ok ? static_cast<float>(v[k]) : nan);
        }
    }
    finish(out, path);
}

// ---------------------------------------------------------------------------

ColorImage read_ppm(const fs::path& path) {
    Reader r(slurp(path), path.string());
    const std::string magic = r.token(true);
    if (magic != "P6") r.fail("bad PPM magic '" + magic + "' (only binary P6 is supported)");
    const int w = parse_dim(r, r.token(true));
    const int h = parse_dim(r, r.token(true));
    const int maxval = parse_dim(r, r.token(true));
    if (maxval > 65535) r.fail("bad PPM maxval");
    r.header_end();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const bool wide = maxval > 255;
    r.need(n * 3 * (wide ? 2 : 1), "PPM payload");
    std::vector<float> rgb(3 * n);
    for (auto& c : rgb) {
        const unsigned v = wide ? static_cast<unsigned>(r.byte()) << 8 | r.byte() : r.byte();
        c = static_cast<float>(v) / static_cast<float>(maxval);
    }
    return ColorImage::from_rgb(w, h, std::move(rgb));
}

void write_ppm(const fs::path& path, const ColorImage& image) {
    image.validate();
    auto out = open_out(path);
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    for (float c : image.rgb) {
        const auto v = static_cast<unsigned char>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
        out.put(static_cast<char>(v));
    }
    finish(out, path);
}

GrayImage read_pgm(const fs::path& path) {
    Reader r(slurp(path), path.string());
    const std::string magic = r.token(true);
    if (magic != "P5") r.fail("bad PGM magic '" + magic + "'");
    GrayImage img;
    img.width = parse_dim(r, r.token(true));
    img.height = parse_dim(r, r.token(true));
    const int maxval = parse_dim(r, r.token(true));
    if (maxval > 255) r.fail("only 8-bit PGM is supported");
    r.header_end();
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    r.need(n, "PGM payload");
    img.pixels.resize(n);
    for (auto& p : img.pixels) p = r.byte();
    return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
        throw InputError("write_pgm: pixel count differs from width x height");
    auto out = open_out(path);
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    finish(out, path);
}

// ---------------------------------------------------------------------------

namespace {

struct PngFile {
    FILE* f = nullptr;
    ~PngFile() {
        if (f) std::fclose(f);
    }
};

// Reads into buffers allocated before setjmp so the error longjmp skips no destructors.
bool png_read_rgb8(FILE* f, std::vector<unsigned char>& buf, std::vector<png_bytep>& rows, int& w, int& h) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != static_cast<std::size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    buf.resize(stride * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool png_write_rgb8(FILE* f, int w, int h, std::vector<png_bytep>& rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

ColorImage read_png(const fs::path& path) {
    PngFile file;
    file.f = std::fopen(path.string().c_str(), "rb");
    if (!file.f) throw InputError("cannot open " + path.string());
    std::vector<unsigned char> buf;
    std::vector<png_bytep> rows;
    int w = 0, h = 0;
    if (!png_read_rgb8(file.f, buf, rows, w, h)) throw ParseError(path.string() + ": unreadable PNG", 0);
    std::vector<float> rgb(buf.size());
    for (std::size_t k = 0; k < buf.size(); ++k) rgb[k] = buf[k] / 255.0f;
    return ColorImage::from_rgb(w, h, std::move(rgb));
}

void write_png(const fs::path& path, const ColorImage& image) {
    image.validate();
    PngFile file;
    file.f = std::fopen(path.string().c_str(), "wb");
    if (!file.f) throw InputError("cannot write " + path.string());
    std::vector<unsigned char> buf(image.rgb.size());
    for (std::size_t k = 0; k < buf.size(); ++k)
        buf[k] = static_cast<unsigned char>(std::lround(std::clamp(image.rgb[k], 0.0f, 1.0f) * 255.0f));
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (int y = 0; y < image.height; ++y)
        rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * image.width * 3;
    if (!png_write_rgb8(file.f, image.width, image.height, rows)) throw InputError("write failed: " + path.string());
}

ColorImage read_color(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return read_png(path);
    return read_ppm(path);
}

// ---------------------------------------------------------------------------

DepthMap read_sintel_depth(const fs::path& path) {
    Reader r(slurp(path), path.string());
    if (r.get<float>() != kFloMagic) throw ParseError(path.string() + ": bad .dpt magic", 0);
    const auto w = r.get<std::int32_t>(), h = r.get<std::int32_t>();
    if (w <= 0 || h <= 0 || w > (1 << 24) || h > (1 << 24)) r.fail("bad .dpt dimensions");
    r.need(4 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h), ".dpt payload");
    DepthMap d(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) d.set(x, y, r.get<float>());
    return d;
}

SintelCamera read_sintel_cam(const fs::path& path) {
    Reader r(slurp(path), path.string());
    if (r.get<float>() != kFloMagic) throw ParseError(path.string() + ": bad .cam magic", 0);
    SintelCamera cam;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cam.intrinsics(i, j) = r.get<double>();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) cam.extrinsics(i, j) = r.get<double>();
    return cam;
}

CameraIntrinsics SintelCamera::to_intrinsics(int width, int height) const {
    CameraIntrinsics k;
    k.fx = intrinsics(0, 0);
    k.fy = intrinsics(1, 1);
    k.cx = intrinsics(0, 2);
    k.cy = intrinsics(1, 2);
    k.width = width;
    k.height = height;
    k.validate();
    return k;
}

}  // namespace depthweave::io
