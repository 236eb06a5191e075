// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <png.h>

namespace morphvol {

namespace {

using json = nlohmann::json;

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }
const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

[[noreturn]] void bad(const std::string& msg) { throw std::runtime_error("tensor container: " + msg); }

}  // namespace

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string encode_tensors(const std::vector<Tensor>& tensors) {
    json entries = json::array();
    std::string payload;
    std::set<std::string> names;
    for (const auto& t : tensors) {
        if (!names.insert(t.name).second) throw std::invalid_argument("encode_tensors: duplicate name '" + t.name + "'");
        if (t.element_count() != t.data.size())
            throw std::invalid_argument("encode_tensors: '" + t.name + "' shape does not match data size");
        const std::size_t offset = payload.size();
        for (double v : t.data) {
            if (t.dtype == DType::f32) put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
            else put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
        }
        entries.push_back({{"name", t.name},
                           {"dtype", dtype_name(t.dtype)},
                           {"shape", t.shape},
                           {"offset", offset},
                           {"byteLen", payload.size() - offset}});
    }
    const std::string header = json{{"entries", entries}}.dump();
    std::string out = "NTC1";
    put_le(out, header.size(), 4);
    out += header;
    out += payload;
    return out;
}

std::vector<Tensor> decode_tensors(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 4, "NTC1") != 0) bad("missing NTC1 magic");
    const std::size_t hlen = get_le(bytes, 4, 4);
    if (8 + hlen > bytes.size()) bad("header length exceeds file size");
    json header;
    try {
        header = json::parse(bytes.substr(8, hlen));
    } catch (const json::exception& e) {
        bad(std::string("malformed header: ") + e.what());
    }
    if (!header.is_object() || !header.contains("entries") || !header["entries"].is_array()) bad("header has no entries array");
    const std::size_t base = 8 + hlen;
    const std::size_t payload = bytes.size() - base;
    std::vector<Tensor> out;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (const auto& e : header["entries"]) {
        Tensor t;
        try {
            t.name = e.at("name").get<std::string>();
            const std::string dt = e.at("dtype").get<std::string>();
            if (dt == "f32") t.dtype = DType::f32;
            else if (dt == "f64") t.dtype = DType::f64;
            else bad("unknown dtype '" + dt + "'");
            t.shape = e.at("shape").get<std::vector<std::uint64_t>>();
            const std::uint64_t off = e.at("offset").get<std::uint64_t>();
            const std::uint64_t len = e.at("byteLen").get<std::uint64_t>();
            if (t.element_count() * dtype_size(t.dtype) != len) bad("'" + t.name + "' shape and byteLen disagree");
            if (off > payload || len > payload - off) bad("'" + t.name + "' lies outside the payload");
            spans.emplace_back(off, len);
            t.data.resize(t.element_count());
            const std::size_t w = dtype_size(t.dtype);
            for (std::size_t i = 0; i < t.data.size(); ++i) {
                const std::uint64_t raw = get_le(bytes, base + off + i * w, static_cast<int>(w));
                t.data[i] = t.dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)))
                                                  : std::bit_cast<double>(raw);
            }
        } catch (const json::exception& ex) {
            bad(std::string("malformed entry: ") + ex.what());
        }
        out.push_back(std::move(t));
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].first + spans[i - 1].second) bad("overlapping entries");
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
    write_file(path, encode_tensors(tensors));
}

std::vector<Tensor> read_tensors(const std::filesystem::path& path) { return decode_tensors(read_file(path)); }

const Tensor& find_tensor(const std::vector<Tensor>& ts, const std::string& name) {
    for (const auto& t : ts)
        if (t.name == name) return t;
    throw std::runtime_error("tensor container: no entry named '" + name + "'");
}

Tensor tensor_from_mat(const std::string& name, const ad::Mat& m, DType dtype) {
    return {name, dtype, {m.rows, m.cols}, m.data};
}

ad::Mat mat_from_tensor(const Tensor& t) {
    if (t.shape.size() != 2) throw std::runtime_error("tensor '" + t.name + "' is not 2-D");
    return ad::Mat(t.shape[0], t.shape[1], t.data);
}

namespace {

Tensor eigen_tensor(const std::string& name, const Eigen::MatrixXd& m) {
    Tensor t{name, DType::f64, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
    return t;
}

template <class M>
M tensor_eigen(const Tensor& t) {
    if (t.shape.size() != 2) throw std::runtime_error("tensor '" + t.name + "' is not 2-D");
    M m(static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1]));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[static_cast<std::size_t>(i * m.cols() + j)];
    return m;
}

Tensor int_tensor(const std::string& name, const std::vector<int>& v) {
    return {name, DType::f64, {v.size()}, std::vector<double>(v.begin(), v.end())};
}

std::vector<int> tensor_ints(const Tensor& t) {
    std::vector<int> v;
    for (double d : t.data) {
        if (d != std::floor(d)) throw std::runtime_error("tensor '" + t.name + "' holds non-integer values");
        v.push_back(static_cast<int>(d));
    }
    return v;
}

}  // namespace

std::vector<Tensor> basis_to_tensors(const FaceBasis& b) {
    std::vector<int> tris;
    for (const auto& t : b.triangles) tris.insert(tris.end(), t.begin(), t.end());
    Tensor tri = int_tensor("triangles", tris);
    tri.shape = {b.triangles.size(), 3};
    return {eigen_tensor("mean_shape", b.mean_shape),
            eigen_tensor("mean_albedo", b.mean_albedo),
            eigen_tensor("id_basis", b.id_basis),
            eigen_tensor("exp_basis", b.exp_basis),
            eigen_tensor("alb_basis", b.alb_basis),
            tri,
            int_tensor("landmark_idx", b.landmark_idx),
            int_tensor("region_label", b.region_label),
            int_tensor("emphasized_landmarks", b.emphasized_landmarks),
            int_tensor("class_count", {b.class_count})};
}

FaceBasis basis_from_tensors(const std::vector<Tensor>& ts) {
    FaceBasis b;
    b.mean_shape = tensor_eigen<Points>(find_tensor(ts, "mean_shape"));
    b.mean_albedo = tensor_eigen<Points>(find_tensor(ts, "mean_albedo"));
    b.id_basis = tensor_eigen<Eigen::MatrixXd>(find_tensor(ts, "id_basis"));
    b.exp_basis = tensor_eigen<Eigen::MatrixXd>(find_tensor(ts, "exp_basis"));
    b.alb_basis = tensor_eigen<Eigen::MatrixXd>(find_tensor(ts, "alb_basis"));
    const auto tris = tensor_ints(find_tensor(ts, "triangles"));
    if (tris.size() % 3 != 0) throw std::runtime_error("basis: triangle list length not a multiple of 3");
    for (std::size_t i = 0; i < tris.size(); i += 3) b.triangles.push_back({tris[i], tris[i + 1], tris[i + 2]});
    b.landmark_idx = tensor_ints(find_tensor(ts, "landmark_idx"));
    b.region_label = tensor_ints(find_tensor(ts, "region_label"));
    b.emphasized_landmarks = tensor_ints(find_tensor(ts, "emphasized_landmarks"));
    b.class_count = tensor_ints(find_tensor(ts, "class_count")).at(0);
    b.validate();
    return b;
}

std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0;
    return static_cast<std::uint8_t>(std::lround(std::min(v, 1.0) * 255.0));
}

std::string encode_ppm(const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("encode_ppm: image must have 3 channels");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.data.size());
    for (double v : img.data) out.push_back(static_cast<char>(quantize(v)));
    return out;
}

Image decode_ppm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) throw std::runtime_error("decode_ppm: unsupported PPM header");
    in.get();
    const std::size_t start = static_cast<std::size_t>(in.tellg());
    const std::size_t n = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() < start + n) throw std::runtime_error("decode_ppm: truncated pixel data");
    Image img(w, h, 3);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_ppm(img)); }
Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

namespace {

void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

}  // namespace

namespace {

bool png_write_all(png_structp png, png_infop info, const Image& img, std::string* out, std::uint8_t* row) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_write_fn(png, out, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y) {
        for (std::size_t i = 0; i < stride; ++i) row[i] = quantize(img.data[static_cast<std::size_t>(y) * stride + i]);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    return true;
}

}  // namespace

std::string encode_png(const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("encode_png: image must have 3 channels");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("encode_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    const bool ok = info && png_write_all(png, info, img, &out, row.data());
    png_destroy_write_struct(&png, &info);
    if (!ok) throw std::runtime_error("encode_png: libpng error");
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) { write_file(path, encode_png(img)); }

Image label_image(const std::vector<int>& labels, int width, int height) {
    static const double palette[][3] = {{0.0, 0.0, 0.0}, {0.95, 0.75, 0.6}, {0.35, 0.2, 0.1}, {0.85, 0.2, 0.25},
                                        {0.2, 0.4, 0.9}, {0.3, 0.7, 0.35}, {0.9, 0.9, 0.2},  {0.6, 0.3, 0.8}};
    if (labels.size() != static_cast<std::size_t>(width) * height) throw std::invalid_argument("label_image: size mismatch");
    Image img(width, height, 3);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& c = palette[static_cast<std::size_t>(std::max(labels[i], 0)) % 8];
        for (int k = 0; k < 3; ++k) img.data[i * 3 + k] = c[k];
    }
    return img;
}

void write_image(const std::filesystem::path& path, const Image& img) {
    const std::string ext = path.extension().string();
    if (ext == ".png") write_png(path, img);
    else if (ext == ".ppm") write_ppm(path, img);
    else throw std::invalid_argument("write_image: unsupported extension '" + ext + "' (use .ppm or .png)");
}

json params_to_json(const ControlParams& p) {
    return {{"alpha", p.alpha},
            {"delta", p.delta},
            {"beta", p.beta},
            {"gamma", p.gamma},
            {"epsilon", p.epsilon},
            {"pose", {{"yaw", p.pose.yaw}, {"pitch", p.pose.pitch}, {"roll", p.pose.roll}, {"t", p.pose.t}}}};
}

namespace {

std::vector<double> block(const json& j, const char* key, std::size_t n) {
    if (!j.is_array()) throw std::invalid_argument(std::string("params: '") + key + "' must be an array");
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw std::invalid_argument(std::string("params: '") + key + "' must hold numbers");
        v.push_back(x.get<double>());
    }
    if (v.size() != n)
        throw std::invalid_argument(std::string("params: '") + key + "' needs " + std::to_string(n) + " values, got " +
                                    std::to_string(v.size()));
    return v;
}

double number(const json& j, const char* key) {
    if (!j.is_number()) throw std::invalid_argument(std::string("params: pose.") + key + " must be a number");
    return j.get<double>();
}

void overlay(ControlParams& p, const json& j, std::size_t eps, bool require_all) {
    if (!j.is_object()) throw std::invalid_argument("params: document must be an object");
    static const char* keys[] = {"alpha", "delta", "beta", "gamma", "epsilon", "pose"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return it.key() == k; }) == std::end(keys))
            throw std::invalid_argument("params: unknown key '" + it.key() + "'");
    if (require_all)
        for (const char* k : keys)
            if (!j.contains(k)) throw std::invalid_argument(std::string("params: missing '") + k + "'");
    if (j.contains("alpha")) p.alpha = block(j["alpha"], "alpha", kIdDim);
    if (j.contains("delta")) p.delta = block(j["delta"], "delta", kAlbedoDim);
    if (j.contains("beta")) p.beta = block(j["beta"], "beta", kExpDim);
    if (j.contains("gamma")) p.gamma = block(j["gamma"], "gamma", kGammaDim);
    if (j.contains("epsilon")) p.epsilon = block(j["epsilon"], "epsilon", eps);
    if (j.contains("pose")) {
        const json& q = j["pose"];
        if (!q.is_object()) throw std::invalid_argument("params: 'pose' must be an object");
        static const char* pkeys[] = {"yaw", "pitch", "roll", "t"};
        for (auto it = q.begin(); it != q.end(); ++it)
            if (std::find_if(std::begin(pkeys), std::end(pkeys), [&](const char* k) { return it.key() == k; }) == std::end(pkeys))
                throw std::invalid_argument("params: unknown pose key '" + it.key() + "'");
        if (require_all)
            for (const char* k : pkeys)
                if (!q.contains(k)) throw std::invalid_argument(std::string("params: missing pose.") + k);
        if (q.contains("yaw")) p.pose.yaw = number(q["yaw"], "yaw");
        if (q.contains("pitch")) p.pose.pitch = number(q["pitch"], "pitch");
        if (q.contains("roll")) p.pose.roll = number(q["roll"], "roll");
        if (q.contains("t")) {
            const auto t = block(q["t"], "pose.t", 3);
            p.pose.t = {t[0], t[1], t[2]};
        }
    }
    p.validate(eps);
}

}  // namespace

ControlParams params_from_json(const json& j, std::size_t epsilon_dim) {
    ControlParams p;
    p.epsilon.assign(epsilon_dim, 0.0);
    overlay(p, j, epsilon_dim, true);
    return p;
}

ControlParams merge_params(const ControlParams& base, const json& fragment, std::size_t epsilon_dim) {
    ControlParams p = base;
    overlay(p, fragment, epsilon_dim, false);
    return p;
}

}  // namespace morphvol
