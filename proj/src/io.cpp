#include "mge/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mge {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

void write_ppm(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.extent(2) != 3)
        throw std::invalid_argument("write_ppm: image must be [H x W x 3], got " + img.shape_str());
    int64_t h = img.extent(0), w = img.extent(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w * 3; ++x) {
            double v = std::clamp(img.at((y * w * 3) + x), 0.0, 1.0);
            row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_ppm(const std::string& path, DType dtype) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("read_ppm: truncated header: " + path);
    };
    int64_t w = std::stoll(next_token()), h = std::stoll(next_token()), maxval = std::stoll(next_token());
    if (w < 1 || h < 1 || maxval != 255) throw std::runtime_error("read_ppm: unsupported header in " + path);
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> buf(static_cast<size_t>(w * h * 3));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated payload: " + path);
    Tensor img({h, w, 3}, dtype);
    for (int64_t i = 0; i < h * w * 3; ++i) img.set(i, static_cast<double>(buf[static_cast<size_t>(i)]) / 255.0);
    return img;
}

namespace {

// One row per config field: parse from string, serialize back.
struct Field {
    const char* key;
    void (*parse)(PipelineConfig&, const std::string&);
    std::string (*write)(const PipelineConfig&);
};

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_f64(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

#define INT_FIELD(name) \
    {#name, [](PipelineConfig& c, const std::string& v) { c.name = to_i64(#name, v); }, \
     [](const PipelineConfig& c) { return std::to_string(c.name); }}
#define DBL_FIELD(name) \
    {#name, [](PipelineConfig& c, const std::string& v) { c.name = to_f64(#name, v); }, \
     [](const PipelineConfig& c) { return fmt_f64(c.name); }}
#define BOOL_FIELD(name) \
    {#name, [](PipelineConfig& c, const std::string& v) { c.name = to_bool(#name, v); }, \
     [](const PipelineConfig& c) { return std::string(c.name ? "true" : "false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        INT_FIELD(H),
        INT_FIELD(W),
        INT_FIELD(T),
        INT_FIELD(T_out),
        {"M", [](PipelineConfig& c, const std::string& v) { c.M = static_cast<int>(to_i64("M", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.M); }},
        INT_FIELD(k),
        INT_FIELD(k_decode),
        INT_FIELD(d_tf),
        INT_FIELD(d_lf),
        INT_FIELD(C_img),
        INT_FIELD(C_node),
        DBL_FIELD(slope),
        DBL_FIELD(max_disp),
        DBL_FIELD(gamma),
        DBL_FIELD(eps),
        DBL_FIELD(sim_eps),
        {"loss",
         [](PipelineConfig& c, const std::string& v) {
             if (v == "mse") c.loss = LossKind::mse;
             else if (v == "l1") c.loss = LossKind::l1;
             else throw std::runtime_error("config: key 'loss' expects mse|l1, got '" + v + "'");
         },
         [](const PipelineConfig& c) { return std::string(c.loss == LossKind::mse ? "mse" : "l1"); }},
        BOOL_FIELD(spatial_on),
        BOOL_FIELD(backward_on),
        BOOL_FIELD(spatial_edge_mp),
        BOOL_FIELD(location_feature_on),
        {"seed", [](PipelineConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(to_i64("seed", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.seed); }},
        {"dtype",
         [](PipelineConfig& c, const std::string& v) {
             if (v == "f32") c.dtype = DType::f32;
             else if (v == "f64") c.dtype = DType::f64;
             else throw std::runtime_error("config: key 'dtype' expects f32|f64, got '" + v + "'");
         },
         [](const PipelineConfig& c) { return std::string(c.dtype == DType::f32 ? "f32" : "f64"); }},
        DBL_FIELD(lr_base),
        DBL_FIELD(lr_final),
        DBL_FIELD(weight_decay),
        INT_FIELD(train_steps),
    };
    return f;
}

#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) + " is not 'key = value': " + line);
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        bool found = false;
        for (const Field& f : fields())
            if (key == f.key) {
                f.parse(cfg, value);
                found = true;
                break;
            }
        if (!found) throw std::runtime_error("config: unknown key '" + key + "' at line " + std::to_string(lineno));
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    try {
        return parse_config(read_text_file(path));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(e.what()) + " (file: " + path + ")");
    }
}

std::string config_to_text(const PipelineConfig& cfg) {
    std::ostringstream ss;
    for (const Field& f : fields()) ss << f.key << " = " << f.write(cfg) << "\n";
    return ss.str();
}

void save_checkpoint(const std::string& dir, const ParamStore& ps, const PipelineConfig& cfg) {
    fs::create_directories(dir);
    std::ostringstream manifest;
    for (const Parameter& p : ps.all()) {
        save_mgt(p.value, (fs::path(dir) / (p.name + ".mgt")).string());
        manifest << p.name << " " << p.value.shape_str() << "\n";
    }
    write_text_file((fs::path(dir) / "manifest.txt").string(), manifest.str());
    write_text_file((fs::path(dir) / "config.txt").string(), config_to_text(cfg));
}

PipelineConfig load_checkpoint(const std::string& dir, ParamStore& ps) {
    if (ps.size() != 0) throw std::invalid_argument("load_checkpoint: store must be empty");
    std::istringstream manifest(read_text_file((fs::path(dir) / "manifest.txt").string()));
    std::string line;
    while (std::getline(manifest, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::string name = line.substr(0, line.find(' '));
        Tensor value = load_mgt((fs::path(dir) / (name + ".mgt")).string());
        ps.add(name, std::move(value));
    }
    return load_config((fs::path(dir) / "config.txt").string());
}

}  // namespace mge
