#include "mge/tensor.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mge {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    if (shape_.empty()) throw std::invalid_argument("tensor rank must be >= 1");
    for (int64_t e : shape_)
        if (e < 1) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_to_string(shape_));
    numel_ = shape_numel(shape_);
    buf_ = std::make_shared<std::vector<unsigned char>>(static_cast<size_t>(numel_) * dtype_size(dtype_), 0);
}

Tensor Tensor::zeros(std::vector<int64_t> shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(std::vector<int64_t> shape, double value, DType dtype) {
    Tensor t(std::move(shape), dtype);
    t.fill(value);
    return t;
}

Tensor Tensor::from_values(std::vector<int64_t> shape, const std::vector<double>& values, DType dtype) {
    Tensor t(std::move(shape), dtype);
    if (static_cast<int64_t>(values.size()) != t.numel_)
        throw std::invalid_argument("from_values: " + std::to_string(values.size()) + " values for shape " +
                                    t.shape_str());
    for (int64_t i = 0; i < t.numel_; ++i) t.set(i, values[static_cast<size_t>(i)]);
    return t;
}

double Tensor::at(int64_t i) const {
    return dtype_ == DType::f32 ? static_cast<double>(data<float>()[i]) : data<double>()[i];
}

void Tensor::set(int64_t i, double v) {
    if (dtype_ == DType::f32)
        data<float>()[i] = static_cast<float>(v);
    else
        data<double>()[i] = v;
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel_));
    for (int64_t i = 0; i < numel_; ++i) out[static_cast<size_t>(i)] = at(i);
    return out;
}

void Tensor::fill(double v) {
    for (int64_t i = 0; i < numel_; ++i) set(i, v);
}

Tensor Tensor::clone() const {
    Tensor t(shape_, dtype_);
    std::memcpy(t.buf_->data(), buf_->data(), buf_->size());
    return t;
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype_) return clone();
    Tensor t(shape_, dt);
    for (int64_t i = 0; i < numel_; ++i) t.set(i, at(i));
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel_)
        throw std::invalid_argument("reshape " + shape_str() + " -> " + shape_to_string(shape) +
                                    " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    t.node = nullptr;  // callers go through ops::reshape to stay on tape
    return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor& Tensor::grad() {
    if (!node) throw std::logic_error("grad() on a tensor with no autograd node");
    if (!node->grad_store.defined()) node->grad_store = Tensor::zeros(node->shape, node->dtype);
    return node->grad_store;
}

bool Tensor::has_grad() const { return node && node->grad_store.defined(); }

namespace {
void write_u64_le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}
uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace

void save_mgt(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("MGT1", 4);
    unsigned char dt = static_cast<unsigned char>(t.dtype());
    unsigned char rk = static_cast<unsigned char>(t.rank());
    os.put(static_cast<char>(dt));
    os.put(static_cast<char>(rk));
    os.put(0);
    os.put(0);
    for (int64_t e : t.shape()) write_u64_le(os, static_cast<uint64_t>(e));
    // payload is little-endian on every platform we target
    os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.numel() * dtype_size(t.dtype())));
    if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_mgt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MGT1", 4) != 0) throw std::runtime_error("not an MGT1 file: " + path);
    int dt = is.get();
    int rk = is.get();
    is.get();
    is.get();
    if (dt != 1 && dt != 2) throw std::runtime_error("bad dtype code in " + path);
    if (rk < 1) throw std::runtime_error("bad rank in " + path);
    std::vector<int64_t> shape(static_cast<size_t>(rk));
    for (auto& e : shape) e = static_cast<int64_t>(read_u64_le(is));
    Tensor t(shape, static_cast<DType>(dt));
    is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.numel() * dtype_size(t.dtype())));
    if (!is) throw std::runtime_error("truncated payload in " + path);
    return t;
}

}  // namespace mge
