#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mge {

enum class DType : uint8_t { f32 = 1, f64 = 2 };

inline size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }
inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

/// Dense row-major n-d array. The buffer is shared between copies;
/// values are treated as immutable once an op has consumed them.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::vector<int64_t> shape, DType dtype);

    static Tensor zeros(std::vector<int64_t> shape, DType dtype);
    static Tensor full(std::vector<int64_t> shape, double value, DType dtype);
    static Tensor from_values(std::vector<int64_t> shape, const std::vector<double>& values,
                              DType dtype);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t extent(size_t axis) const { return shape_.at(axis); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return numel_; }
    DType dtype() const { return dtype_; }
    bool defined() const { return buf_ != nullptr; }

    template <typename T>
    T* data() {
        return reinterpret_cast<T*>(buf_->data());
    }
    template <typename T>
    const T* data() const {
        return reinterpret_cast<const T*>(buf_->data());
    }
    void* raw() { return buf_->data(); }
    const void* raw() const { return buf_->data(); }

    double at(int64_t i) const;
    void set(int64_t i, double v);

    std::vector<double> to_vector() const;
    void fill(double v);
    Tensor clone() const;
    Tensor astype(DType dt) const;

    /// Metadata-only reshape; shares the buffer. product(new shape) must match.
    Tensor reshaped(std::vector<int64_t> shape) const;

    std::string shape_str() const;

    // --- autograd hooks (see tape.hpp) ---
    struct Node;
    std::shared_ptr<Node> node;  // non-null while recorded on an active tape
    bool requires_grad() const { return node != nullptr; }
    Tensor& grad();              // lazily allocated, zero-filled
    bool has_grad() const;

  private:
    std::vector<int64_t> shape_;
    DType dtype_ = DType::f64;
    int64_t numel_ = 0;
    std::shared_ptr<std::vector<unsigned char>> buf_;
};

/// Per-tensor autograd state. Shared among tensor copies via shared_ptr.
struct Tensor::Node {
    Tensor grad_store;           // same shape/dtype as the value, lazily allocated
    std::vector<int64_t> shape;
    DType dtype = DType::f64;
    uint64_t tape_id = 0;        // tape generation that recorded this node
    bool is_leaf = false;        // parameters keep grads across tapes
};

std::string shape_to_string(const std::vector<int64_t>& shape);
int64_t shape_numel(const std::vector<int64_t>& shape);

/// Binary ".mgt" tensor file:
///   magic "MGT1" | u8 dtype (1=f32, 2=f64) | u8 rank | 2 zero bytes pad to 8 |
///   rank x u64 little-endian extents | row-major little-endian payload.
void save_mgt(const Tensor& t, const std::string& path);
Tensor load_mgt(const std::string& path);

}  // namespace mge
