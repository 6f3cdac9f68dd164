#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mge/tensor.hpp"

namespace mge {

/// Reverse-mode tape. Primitive ops append one record at creation time,
/// so replaying records in reverse order is a valid topological sweep.
/// One training step owns one tape; recording is exclusive-access.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    uint64_t id() const { return id_; }
    size_t size() const { return records_.size(); }

    void record(std::function<void()> backward_fn);

    /// Seeds d(loss)/d(loss) = 1 and replays every record once, in reverse.
    /// Clears the tape afterwards; leaf (parameter) grads survive.
    void backward(Tensor& loss);

    /// Attach an autograd node for an op output recorded on this tape.
    void track(Tensor& t, bool leaf = false);

  private:
    std::vector<std::function<void()>> records_;
    uint64_t id_;
};

/// A learnable tensor with its accumulated gradient and a name path
/// such as "encoder.stage2.conv.weight".
struct Parameter {
    std::string name;
    Tensor value;
    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}
    Tensor& grad() { return value.grad(); }
};

/// Ordered, name-addressed collection of all model parameters.
class ParamStore {
  public:
    Parameter& add(const std::string& name, Tensor value);
    Parameter& get(const std::string& name);
    bool contains(const std::string& name) const;
    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    size_t size() const { return params_.size(); }

    /// Re-attach each parameter to the active tape so a fresh forward pass
    /// records gradients into its (persistent) grad buffer.
    void attach();
    void zero_grads();
    int64_t total_elements() const;

  private:
    std::vector<Parameter> params_;
    std::map<std::string, size_t> index_;
};

}  // namespace mge
