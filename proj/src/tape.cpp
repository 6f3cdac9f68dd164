#include "mge/tape.hpp"

#include <atomic>
#include <stdexcept>

namespace mge {

namespace {
thread_local Tape* g_active = nullptr;
std::atomic<uint64_t> g_next_id{1};
}  // namespace

Tape::Tape() : id_(g_next_id.fetch_add(1)) {
    if (g_active) throw std::logic_error("a tape is already active on this thread");
    g_active = this;
}

Tape::~Tape() {
    if (g_active == this) g_active = nullptr;
}

Tape* Tape::active() { return g_active; }

void Tape::record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }

void Tape::track(Tensor& t, bool leaf) {
    if (t.node && t.node->is_leaf) {
        t.node->tape_id = id_;
        return;
    }
    t.node = std::make_shared<Tensor::Node>();
    t.node->shape = t.shape();
    t.node->dtype = t.dtype();
    t.node->tape_id = id_;
    t.node->is_leaf = leaf;
}

void Tape::backward(Tensor& loss) {
    if (!loss.node || loss.node->tape_id != id_)
        throw std::logic_error("backward: tensor was not recorded on the active tape");
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar tensor");
    loss.grad().fill(1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    records_.clear();
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(value));
    Parameter& p = params_.back();
    // leaf node with a persistent grad buffer
    p.value.node = std::make_shared<Tensor::Node>();
    p.value.node->shape = p.value.shape();
    p.value.node->dtype = p.value.dtype();
    p.value.node->is_leaf = true;
    return p;
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return params_[it->second];
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

void ParamStore::attach() {
    Tape* t = Tape::active();
    if (!t) throw std::logic_error("ParamStore::attach requires an active tape");
    for (auto& p : params_) t->track(p.value, /*leaf=*/true);
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p.value.grad().fill(0.0);
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

}  // namespace mge
