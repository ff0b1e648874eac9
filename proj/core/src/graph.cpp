#include "detcnn/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "detcnn/error.hpp"

namespace detcnn {

template <typename T>
BasicModelGraph<T>::BasicModelGraph(Shape input_shape) : input_shape_(std::move(input_shape)) {}

template <typename T>
void BasicModelGraph<T>::add(const std::string& id, const LayerConfig& cfg, std::vector<std::string> inputs) {
  if (id.empty() || id == kInputNode) throw config_error("invalid node id '" + id + "'");
  if (index_.count(id)) throw config_error("duplicate node id '" + id + "'");
  std::vector<Shape> shapes;
  for (const auto& in : inputs) {
    if (in != kInputNode && !index_.count(in)) {
      throw config_error("node '" + id + "': unknown input '" + in + "'");
    }
    shapes.push_back(shape_of(in));
  }
  Node n;
  n.id = id;
  n.layer = make_layer<T>(id, cfg);
  n.inputs = std::move(inputs);
  try {
    n.layer->build(shapes);
    n.shape = n.layer->output_shape(shapes);
  } catch (const Error& e) {
    throw Error(e.kind(), "node '" + id + "' (" + to_string(cfg.kind) + "): " + e.what());
  }
  index_[id] = nodes_.size();
  nodes_.push_back(std::move(n));
  recompute_order();
}

template <typename T>
void BasicModelGraph<T>::set_output(const std::string& id) {
  if (id != kInputNode && !index_.count(id)) throw config_error("unknown output node '" + id + "'");
  // every node must be an ancestor of the output
  std::set<std::string> live{id};
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if (!live.count(*it)) throw config_error("node '" + *it + "' does not feed output '" + id + "'");
    for (const auto& in : node(*it).inputs) live.insert(in);
  }
  output_ = id;
}

template <typename T>
void BasicModelGraph<T>::recompute_order() {
  std::map<std::string, std::size_t> pending;
  std::map<std::string, std::vector<std::string>> users;
  for (const auto& n : nodes_) {
    pending[n.id] = n.inputs.size();
    for (const auto& in : n.inputs) users[in].push_back(n.id);
  }
  std::set<std::string> ready;
  auto release = [&](const std::string& id) {
    for (const auto& u : users[id]) {
      if (--pending[u] == 0) ready.insert(u);
    }
  };
  release(kInputNode);
  for (const auto& [id, count] : pending) {
    if (count == 0) ready.insert(id);
  }
  order_.clear();
  while (!ready.empty()) {
    const std::string id = *ready.begin();
    ready.erase(ready.begin());
    order_.push_back(id);
    release(id);
  }
}

template <typename T>
const typename BasicModelGraph<T>::Node& BasicModelGraph<T>::node(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw config_error("unknown node '" + id + "'");
  return nodes_[it->second];
}

template <typename T>
typename BasicModelGraph<T>::Node& BasicModelGraph<T>::node(const std::string& id) {
  const auto it = index_.find(id);
  if (it == index_.end()) throw config_error("unknown node '" + id + "'");
  return nodes_[it->second];
}

template <typename T>
const Shape& BasicModelGraph<T>::shape_of(const std::string& id) const {
  if (id == kInputNode) return input_shape_;
  return node(id).shape;
}

template <typename T>
std::vector<std::string> BasicModelGraph<T>::consumers(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    const auto& ins = node(n).inputs;
    if (std::find(ins.begin(), ins.end(), id) != ins.end()) out.push_back(n);
  }
  return out;
}

template <typename T>
std::size_t BasicModelGraph<T>::depth(const std::string& id) const {
  std::map<std::string, std::size_t> d{{kInputNode, 0}};
  for (const auto& n : order_) {
    std::size_t best = 0;
    for (const auto& in : node(n).inputs) best = std::max(best, d.at(in) + 1);
    d[n] = best;
  }
  return d.at(id);
}

template <typename T>
typename BasicModelGraph<T>::TensorT BasicModelGraph<T>::forward(const TensorT& x, const RunContext& ctx,
                                                                  Cache* cache) {
  if (x.shape().rank() != input_shape_.rank() + 1 || x.shape().unbatched() != input_shape_) {
    throw config_error("model input must be [N]" + input_shape_.str() + ", got " + x.shape().str());
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.clear();
  c[kInputNode] = x;

  // without a caller cache, drop intermediates once their last consumer ran
  std::map<std::string, std::size_t> remaining;
  if (!cache) {
    for (const auto& n : nodes_) {
      for (const auto& in : n.inputs) ++remaining[in];
    }
  }

  std::vector<const TensorT*> ins;
  for (const auto& id : order_) {
    Node& n = node(id);
    ins.clear();
    for (const auto& in : n.inputs) ins.push_back(&c.at(in));
    TensorT y = n.layer->forward(typename Layer<T>::Inputs(ins.data(), ins.size()), ctx);
    c[id] = std::move(y);
    if (!cache) {
      for (const auto& in : n.inputs) {
        if (--remaining[in] == 0 && in != output_) c.erase(in);
      }
    }
  }
  return c.at(output_);
}

template <typename T>
typename BasicModelGraph<T>::TensorT BasicModelGraph<T>::backward(const Cache& cache, const TensorT& grad_out,
                                                                   const RunContext& ctx,
                                                                   const std::string& stop_at,
                                                                   const std::string& from) {
  if (!stop_at.empty() && stop_at != kInputNode && !index_.count(stop_at)) {
    throw config_error("unknown node '" + stop_at + "'");
  }
  const std::string target = stop_at.empty() ? std::string(kInputNode) : stop_at;
  const std::string start = from.empty() ? output_ : from;
  if (start != output_ && !index_.count(start)) throw config_error("unknown node '" + start + "'");

  // need[id]: whether the gradient of id's output must be formed
  std::map<std::string, bool> need;
  need[kInputNode] = target == kInputNode && ctx.input_grads;
  for (const auto& id : order_) {
    const Node& n = node(id);
    bool v = id == target || (ctx.param_grads && !n.layer->params().empty());
    for (const auto& in : n.inputs) v = v || need[in];
    need[id] = v;
  }
  if (target == start) return grad_out;

  std::map<std::string, TensorT> grads;
  grads[start] = grad_out;
  std::vector<const TensorT*> ins;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const std::string& id = *it;
    auto g = grads.find(id);
    if (g == grads.end()) continue;
    TensorT gy = std::move(g->second);
    grads.erase(g);
    if (id == target) return gy;
    if (!need[id]) continue;

    Node& n = node(id);
    RunContext local = ctx;
    local.input_grads = false;
    for (const auto& in : n.inputs) local.input_grads = local.input_grads || need[in];
    ins.clear();
    for (const auto& in : n.inputs) ins.push_back(&cache.at(in));
    auto gx = n.layer->backward(typename Layer<T>::Inputs(ins.data(), ins.size()), cache.at(id), gy, local);
    for (std::size_t j = 0; j < n.inputs.size(); ++j) {
      const std::string& in = n.inputs[j];
      if (!need[in] || gx[j].empty()) continue;
      auto acc = grads.find(in);
      if (acc == grads.end()) {
        grads.emplace(in, std::move(gx[j]));
      } else {
        T* dst = acc->second.ptr();
        const T* src = gx[j].ptr();
        for (std::size_t k = 0; k < gx[j].size(); ++k) dst[k] += src[k];
      }
    }
  }
  const auto g = grads.find(kInputNode);
  if (g == grads.end()) return TensorT();
  return std::move(g->second);
}

template <typename T>
std::vector<ParamRef<T>> BasicModelGraph<T>::collect(bool trainable) {
  std::vector<ParamRef<T>> out;
  for (const auto& id : order_) {
    Node& n = node(id);
    std::vector<Param<T>*> ps;
    for (auto& p : trainable ? n.layer->params() : n.layer->buffers()) ps.push_back(&p);
    std::sort(ps.begin(), ps.end(), [](const Param<T>* a, const Param<T>* b) { return a->name < b->name; });
    for (auto* p : ps) out.push_back({id, p});
  }
  return out;
}

template <typename T>
std::vector<ParamRef<T>> BasicModelGraph<T>::trainables() {
  return collect(true);
}

template <typename T>
std::vector<ParamRef<T>> BasicModelGraph<T>::buffers() {
  return collect(false);
}

template <typename T>
std::vector<RegistryEntry> BasicModelGraph<T>::registry() const {
  auto* self = const_cast<BasicModelGraph*>(this);
  std::vector<RegistryEntry> out;
  for (bool trainable : {true, false}) {
    for (const auto& r : self->collect(trainable)) {
      out.push_back({r.qualified_name(), r.param->value.shape(), trainable});
    }
  }
  return out;
}

template <typename T>
std::size_t BasicModelGraph<T>::count_trainable() const {
  std::size_t total = 0;
  for (const auto& e : registry()) {
    if (e.trainable) total += e.shape.numel();
  }
  return total;
}

template <typename T>
std::size_t BasicModelGraph<T>::count_total() const {
  std::size_t total = 0;
  for (const auto& e : registry()) total += e.shape.numel();
  return total;
}

template <typename T>
std::string BasicModelGraph<T>::architecture() const {
  std::ostringstream os;
  os << "input " << input_shape_.str() << "\n";
  for (const auto& id : order_) {
    const Node& n = node(id);
    std::size_t params = 0;
    for (const auto& p : n.layer->params()) params += p.value.size();
    os << "node " << id << " kind=" << to_string(n.layer->kind()) << " inputs=";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) os << (i ? "," : "") << n.inputs[i];
    os << " shape=" << n.shape.str() << " params=" << params;
    const std::string extra = n.layer->config().describe();
    if (!extra.empty()) os << " " << extra;
    os << "\n";
  }
  os << "output " << output_ << "\n";
  os << "trainable_params " << count_trainable() << "\n";
  os << "total_params " << count_total() << "\n";
  return os.str();
}

template class BasicModelGraph<float>;
template class BasicModelGraph<double>;

}  // namespace detcnn
