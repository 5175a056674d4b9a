#include "aggrank/params.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace aggrank::nn {

namespace {
constexpr const char* kFormatTag = "ranking-model-checkpoint";
constexpr int kFormatVersion = 1;
}  // namespace

int ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
  int id = static_cast<int>(items_.size());
  items_.push_back({name, std::move(t)});
  index_[name] = id;
  return id;
}

int ParamStore::add_uniform(const std::string& name, Tensor shape_like, double bound, Rng& rng) {
  for (double& v : shape_like.raw()) v = rng.uniform(-bound, bound);
  return add(name, std::move(shape_like));
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

int ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("unknown parameter name: " + name);
  return it->second;
}

Tensor& ParamStore::at(int id) {
  if (id < 0 || id >= count()) throw ArgumentError("parameter id out of range");
  return items_[static_cast<std::size_t>(id)].tensor;
}

const Tensor& ParamStore::at(int id) const {
  if (id < 0 || id >= count()) throw ArgumentError("parameter id out of range");
  return items_[static_cast<std::size_t>(id)].tensor;
}

const std::string& ParamStore::name(int id) const {
  if (id < 0 || id >= count()) throw ArgumentError("parameter id out of range");
  return items_[static_cast<std::size_t>(id)].name;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& item : items_) {
    if (!item.tensor.all_finite()) return false;
  }
  return true;
}

std::string ParamStore::to_json() const {
  nlohmann::ordered_json root;
  root["format"] = kFormatTag;
  root["version"] = kFormatVersion;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& item : items_) {
    nlohmann::ordered_json t;
    t["name"] = item.name;
    t["shape"] = item.tensor.shape();
    t["data"] = item.tensor.raw();
    tensors.push_back(std::move(t));
  }
  root["tensors"] = std::move(tensors);
  return root.dump();
}

ParamStore ParamStore::from_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || root.value("format", "") != kFormatTag) {
    throw SchemaError("checkpoint format tag missing or unrecognized");
  }
  if (root.value("version", -1) != kFormatVersion) {
    throw SchemaError("unsupported checkpoint version");
  }
  if (!root.contains("tensors") || !root["tensors"].is_array()) {
    throw SchemaError("checkpoint has no tensor list");
  }
  ParamStore store;
  for (const auto& t : root["tensors"]) {
    if (!t.contains("name") || !t.contains("shape") || !t.contains("data")) {
      throw SchemaError("checkpoint tensor entry is missing name/shape/data");
    }
    std::vector<std::size_t> shape = t["shape"].get<std::vector<std::size_t>>();
    std::vector<double> data = t["data"].get<std::vector<double>>();
    std::string name = t["name"].get<std::string>();
    try {
      store.add(name, Tensor::from(std::move(shape), std::move(data)));
    } catch (const ShapeError&) {
      throw SchemaError("checkpoint tensor '" + name + "' has inconsistent shape and payload");
    }
  }
  return store;
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << to_json() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

Gradients::Gradients(const ParamStore& store) {
  grads_.reserve(static_cast<std::size_t>(store.count()));
  for (int i = 0; i < store.count(); ++i) {
    Tensor t = store.at(i);
    t.fill(0.0);
    grads_.push_back(std::move(t));
  }
}

void Gradients::zero() {
  for (Tensor& g : grads_) g.fill(0.0);
}

void Gradients::add_scaled(const Gradients& other, double c) {
  if (other.count() != count()) throw ShapeError("gradient stores are not aligned");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!grads_[i].same_shape(other.grads_[i])) throw ShapeError("gradient tensor shape mismatch");
    const auto& src = other.grads_[i].raw();
    auto& dst = grads_[i].raw();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c * src[k];
  }
}

void Gradients::scale(double c) {
  for (Tensor& g : grads_) {
    for (double& v : g.raw()) v *= c;
  }
}

double Gradients::squared_norm() const {
  double acc = 0.0;
  for (const Tensor& g : grads_) {
    for (double v : g.raw()) acc += v * v;
  }
  return acc;
}

bool Gradients::all_finite() const {
  for (const Tensor& g : grads_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

}  // namespace aggrank::nn
