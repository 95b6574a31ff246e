#include "hyperedit/nn.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hyperedit::nn {

namespace {
constexpr char kMagic[8] = {'H', 'E', 'C', 'K', 'P', 'T', '0', '1'};
}

ag::Var ParamStore::add(const std::string& name, Tensor init) {
    require(!index_.count(name), "ParamStore: duplicate parameter " + name);
    auto v = ag::param(std::move(init));
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
}

ag::Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter " + name);
    return entries_[it->second].second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

std::vector<ag::Var> ParamStore::vars() const {
    std::vector<ag::Var> out;
    out.reserve(entries_.size());
    for (const auto& [_, v] : entries_) out.push_back(v);
    return out;
}

long ParamStore::total_count() const {
    long n = 0;
    for (const auto& [_, v] : entries_) n += v->value.numel();
    return n;
}

void ParamStore::copy_matching_from(const ParamStore& other) {
    for (auto& [name, v] : entries_) {
        if (!other.has(name)) continue;
        auto o = other.get(name);
        require(o->value.same_shape(v->value), "copy_matching_from: shape mismatch for " + name);
        v->value.data = o->value.data;
    }
}

void Adam::step(const std::vector<ag::Var>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }
    require(m_.size() == params.size(), "Adam: parameter list changed");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, t_);
    double bc2 = 1.0 - std::pow(beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& val = params[i]->value;
        const Tensor& g = params[i]->grad;
        for (long j = 0; j < val.numel(); ++j) {
            m_[i].data[j] = beta1 * m_[i].data[j] + (1.0 - beta1) * g.data[j];
            v_[i].data[j] = beta2 * v_[i].data[j] + (1.0 - beta2) * g.data[j] * g.data[j];
            double mhat = m_[i].data[j] / bc1;
            double vhat = v_[i].data[j] / bc2;
            val.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json) {
    nlohmann::json header;
    header["config"] = nlohmann::json::parse(config_json);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, v] : params.entries()) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = v->value.shape;
        manifest.push_back(e);
    }
    header["params"] = manifest;
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [_, v] : params.entries())
        out.write(reinterpret_cast<const char*>(v->value.data.data()),
                  static_cast<std::streamsize>(v->value.data.size() * sizeof(double)));
    require(out.good(), "save_checkpoint: write failed for " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "checkpoint: bad magic in " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    require(in.good(), "checkpoint: truncated header in " + path);
    return nlohmann::json::parse(hs);
}

}  // namespace

std::string load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_checkpoint: cannot open " + path);
    nlohmann::json header = read_header(in, path);
    for (const auto& e : header.at("params")) {
        std::string name = e.at("name").get<std::string>();
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        auto v = params.get(name);
        require(v->value.shape == shape, "load_checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(v->value.data.data()),
                static_cast<std::streamsize>(v->value.data.size() * sizeof(double)));
        require(in.good(), "load_checkpoint: truncated blob for " + name);
    }
    return header.at("config").dump();
}

std::string read_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_checkpoint_config: cannot open " + path);
    return read_header(in, path).at("config").dump();
}

}  // namespace hyperedit::nn
