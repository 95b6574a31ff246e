#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hyperedit/autograd.hpp"

namespace hyperedit::nn {

// Named trainable parameters; ordering is creation order and is what the
// checkpoint format serializes.
class ParamStore {
public:
    ag::Var add(const std::string& name, Tensor init);
    ag::Var get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
    std::vector<ag::Var> vars() const;
    long total_count() const;

    // Copies values from another store for every name present in both.
    void copy_matching_from(const ParamStore& other);

private:
    std::vector<std::pair<std::string, ag::Var>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const std::vector<ag::Var>& params);

private:
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Single-file checkpoint: magic, JSON header (config + parameter manifest),
// then raw little-endian doubles in manifest order.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json);
// Loads into an already-constructed store; shapes must match.
std::string load_checkpoint(const std::string& path, ParamStore& params);
// Reads only the config header.
std::string read_checkpoint_config(const std::string& path);

}  // namespace hyperedit::nn
