#pragma once

#include <random>
#include <string>
#include <vector>

#include "hyperedit/autograd.hpp"
#include "hyperedit/hypergraph.hpp"
#include "hyperedit/nn.hpp"

namespace hyperedit::vae {

struct VaeConfig {
    int image_size = 64;  // power of two
    int latent_dim = 128;
    std::vector<int> widths = {32, 64, 128};  // after conv_in, down1, down2
    bool use_hypergraph = true;
    double tau = 0.0;  // <= 0: median pairwise distance, recomputed per forward
    double beta = 1e-3;
    double inside_weight = 4.0;

    std::string to_json() const;
    static VaeConfig from_json(const std::string& json);
    void validate() const;
    int middle_size() const { return image_size / 4; }
};

struct LatentDistribution {
    Tensor mean;          // [Z]
    Tensor log_variance;  // [Z]
};

struct EncodeResult {
    ag::Var mean;
    ag::Var log_variance;
    ag::Var middle;  // post-hypergraph middle features, the decoder skip input
    double tau_used = 0.0;
    int graph_nodes = 0;
};

struct LossBreakdown {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

// Masked-image VAE with a spatial skip from the encoder middle block into the
// decoder middle block; encoder and decoder each carry a residual hypergraph
// block after their middle block when use_hypergraph is set.
class InpaintModel {
public:
    InpaintModel(VaeConfig cfg, unsigned init_seed);

    const VaeConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // image [3,H,W], mask [1,H,W]; network input is image*(1-mask) ++ mask.
    EncodeResult encode(const Tensor& image, const Tensor& mask) const;
    LatentDistribution encode_dist(const Tensor& image, const Tensor& mask) const;
    // `skip` carries the encoder middle features into the decoder middle
    // block; null decodes with a zero skip (prior sampling).
    ag::Var decode_var(const ag::Var& z, const ag::Var* skip = nullptr) const;
    Tensor decode(const Tensor& z) const;

    // Hypergraph built at the encoder middle block for this input;
    // tau_override <= 0 keeps the configured behavior.
    hg::Hypergraph middle_hypergraph(const Tensor& image, const Tensor& mask,
                                     double tau_override = 0.0) const;

    void save(const std::string& path) const;
    static InpaintModel load(const std::string& path);

private:
    VaeConfig cfg_;
    nn::ParamStore params_;
};

// loss = mean[(1 + (inside_weight-1) mask) (recon - target)^2] + beta * KL.
ag::Var vae_inpaint_loss(const ag::Var& reconstruction, const Tensor& target,
                         const Tensor& mask, const ag::Var& mean, const ag::Var& log_variance,
                         double beta, double inside_weight, LossBreakdown* breakdown = nullptr);
LossBreakdown vae_inpaint_loss_value(const Tensor& reconstruction, const Tensor& target,
                                     const Tensor& mask, const LatentDistribution& dist,
                                     double beta, double inside_weight);

struct Scene {
    Tensor image;  // [3,H,W]
    Tensor mask;   // [1,H,W]
};

// Procedural scenes: textured gradient background plus 2-5 solid shapes, with
// rectangle / ellipse / free-form masks.
std::vector<Scene> generate_inpaint_corpus(unsigned seed, int n, int size);
void save_corpus(const std::vector<Scene>& scenes, const std::string& dir);

// Baseline oracle: masked region filled with the per-channel mean of the
// unmasked region.
Tensor mean_color_fill(const Tensor& image, const Tensor& mask);

struct TrainConfig {
    int steps = 400;
    int batch = 4;
    double lr = 2e-3;
    unsigned seed = 0;
    std::string log_csv;  // empty: no log file
};

struct TrainCurvePoint {
    int step;
    double recon;
    double kl;
    double total;
};

// Deterministic per seed; throws on non-finite loss.
std::vector<TrainCurvePoint> train_inpainter(InpaintModel& model,
                                             const std::vector<Scene>& dataset,
                                             const TrainConfig& tc);

// decode(mean latent), averaged over `samples` stochastic decodes when
// samples > 1, composited through the blend operation.
Tensor inpaint(const InpaintModel& model, const Tensor& image, const Tensor& mask,
               int samples = 1, int blend_radius = 2, unsigned sample_seed = 0,
               Tensor* raw_decode = nullptr);

}  // namespace hyperedit::vae
