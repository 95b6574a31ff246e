#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hyperedit/tensor.hpp"

namespace hyperedit::metrics {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimL = 1.0;

// `include` selects the pixels that enter the mean: [1,H,W] with 1 = include.
// Pass no selector for the full image.
double mse(const Tensor& a, const Tensor& b, const Tensor* include = nullptr);
double psnr(const Tensor& a, const Tensor& b, const Tensor* include = nullptr);

// Grayscale by channel mean; 7x7 uniform window over valid positions only.
double ssim(const Tensor& a, const Tensor& b);

struct FeatureExtractor {
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Tensor> extract(const Tensor& image) const = 0;  // grids [C,h,w]
};

// Shipped default: fixed-seed random conv pyramid over 3 scales.
class RandomConvPyramid : public FeatureExtractor {
public:
    explicit RandomConvPyramid(unsigned seed = 0, int scales = 3, int channels = 8);
    std::vector<Tensor> extract(const Tensor& image) const override;

private:
    int scales_;
    int channels_;
    std::vector<Tensor> weights_;  // per scale [C,3,3,3]
};

// Mean squared distance between per-position unit-normalized feature vectors,
// averaged over extractor layers.
double lpips_proxy(const Tensor& a, const Tensor& b, const FeatureExtractor& extractor);

struct JointEmbedder {
    virtual ~JointEmbedder() = default;
    virtual std::vector<double> embed_image(const Tensor& image) const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
};

// Cosine similarity; absent (nullopt) when no embedder is configured.
std::optional<double> clip_sim(const Tensor& image, const std::string& text,
                               const JointEmbedder* embedder);

struct BenchmarkRecord {
    std::string source_image;
    std::string instruction;
    std::string editing_mask;
    std::string scenario_tag;
};

extern const std::vector<std::string> kScenarioTags;

// JSON-lines manifest; throws with itemized line numbers on invalid records.
std::vector<BenchmarkRecord> load_benchmark(const std::string& manifest_path,
                                            bool check_files = true);

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
    double lpips_proxy = 0.0;
    std::optional<double> clip_sim;
    std::optional<double> ins_align;  // external human annotation, never computed here
    std::string region = "background";
};

struct RunReport {
    std::map<std::string, MetricReport> per_scenario;
    MetricReport overall;
};

// Background metrics: mse/psnr over pixels with mask==0; ssim/lpips on the
// edited image with in-mask pixels replaced by the source (both are then
// invariant to in-mask changes). background=false evaluates the full image.
MetricReport evaluate_pair(const Tensor& source, const Tensor& edited, const Tensor& mask,
                           const FeatureExtractor& extractor, bool background = true,
                           const JointEmbedder* embedder = nullptr,
                           const std::string& instruction = "");

RunReport evaluate_run(const std::vector<BenchmarkRecord>& records,
                       const std::vector<Tensor>& edited_images,
                       const FeatureExtractor& extractor, bool background = true,
                       const JointEmbedder* embedder = nullptr);

std::string report_to_json(const RunReport& report);

// Text table mirroring the benchmark-table column order
// (PSNR, LPIPS x10^3, SSIM, CLIPSim, Ins-align); MSE reported x10^3 in JSON.
std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                         const std::string& title);

}  // namespace hyperedit::metrics
