#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hyperedit/config.hpp"
#include "hyperedit/promptist.hpp"
#include "hyperedit/reasonseg.hpp"
#include "hyperedit/vae.hpp"

namespace hyperedit::pipe {

struct PipelineConfig {
    std::string reseg_checkpoint;
    std::string inpaint_checkpoint;
    std::string mllm_endpoint;  // empty: rule-based instruction parsing
    double mllm_timeout_seconds = 2.0;
    double tau = 0.0;  // <= 0: median heuristic inside the inpainter
    int dilation_radius = 3;
    int blend_radius = 2;
    bool blend_enabled = true;
    int inpaint_samples = 1;
    double mask_threshold = 0.5;
    unsigned seed = 0;
    std::string out_dir = "run";

    static PipelineConfig from_ini(const cfg::IniFile& ini);
    cfg::IniFile to_ini() const;
    static PipelineConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunArtifact {
    std::string dir;
    pr::EditPlan plan;
    bool reseg_used = false;
    std::vector<StageTiming> timings;
    bool ok = true;
    std::string error;  // set when a stage failed; partial artifacts remain
};

// Models loaded once and shared across edits.
struct PipelineModels {
    std::unique_ptr<rs::ReasonSegModel> reseg;
    std::unique_ptr<vae::InpaintModel> inpaint;
};

PipelineModels load_models(const PipelineConfig& config);

Tensor rasterize_region(const std::array<double, 4>& box, int height, int width);

// Mask routing: Remove/Replace -> reason-seg on the editing object;
// Background -> reason-seg on "background"; Addition -> rasterized region
// hint; Global -> all-ones. `reseg_used` reports whether the model ran.
Tensor mask_for_plan(const pr::EditPlan& plan, const PipelineModels& models,
                     const Tensor& image, const PipelineConfig& config, bool* reseg_used);

// Full run: plan -> mask -> dilate -> inpaint -> blend, persisted under
// config.out_dir (input.png, plan.json, mask.png, inpainted.png, final.png,
// timings.json, config.ini, run.json). A failed stage leaves a partial
// directory with the error recorded.
RunArtifact edit(const std::string& image_path, const std::string& instruction,
                 const PipelineConfig& config, const PipelineModels& models);
RunArtifact edit(const std::string& image_path, const std::string& instruction,
                 const PipelineConfig& config);

// Re-executes the run recorded in an artifact directory.
RunArtifact rerun(const std::string& artifact_dir, const std::string& out_dir);

struct EditCase {
    std::string instruction;
    Tensor source;     // [3,H,W]
    Tensor gt_edited;  // scene rendered without the target
    Tensor gt_mask;    // [1,H,W]
    std::string object_phrase;
};

// Remove-style benchmark built from the synthetic shape scenes; ground truth
// is the same scene rendered without the referenced shape.
std::vector<EditCase> generate_edit_benchmark(unsigned seed, int n, int size);

struct AblationRow {
    std::string name;
    double giou = 0.0;        // predicted vs. ground-truth mask
    double psnr_db = 0.0;     // final vs. ground-truth edited image
    double ssim = 0.0;
    double mse = 0.0;
    double masked_mse = 0.0;  // MSE restricted to the ground-truth mask
};

struct AblationModels {
    const rs::ReasonSegModel* reseg = nullptr;         // null: skip +reseg rows
    const vae::InpaintModel* inpaint_plain = nullptr;  // no-hypergraph inpainter
    const vae::InpaintModel* inpaint_hyp = nullptr;    // null: skip +hypconv row
};

// Rows: baseline (bounding-box mask, plain inpainter), +reseg (predicted
// mask, plain inpainter), +hypconv (predicted mask, hypergraph inpainter).
std::vector<AblationRow> run_ablation(const std::vector<EditCase>& benchmark,
                                      const AblationModels& models,
                                      const PipelineConfig& config);
std::string render_ablation_table(const std::vector<AblationRow>& rows);

Tensor bounding_box_mask(const Tensor& mask);

}  // namespace hyperedit::pipe
