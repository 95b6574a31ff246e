#include "hyperedit/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hyperedit/image.hpp"
#include "hyperedit/metrics.hpp"

namespace hyperedit::pipe {

namespace fs = std::filesystem;

PipelineConfig PipelineConfig::from_ini(const cfg::IniFile& ini) {
    PipelineConfig c;
    c.reseg_checkpoint = ini.get("models", "reseg", c.reseg_checkpoint);
    c.inpaint_checkpoint = ini.get("models", "inpaint", c.inpaint_checkpoint);
    c.mllm_endpoint = ini.get("promptist", "endpoint", c.mllm_endpoint);
    c.mllm_timeout_seconds =
        ini.get_double("promptist", "timeout_seconds", c.mllm_timeout_seconds);
    c.tau = ini.get_double("pipeline", "tau", c.tau);
    c.dilation_radius = ini.get_int("pipeline", "dilation_radius", c.dilation_radius);
    c.blend_radius = ini.get_int("pipeline", "blend_radius", c.blend_radius);
    c.blend_enabled = ini.get_bool("pipeline", "blend", c.blend_enabled);
    c.inpaint_samples = ini.get_int("pipeline", "samples", c.inpaint_samples);
    c.mask_threshold = ini.get_double("pipeline", "mask_threshold", c.mask_threshold);
    c.seed = static_cast<unsigned>(ini.get_int("pipeline", "seed", static_cast<int>(c.seed)));
    c.out_dir = ini.get("pipeline", "out_dir", c.out_dir);
    require(c.dilation_radius >= 0 && c.blend_radius >= 0 && c.inpaint_samples >= 1,
            "PipelineConfig: radii must be >= 0 and samples >= 1");
    require(c.mask_threshold > 0.0 && c.mask_threshold < 1.0,
            "PipelineConfig: mask_threshold must lie in (0,1)");
    return c;
}

cfg::IniFile PipelineConfig::to_ini() const {
    cfg::IniFile ini;
    ini.set("models", "reseg", reseg_checkpoint);
    ini.set("models", "inpaint", inpaint_checkpoint);
    ini.set("promptist", "endpoint", mllm_endpoint);
    ini.set("promptist", "timeout_seconds", mllm_timeout_seconds);
    ini.set("pipeline", "tau", tau);
    ini.set("pipeline", "dilation_radius", dilation_radius);
    ini.set("pipeline", "blend_radius", blend_radius);
    ini.set("pipeline", "blend", blend_enabled);
    ini.set("pipeline", "samples", inpaint_samples);
    ini.set("pipeline", "mask_threshold", mask_threshold);
    ini.set("pipeline", "seed", static_cast<int>(seed));
    ini.set("pipeline", "out_dir", out_dir);
    return ini;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    return from_ini(cfg::IniFile::load(path));
}

void PipelineConfig::save(const std::string& path) const { to_ini().save(path); }

PipelineModels load_models(const PipelineConfig& config) {
    PipelineModels m;
    require(!config.inpaint_checkpoint.empty(), "pipeline: inpaint checkpoint is required");
    m.inpaint = std::make_unique<vae::InpaintModel>(
        vae::InpaintModel::load(config.inpaint_checkpoint));
    if (!config.reseg_checkpoint.empty())
        m.reseg = std::make_unique<rs::ReasonSegModel>(
            rs::ReasonSegModel::load(config.reseg_checkpoint));
    return m;
}

Tensor rasterize_region(const std::array<double, 4>& box, int height, int width) {
    require(height > 0 && width > 0, "rasterize_region: bad size");
    require(box[0] >= 0.0 && box[0] < box[2] && box[2] <= 1.0 && box[1] >= 0.0 &&
                box[1] < box[3] && box[3] <= 1.0,
            "rasterize_region: invalid bbox");
    Tensor mask = Tensor::zeros({1, height, width});
    for (int y = 0; y < height; ++y) {
        double cy = (y + 0.5) / height;
        if (cy < box[1] || cy >= box[3]) continue;
        for (int x = 0; x < width; ++x) {
            double cx = (x + 0.5) / width;
            if (cx >= box[0] && cx < box[2]) mask.at(0, y, x) = 1.0;
        }
    }
    return mask;
}

Tensor mask_for_plan(const pr::EditPlan& plan, const PipelineModels& models,
                     const Tensor& image, const PipelineConfig& config, bool* reseg_used) {
    int h = image.shape[1], w = image.shape[2];
    if (reseg_used) *reseg_used = false;
    switch (plan.category) {
        case pr::EditCategory::Global:
            return Tensor::full({1, h, w}, 1.0);
        case pr::EditCategory::Addition:
            require(plan.region_hint.has_value(), "mask_for_plan: Addition plan without region");
            return rasterize_region(*plan.region_hint, h, w);
        default:
            break;
    }
    require(models.reseg != nullptr,
            "mask_for_plan: category needs a reason-seg model but none is loaded");
    const auto& model = *models.reseg;
    require(h == model.config().image_size && w == model.config().image_size,
            "mask_for_plan: image size does not match the reason-seg model");
    std::string object =
        plan.category == pr::EditCategory::Background ? "background" : plan.editing_object;
    auto query = rs::build_query(object, model.vocab());
    auto pred = model.predict_mask(image, query);
    if (reseg_used) *reseg_used = true;
    return pred.binarized(config.mask_threshold);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "pipeline: cannot write " + path);
    out << text;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "pipeline: cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_timings(const std::string& dir, const std::vector<StageTiming>& timings) {
    nlohmann::json j;
    double total = 0.0;
    for (const auto& t : timings) {
        j["stages"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
        total += t.seconds;
    }
    j["total_seconds"] = total;
    write_text(dir + "/timings.json", j.dump(2) + "\n");
}

}  // namespace

RunArtifact edit(const std::string& image_path, const std::string& instruction,
                 const PipelineConfig& config, const PipelineModels& models) {
    RunArtifact art;
    art.dir = config.out_dir;
    fs::create_directories(art.dir);

    auto fail = [&](const std::string& stage, const std::string& what) {
        art.ok = false;
        art.error = stage + ": " + what;
        write_text(art.dir + "/error.txt", art.error + "\n");
        write_timings(art.dir, art.timings);
        return art;
    };

    std::string image_bytes;
    try {
        image_bytes = read_bytes(image_path);
        write_text(art.dir + "/input.png", image_bytes);
        nlohmann::json run;
        run["image"] = "input.png";
        run["instruction"] = instruction;
        write_text(art.dir + "/run.json", run.dump(2) + "\n");
        config.save(art.dir + "/config.ini");
    } catch (const std::exception& e) {
        return fail("setup", e.what());
    }

    auto t0 = std::chrono::steady_clock::now();
    try {
        if (config.mllm_endpoint.empty()) {
            art.plan = pr::parse_instruction(instruction);
        } else {
            pr::MllmClientConfig mc;
            mc.endpoint = config.mllm_endpoint;
            mc.timeout_seconds = config.mllm_timeout_seconds;
            std::string warning;
            art.plan = pr::mllm_analyze(mc, image_bytes, instruction, &warning);
            if (!warning.empty()) write_text(art.dir + "/promptist_warning.txt", warning + "\n");
        }
        write_text(art.dir + "/plan.json", art.plan.to_json() + "\n");
    } catch (const std::exception& e) {
        return fail("promptist", e.what());
    }
    art.timings.push_back({"promptist", seconds_since(t0)});

    Tensor image, mask;
    t0 = std::chrono::steady_clock::now();
    try {
        image = img::load_png(art.dir + "/input.png");
        mask = mask_for_plan(art.plan, models, image, config, &art.reseg_used);
        mask = img::dilate_mask(mask, config.dilation_radius);
        img::save_mask_png(art.dir + "/mask.png", mask);
    } catch (const std::exception& e) {
        return fail("segmentation", e.what());
    }
    art.timings.push_back({"segmentation", seconds_since(t0)});

    t0 = std::chrono::steady_clock::now();
    try {
        Tensor raw;
        int radius = config.blend_enabled ? config.blend_radius : 0;
        Tensor final_img = vae::inpaint(*models.inpaint, image, mask, config.inpaint_samples,
                                        radius, config.seed, &raw);
        img::save_png(art.dir + "/inpainted.png", raw);
        img::save_png(art.dir + "/final.png", final_img);
    } catch (const std::exception& e) {
        return fail("inpaint", e.what());
    }
    art.timings.push_back({"inpaint", seconds_since(t0)});

    write_timings(art.dir, art.timings);
    return art;
}

RunArtifact edit(const std::string& image_path, const std::string& instruction,
                 const PipelineConfig& config) {
    return edit(image_path, instruction, config, load_models(config));
}

RunArtifact rerun(const std::string& artifact_dir, const std::string& out_dir) {
    nlohmann::json run = nlohmann::json::parse(read_bytes(artifact_dir + "/run.json"));
    PipelineConfig config = PipelineConfig::load(artifact_dir + "/config.ini");
    config.out_dir = out_dir;
    return edit(artifact_dir + "/" + run.at("image").get<std::string>(),
                run.at("instruction").get<std::string>(), config);
}

std::vector<EditCase> generate_edit_benchmark(unsigned seed, int n, int size) {
    require(n >= 1 && size >= 8, "generate_edit_benchmark: bad arguments");
    std::mt19937 rng(seed);
    std::vector<EditCase> cases;
    cases.reserve(n);
    for (int i = 0; i < n; ++i) {
        rs::SceneSpec scene = rs::sample_scene(rng, size, "attribute");
        EditCase ec;
        ec.object_phrase = scene.object_phrase;
        ec.instruction = "remove the " + scene.object_phrase;
        ec.source = rs::render_scene(scene, size);
        ec.gt_edited = rs::render_scene(scene, size, scene.target);
        ec.gt_mask = rs::shape_mask(scene.shapes[scene.target], size);
        cases.push_back(std::move(ec));
    }
    return cases;
}

Tensor bounding_box_mask(const Tensor& mask) {
    require(mask.shape.size() == 3 && mask.shape[0] == 1, "bounding_box_mask: expected [1,H,W]");
    int h = mask.shape[1], w = mask.shape[2];
    int y0 = h, y1 = -1, x0 = w, x1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(0, y, x) > 0.5) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    Tensor box = Tensor::zeros({1, h, w});
    if (y1 < 0) return box;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) box.at(0, y, x) = 1.0;
    return box;
}

namespace {

AblationRow evaluate_variant(const std::string& name, const std::vector<EditCase>& benchmark,
                             const rs::ReasonSegModel* reseg, const vae::InpaintModel& inpainter,
                             const PipelineConfig& config) {
    AblationRow row;
    row.name = name;
    for (const auto& ec : benchmark) {
        Tensor mask;
        if (reseg) {
            auto query = rs::build_query(ec.object_phrase, reseg->vocab());
            mask = reseg->predict_mask(ec.source, query).binarized(config.mask_threshold);
        } else {
            mask = bounding_box_mask(ec.gt_mask);
        }
        row.giou += rs::iou(mask, ec.gt_mask);
        Tensor dilated = img::dilate_mask(mask, config.dilation_radius);
        Tensor final_img = vae::inpaint(inpainter, ec.source, dilated, config.inpaint_samples,
                                        config.blend_radius, config.seed);
        row.psnr_db += metrics::psnr(ec.gt_edited, final_img);
        row.ssim += metrics::ssim(ec.gt_edited, final_img);
        row.mse += metrics::mse(ec.gt_edited, final_img);
        row.masked_mse += metrics::mse(ec.gt_edited, final_img, &ec.gt_mask);
    }
    double n = static_cast<double>(benchmark.size());
    row.giou /= n;
    row.psnr_db /= n;
    row.ssim /= n;
    row.mse /= n;
    row.masked_mse /= n;
    return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::vector<EditCase>& benchmark,
                                      const AblationModels& models,
                                      const PipelineConfig& config) {
    require(!benchmark.empty(), "run_ablation: empty benchmark");
    require(models.inpaint_plain != nullptr, "run_ablation: plain inpainter is required");
    std::vector<AblationRow> rows;
    rows.push_back(
        evaluate_variant("Baseline", benchmark, nullptr, *models.inpaint_plain, config));
    if (models.reseg) {
        rows.push_back(evaluate_variant("+ReSeg", benchmark, models.reseg,
                                        *models.inpaint_plain, config));
        if (models.inpaint_hyp)
            rows.push_back(evaluate_variant("+HyPConv", benchmark, models.reseg,
                                            *models.inpaint_hyp, config));
    }
    return rows;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %7s %10s %14s\n", "Method", "gIoU^",
                  "PSNR^", "SSIM^", "MSEx10^3v", "MaskMSEx10^3v");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-12s %8.4f %8.2f %7.4f %10.3f %14.3f\n",
                      r.name.c_str(), r.giou, r.psnr_db, r.ssim, r.mse * 1000.0,
                      r.masked_mse * 1000.0);
        out << line;
    }
    return out.str();
}

}  // namespace hyperedit::pipe
