#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hyperedit/image.hpp"
#include "hyperedit/metrics.hpp"
#include "hyperedit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hyperedit;

namespace {

struct GlobalOpts {
    std::string config_path;
    int seed = -1;
    std::string out_dir;
    bool verbose = false;
};

pipe::PipelineConfig resolve_config(const GlobalOpts& g) {
    pipe::PipelineConfig c;
    if (!g.config_path.empty()) c = pipe::PipelineConfig::load(g.config_path);
    if (g.seed >= 0) c.seed = static_cast<unsigned>(g.seed);
    if (!g.out_dir.empty()) c.out_dir = g.out_dir;
    return c;
}

void vlog(const GlobalOpts& g, const std::string& msg) {
    if (g.verbose) std::cerr << msg << "\n";
}

std::string out_or(const GlobalOpts& g, const std::string& fallback) {
    return g.out_dir.empty() ? fallback : g.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instruction-driven image editing pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Pipeline config file (INI)");
    app.add_option("--seed", g.seed, "Random seed override");
    app.add_option("--out", g.out_dir, "Output directory");
    app.add_flag("--verbose", g.verbose, "Verbose logging to stderr");

    auto* cmd_edit = app.add_subcommand("edit", "Run one instruction edit");
    std::string edit_image, edit_instruction;
    cmd_edit->add_option("image", edit_image, "Source PNG")->required();
    cmd_edit->add_option("instruction", edit_instruction, "Edit instruction")->required();

    auto* cmd_ti = app.add_subcommand("train-inpaint", "Train the inpainting model");
    int ti_steps = 400, ti_batch = 4, ti_n = 64, ti_size = 32;
    double ti_lr = 2e-3;
    bool ti_nohyp = false;
    std::vector<int> ti_widths;
    int ti_latent = -1;
    cmd_ti->add_option("--steps", ti_steps, "Training steps");
    cmd_ti->add_option("--batch", ti_batch, "Batch size");
    cmd_ti->add_option("--lr", ti_lr, "Learning rate");
    cmd_ti->add_option("--n", ti_n, "Corpus size");
    cmd_ti->add_option("--size", ti_size, "Image side (power of two)");
    cmd_ti->add_option("--widths", ti_widths, "Three channel widths");
    cmd_ti->add_option("--latent", ti_latent, "Latent dimension");
    cmd_ti->add_flag("--no-hypergraph", ti_nohyp, "Disable the hypergraph blocks");

    auto* cmd_tr = app.add_subcommand("train-reseg", "Train the reasoning segmenter");
    int tr_steps = 3000, tr_batch = 8, tr_n = 256, tr_size = 32, tr_held = 32;
    double tr_lr = 2e-3, tr_stop = 0.0;
    cmd_tr->add_option("--steps", tr_steps, "Training steps");
    cmd_tr->add_option("--batch", tr_batch, "Batch size");
    cmd_tr->add_option("--lr", tr_lr, "Learning rate");
    cmd_tr->add_option("--n", tr_n, "Training corpus size");
    cmd_tr->add_option("--held-out", tr_held, "Held-out corpus size");
    cmd_tr->add_option("--size", tr_size, "Image side");
    cmd_tr->add_option("--stop-giou", tr_stop, "Early-stop gIoU threshold");

    auto* cmd_gc = app.add_subcommand("gen-corpus", "Write a synthetic corpus to disk");
    std::string gc_kind = "inpaint";
    int gc_n = 64, gc_size = 32;
    cmd_gc->add_option("--kind", gc_kind, "inpaint | reseg")
        ->check(CLI::IsMember({"inpaint", "reseg"}));
    cmd_gc->add_option("--n", gc_n, "Number of samples");
    cmd_gc->add_option("--size", gc_size, "Image side");

    auto* cmd_eval = app.add_subcommand("eval", "Evaluate edited images against a manifest");
    std::string ev_manifest, ev_edited;
    bool ev_full = false;
    cmd_eval->add_option("--manifest", ev_manifest, "JSONL benchmark manifest")->required();
    cmd_eval->add_option("--edited", ev_edited, "Directory of edited images")->required();
    cmd_eval->add_flag("--full", ev_full, "Full-image metrics instead of background-only");

    auto* cmd_ab = app.add_subcommand("ablate", "Run the three-variant ablation");
    std::string ab_reseg, ab_plain, ab_hyp;
    int ab_n = 8, ab_size = 32;
    cmd_ab->add_option("--reseg", ab_reseg, "Reason-seg checkpoint")->required();
    cmd_ab->add_option("--inpaint-plain", ab_plain, "No-hypergraph inpainter checkpoint")
        ->required();
    cmd_ab->add_option("--inpaint-hyp", ab_hyp, "Hypergraph inpainter checkpoint");
    cmd_ab->add_option("--n", ab_n, "Benchmark cases");
    cmd_ab->add_option("--size", ab_size, "Image side");

    auto* cmd_ih = app.add_subcommand("inspect-hypergraph",
                                      "Dump the encoder middle-block hypergraph as JSON");
    std::string ih_image, ih_ckpt;
    double ih_tau = 0.0;
    cmd_ih->add_option("image", ih_image, "Input PNG")->required();
    cmd_ih->add_option("--checkpoint", ih_ckpt, "Inpainter checkpoint (default: config)");
    cmd_ih->add_option("--tau", ih_tau, "Threshold override (<= 0: median heuristic)");

    CLI11_PARSE(app, argc, argv);

    try {
        unsigned seed = g.seed >= 0 ? static_cast<unsigned>(g.seed) : 0u;

        if (cmd_edit->parsed()) {
            pipe::PipelineConfig config = resolve_config(g);
            vlog(g, "editing " + edit_image + ": " + edit_instruction);
            pipe::RunArtifact art = pipe::edit(edit_image, edit_instruction, config);
            if (!art.ok) {
                std::cerr << "edit failed: " << art.error << "\n";
                return 1;
            }
            std::cout << "run directory: " << art.dir << "\n";
            std::cout << "category: " << pr::category_to_string(art.plan.category)
                      << (art.reseg_used ? " (reason-seg mask)" : "") << "\n";
            return 0;
        }

        if (cmd_ti->parsed()) {
            std::string out = out_or(g, "inpaint_run");
            fs::create_directories(out);
            vae::VaeConfig vc;
            vc.image_size = ti_size;
            vc.use_hypergraph = !ti_nohyp;
            if (!ti_widths.empty()) vc.widths = ti_widths;
            if (ti_latent > 0) vc.latent_dim = ti_latent;
            vc.validate();
            vae::InpaintModel model(vc, seed);
            auto scenes = vae::generate_inpaint_corpus(seed + 1, ti_n, ti_size);
            vae::TrainConfig tc;
            tc.steps = ti_steps;
            tc.batch = ti_batch;
            tc.lr = ti_lr;
            tc.seed = seed;
            tc.log_csv = out + "/train.csv";
            auto curve = vae::train_inpainter(model, scenes, tc);
            model.save(out + "/inpaint.ckpt");
            std::cout << "final loss: " << curve.back().total << "\n"
                      << "checkpoint: " << out << "/inpaint.ckpt\n";
            return 0;
        }

        if (cmd_tr->parsed()) {
            std::string out = out_or(g, "reseg_run");
            fs::create_directories(out);
            rs::Vocabulary vocab;
            rs::ReasonSegConfig rc;
            rc.image_size = tr_size;
            rs::ReasonSegModel model(rc, vocab, seed);
            rs::CorpusConfig cc;
            cc.size = tr_size;
            auto train = rs::generate_synthetic_corpus(seed + 1, tr_n, vocab, cc);
            auto held = rs::generate_synthetic_corpus(seed + 2, tr_held, vocab, cc);
            rs::TrainConfig tc;
            tc.steps = tr_steps;
            tc.batch = tr_batch;
            tc.lr = tr_lr;
            tc.seed = seed;
            tc.stop_giou = tr_stop;
            tc.log_csv = out + "/train.csv";
            rs::train_reason_seg(model, train, held, loss::LossWeights{}, tc);
            model.save(out + "/reseg.ckpt");
            auto report = rs::evaluate_masks(model, held);
            std::cout << "held-out gIoU: " << report.giou << " cIoU: " << report.ciou << "\n"
                      << "checkpoint: " << out << "/reseg.ckpt\n";
            return 0;
        }

        if (cmd_gc->parsed()) {
            std::string out = out_or(g, "corpus");
            fs::create_directories(out);
            if (gc_kind == "inpaint") {
                vae::save_corpus(vae::generate_inpaint_corpus(seed, gc_n, gc_size), out);
            } else {
                rs::Vocabulary vocab;
                rs::CorpusConfig cc;
                cc.size = gc_size;
                rs::save_corpus(rs::generate_synthetic_corpus(seed, gc_n, vocab, cc), out,
                                vocab);
            }
            std::cout << gc_n << " samples written to " << out << "\n";
            return 0;
        }

        if (cmd_eval->parsed()) {
            auto records = metrics::load_benchmark(ev_manifest);
            std::vector<Tensor> edited;
            for (const auto& r : records) {
                std::string name = fs::path(r.source_image).filename().string();
                edited.push_back(img::load_png((fs::path(ev_edited) / name).string()));
            }
            metrics::RandomConvPyramid extractor;
            auto report = metrics::evaluate_run(records, edited, extractor, !ev_full);
            std::vector<std::pair<std::string, metrics::MetricReport>> rows;
            for (const auto& [tag, rep] : report.per_scenario) rows.emplace_back(tag, rep);
            rows.emplace_back("Overall", report.overall);
            std::cout << metrics::render_table(rows, "Methods");
            std::string out = out_or(g, ".");
            fs::create_directories(out);
            std::ofstream(out + "/report.json") << metrics::report_to_json(report) << "\n";
            std::cout << "report: " << out << "/report.json\n";
            return 0;
        }

        if (cmd_ab->parsed()) {
            pipe::PipelineConfig config = resolve_config(g);
            auto benchmark = pipe::generate_edit_benchmark(seed, ab_n, ab_size);
            auto reseg = rs::ReasonSegModel::load(ab_reseg);
            auto plain = vae::InpaintModel::load(ab_plain);
            pipe::AblationModels models;
            models.reseg = &reseg;
            models.inpaint_plain = &plain;
            std::optional<vae::InpaintModel> hyp;
            if (!ab_hyp.empty()) {
                hyp.emplace(vae::InpaintModel::load(ab_hyp));
                models.inpaint_hyp = &*hyp;
            }
            auto rows = pipe::run_ablation(benchmark, models, config);
            std::string table = pipe::render_ablation_table(rows);
            std::cout << table;
            std::string out = out_or(g, ".");
            fs::create_directories(out);
            std::ofstream(out + "/ablation.txt") << table;
            return 0;
        }

        if (cmd_ih->parsed()) {
            pipe::PipelineConfig config = resolve_config(g);
            std::string ckpt = ih_ckpt.empty() ? config.inpaint_checkpoint : ih_ckpt;
            if (ckpt.empty()) {
                std::cerr << "inspect-hypergraph: no inpainter checkpoint given\n";
                return 1;
            }
            auto model = vae::InpaintModel::load(ckpt);
            Tensor image = img::load_png(ih_image);
            Tensor mask = Tensor::zeros({1, image.shape[1], image.shape[2]});
            auto graph = model.middle_hypergraph(image, mask, ih_tau);
            std::cout << graph.to_json() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
