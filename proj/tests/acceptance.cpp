// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Heavier criteria print their runtime so budget regressions are
// visible in the test log.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "hyperedit/image.hpp"
#include "hyperedit/losses.hpp"
#include "hyperedit/metrics.hpp"
#include "hyperedit/pipeline.hpp"
#include "hyperedit/promptist.hpp"
#include "hyperedit/reasonseg.hpp"
#include "hyperedit/vae.hpp"

using namespace hyperedit;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

// step cap for the ablation segmenter; early stopping usually ends sooner
constexpr int kAblationResegSteps = 1600;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& why) {
        if (!cond && ok) {
            ok = false;
            detail = why;
        }
    }
};

// 1. hypconv agrees with the dense normalized-incidence oracle.
Check criterion1() {
    Check c;
    std::mt19937 rng(41);
    std::uniform_int_distribution<int> pick_n(1, 32), pick_e(1, 32), pick_c(1, 8), act(0, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        int n = pick_n(rng), e = pick_e(rng);
        int cin = pick_c(rng), cmid = pick_c(rng), cout = pick_c(rng);
        hg::Hypergraph g = th::random_hypergraph(rng, n, e);
        Tensor x = th::random_tensor({cin, n}, rng);
        hg::HyPConvLayer layer{th::random_tensor({cin, cmid}, rng),
                               th::random_tensor({cmid, cout}, rng),
                               th::random_tensor({cout}, rng),
                               static_cast<hg::Activation>(act(rng))};
        worst = std::max(worst, th::max_abs_diff(hg::hypconv(x, g, layer),
                                                 th::dense_hypconv(x, g, layer)));
    }
    c.require(worst < 1e-6, "max abs err " + std::to_string(worst));
    c.detail = "1000 instances, max abs err " + std::to_string(worst);
    return c;
}

// 2. analytic gradients match central finite differences.
Check criterion2() {
    Check c;
    std::mt19937 rng(43);
    std::uniform_int_distribution<int> pick_n(2, 6), pick_e(1, 4), pick_c(1, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int n = pick_n(rng), e = pick_e(rng);
        int cin = pick_c(rng), cmid = pick_c(rng), cout = pick_c(rng);
        hg::Hypergraph g = th::random_hypergraph(rng, n, e);
        auto x = ag::param(th::random_tensor({cin, n}, rng));
        auto wv = ag::param(th::random_tensor({cin, cmid}, rng));
        auto we = ag::param(th::random_tensor({cmid, cout}, rng));
        auto b = ag::param(th::random_tensor({cout}, rng));
        auto build = [&] { return ag::mean(hg::hypconv(x, g, wv, we, b, hg::Activation::Gelu)); };
        worst = std::max(worst, th::max_grad_rel_err({x, wv, we, b}, build));

        Tensor gt({1, 4, 4});
        Tensor pred({1, 4, 4});
        std::uniform_real_distribution<double> unit(0.05, 0.95);
        for (long i = 0; i < 16; ++i) {
            gt.data[i] = unit(rng) < 0.5 ? 1.0 : 0.0;
            pred.data[i] = unit(rng);
        }
        auto p = ag::param(pred);
        auto build_mask = [&] { return loss::mask_loss(p, gt, loss::LossWeights{}); };
        worst = std::max(worst, th::max_grad_rel_err({p}, build_mask));
    }
    c.require(worst < 1e-4, "max rel err " + std::to_string(worst));
    c.detail = "100 instances each, max rel err " + std::to_string(worst);
    return c;
}

// 3. closed-form loss identities.
Check criterion3() {
    Check c;
    Tensor ones = Tensor::full({1, 4, 4}, 1.0);
    c.require(std::abs(loss::dice_loss(ones, ones)) < 1e-6, "dice(perfect) != 0");

    auto mask4 = [](auto&& pred) {
        Tensor t = Tensor::zeros({1, 4, 4});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                if (pred(y, x)) t.at(0, y, x) = 1.0;
        return t;
    };
    Tensor top = mask4([](int y, int) { return y < 2; });
    Tensor bottom = mask4([](int y, int) { return y >= 2; });
    Tensor left = mask4([](int, int x) { return x < 2; });
    c.require(std::abs(loss::dice_loss(top, bottom) - (1.0 - 1.0 / 17.0)) < 1e-6,
              "dice(disjoint halves) != 1 - 1/17");
    c.require(std::abs(loss::dice_loss(top, left) - (1.0 - 9.0 / 17.0)) < 1e-6,
              "dice(half overlap) != 1 - 9/17");

    Tensor half = Tensor::full({1, 4, 4}, 0.5);
    c.require(std::abs(loss::bce_loss(half, ones) - std::log(2.0)) < 1e-6, "bce(0.5) != ln 2");

    Tensor uniform = Tensor::zeros({3, 4});
    c.require(std::abs(loss::text_loss(uniform, {0, 1, 2}) - std::log(4.0)) < 1e-6,
              "text(uniform, V=4) != ln 4");
    c.detail = "dice {0, 1-1/17, 1-9/17}, bce(0.5)=ln2, text(uniform)=ln4";
    return c;
}

// 4. metric identities and exact background invariance.
Check criterion4() {
    Check c;
    std::mt19937 rng(47);
    Tensor a({3, 16, 16});
    std::uniform_real_distribution<double> unit(0.1, 0.8);
    for (double& v : a.data) v = unit(rng);
    Tensor b = a;
    for (double& v : b.data) v += 0.1;
    c.require(std::abs(metrics::psnr(a, b) - 20.0) < 1e-9, "psnr(const diff 0.1) != 20 dB");
    c.require(metrics::ssim(a, a) == 1.0, "ssim(a,a) != 1");

    Tensor mask = Tensor::zeros({1, 16, 16});
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 10; ++x) mask.at(0, y, x) = 1.0;
    Tensor edit1 = a, edit2 = a;
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 10; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                edit1.at(ch, y, x) = 0.9;
                edit2.at(ch, y, x) = 0.1;
            }
    metrics::RandomConvPyramid feat(0);
    auto r1 = metrics::evaluate_pair(a, edit1, mask, feat);
    auto r2 = metrics::evaluate_pair(a, edit2, mask, feat);
    c.require(r1.mse == r2.mse && r1.psnr_db == r2.psnr_db && r1.ssim == r2.ssim &&
                  r1.lpips_proxy == r2.lpips_proxy,
              "background metrics changed under an in-mask perturbation");
    c.detail = "psnr/ssim identities, background report bitwise invariant";
    return c;
}

// 5. toy reasoning segmentation reaches gIoU >= 0.8 on held-out superlative
// queries within the 5000-step budget.
Check criterion5() {
    Check c;
    rs::Vocabulary vocab;
    rs::ReasonSegModel model(rs::ReasonSegConfig{}, vocab, 1);
    rs::CorpusConfig cc;
    cc.size = 32;
    cc.family_ratios = {0.0, 1.0, 0.0, 0.0};  // superlative only
    auto train = rs::generate_synthetic_corpus(100, 96, vocab, cc);
    auto held = rs::generate_synthetic_corpus(101, 16, vocab, cc);
    rs::TrainConfig tc;
    tc.steps = 1500;
    tc.batch = 8;
    tc.lr = 2e-3;
    tc.seed = 1;
    tc.eval_every = 50;
    tc.stop_giou = 0.8;
    auto curve = rs::train_reason_seg(model, train, held, loss::LossWeights{}, tc);
    auto report = rs::evaluate_masks(model, held);
    c.require(curve.size() <= 5000, "exceeded the step budget");
    c.require(report.giou >= 0.8, "held-out gIoU " + std::to_string(report.giou));
    std::ostringstream d;
    d << "gIoU " << report.giou << " after " << curve.size() << " steps";
    c.detail = d.str();
    return c;
}

// 6. ablation direction over 3 seeds: +reseg beats the bbox baseline on mask
// quality, +hypconv matches or beats the plain inpainter inside the mask.
Check criterion6(const std::string& scratch) {
    Check c;
    int reseg_wins = 0, hyp_wins = 0;
    std::ostringstream detail;

    // the segmenter is a fixed pretrained component; each seed varies the
    // inpainter initialization/training and the evaluation benchmark
    rs::Vocabulary vocab;
    rs::ReasonSegModel reseg(rs::ReasonSegConfig{}, vocab, 7);
    {
        rs::CorpusConfig cc;
        cc.size = 32;
        cc.family_ratios = {1.0, 0.0, 0.0, 0.0};  // attribute phrases, as in the benchmark
        auto train = rs::generate_synthetic_corpus(500, 256, vocab, cc);
        auto held = rs::generate_synthetic_corpus(600, 12, vocab, cc);
        rs::TrainConfig rtc;
        rtc.steps = kAblationResegSteps;
        rtc.batch = 8;
        rtc.lr = 1e-3;
        rtc.seed = 7;
        rtc.eval_every = 100;
        rtc.stop_giou = 0.88;
        rs::train_reason_seg(reseg, train, held, loss::LossWeights{}, rtc);
        detail << " reseg held-out giou " << rs::evaluate_masks(reseg, held).giou << ";";
    }

    for (unsigned seed : {1u, 2u, 3u}) {
        vae::VaeConfig pc;
        pc.image_size = 32;
        pc.latent_dim = 32;
        pc.widths = {8, 16, 24};
        pc.use_hypergraph = false;
        vae::VaeConfig hc = pc;
        hc.use_hypergraph = true;
        vae::InpaintModel plain(pc, seed), hyp(hc, seed);
        auto scenes = vae::generate_inpaint_corpus(200 + seed, 48, 32);
        vae::TrainConfig vtc;
        vtc.steps = 350;
        vtc.batch = 4;
        vtc.lr = 2e-3;
        vtc.seed = seed;
        vae::train_inpainter(plain, scenes, vtc);
        vae::train_inpainter(hyp, scenes, vtc);

        auto bench = pipe::generate_edit_benchmark(300 + seed, 8, 32);
        pipe::AblationModels models{&reseg, &plain, &hyp};
        pipe::PipelineConfig config;
        auto rows = pipe::run_ablation(bench, models, config);
        if (rows.size() == 3) {
            if (rows[1].giou > rows[0].giou) ++reseg_wins;
            if (rows[2].masked_mse <= rows[1].masked_mse) ++hyp_wins;
            detail << " seed" << seed << "(giou " << rows[0].giou << "->" << rows[1].giou
                   << ", mmse " << rows[1].masked_mse << "->" << rows[2].masked_mse << ")";
            std::ofstream(scratch + "/ablation_seed" + std::to_string(seed) + ".txt")
                << pipe::render_ablation_table(rows);
        } else {
            c.require(false, "expected 3 ablation rows");
        }
    }
    c.require(reseg_wins >= 2, "+reseg beat the bbox baseline in only " +
                                   std::to_string(reseg_wins) + "/3 seeds");
    c.require(hyp_wins >= 2, "+hypconv beat the plain inpainter in only " +
                                 std::to_string(hyp_wins) + "/3 seeds");
    c.detail = "reseg wins " + std::to_string(reseg_wins) + "/3, hypconv wins " +
               std::to_string(hyp_wins) + "/3;" + detail.str();
    return c;
}

// 7. the table renderer reproduces the committed golden fixture byte for byte.
Check criterion7() {
    Check c;
    metrics::MetricReport ours;
    ours.psnr_db = 28.99;
    ours.lpips_proxy = 0.05149;
    ours.ssim = 0.92;
    ours.clip_sim = 24.43;
    ours.ins_align = 0.86;
    metrics::MetricReport plain;
    plain.psnr_db = 22.63;
    plain.lpips_proxy = 0.11361;
    plain.ssim = 0.81;
    std::string table = metrics::render_table({{"Ours", ours}, {"NoExternalScores", plain}},
                                              "Methods (toy fixture)");
    std::string golden = read_file(th::data_dir() + "/golden_table.txt");
    c.require(!golden.empty(), "missing golden fixture");
    c.require(table == golden, "rendered table differs from the golden fixture");
    c.detail = "byte-identical to tests/data/golden_table.txt";
    return c;
}

// 8. end-to-end edits only touch the dilated+blend region and reruns are
// bit-identical.
Check criterion8(const std::string& scratch) {
    Check c;
    fs::path dir = fs::path(scratch) / "pipeline";
    fs::create_directories(dir);

    vae::VaeConfig vc;
    vc.image_size = 32;
    vc.latent_dim = 16;
    vc.widths = {4, 6, 8};
    vae::InpaintModel inpaint(vc, 3);
    inpaint.save((dir / "inpaint.ckpt").string());
    rs::Vocabulary vocab;
    rs::ReasonSegConfig rc;
    rc.image_size = 32;
    rc.embed_dim = 16;
    rc.vis_ch1 = 6;
    rc.vis_ch2 = 8;
    rs::ReasonSegModel reseg(rc, vocab, 3);
    reseg.save((dir / "reseg.ckpt").string());

    pipe::PipelineConfig config;
    config.reseg_checkpoint = (dir / "reseg.ckpt").string();
    config.inpaint_checkpoint = (dir / "inpaint.ckpt").string();
    auto models = pipe::load_models(config);

    auto cases = pipe::generate_edit_benchmark(900, 20, 32);
    for (int i = 0; i < static_cast<int>(cases.size()) && c.ok; ++i) {
        fs::path src = dir / ("case" + std::to_string(i) + ".png");
        img::save_png(src.string(), cases[i].source);
        config.out_dir = (dir / ("run" + std::to_string(i))).string();
        auto run = pipe::edit(src.string(), cases[i].instruction, config, models);
        c.require(run.ok, "edit failed: " + run.error);
        if (!run.ok) break;

        Tensor input = img::load_png(run.dir + "/input.png");
        Tensor final_img = img::load_png(run.dir + "/final.png");
        Tensor mask = img::load_mask_png(run.dir + "/mask.png");
        Tensor influence = img::dilate_mask(mask, config.blend_radius);
        for (int y = 0; y < 32 && c.ok; ++y)
            for (int x = 0; x < 32; ++x)
                if (influence.at(0, y, x) == 0.0)
                    for (int ch = 0; ch < 3; ++ch)
                        c.require(final_img.at(ch, y, x) == input.at(ch, y, x),
                                  "exterior pixel changed in case " + std::to_string(i));

        auto again = pipe::rerun(run.dir, run.dir + "_rerun");
        c.require(again.ok, "rerun failed: " + again.error);
        for (const char* f : {"plan.json", "mask.png", "inpainted.png", "final.png"})
            c.require(read_file(run.dir + "/" + f) == read_file(again.dir + "/" + f),
                      std::string("rerun differs in ") + f);
    }
    if (c.ok) c.detail = "20 cases, exterior bit-identical, reruns bit-identical";
    return c;
}

// 9. promptist fixture accuracy and client fallback.
Check criterion9() {
    Check c;
    auto fixtures = pr::load_fixtures(th::data_dir() + "/promptist_fixtures.jsonl");
    c.require(fixtures.size() == 50, "expected 50 fixture cases");
    int correct = 0;
    for (const auto& f : fixtures) {
        auto plan = pr::parse_instruction(f.instruction);
        if (pr::category_to_string(plan.category) == f.expected_category &&
            plan.editing_object == f.expected_object)
            ++correct;
    }
    c.require(correct == static_cast<int>(fixtures.size()),
              std::to_string(correct) + "/" + std::to_string(fixtures.size()) + " correct");

    pr::MllmClientConfig mc;
    mc.endpoint = "http://127.0.0.1:9";  // nothing listens here
    mc.timeout_seconds = 0.5;
    std::string warning;
    auto t0 = clk::now();
    auto plan = pr::mllm_analyze(mc, "png", "remove the cup", &warning);
    double took = std::chrono::duration<double>(clk::now() - t0).count();
    c.require(!warning.empty(), "fallback produced no warning");
    c.require(plan.category == pr::EditCategory::Remove, "fallback plan wrong");
    c.require(took < 3.0, "fallback took " + std::to_string(took) + "s");
    std::ostringstream d;
    d << correct << "/50 fixtures, fallback in " << took << "s";
    c.detail = d.str();
    return c;
}

}  // namespace

int main() {
    fs::path scratch = fs::temp_directory_path() / "he_acceptance";
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    struct Entry {
        int id;
        const char* name;
        double budget_seconds;  // 0: untimed
        std::function<Check()> run;
    };
    const std::vector<Entry> entries = {
        {1, "hypergraph oracle equivalence", 60.0, criterion1},
        {2, "gradient checks (hypconv, mask_loss)", 120.0, criterion2},
        {3, "loss identities", 0.0, criterion3},
        {4, "metric identities and background invariance", 0.0, criterion4},
        {5, "toy reasoning segmentation", 0.0, criterion5},
        {6, "ablation direction over 3 seeds", 0.0, [&] { return criterion6(scratch.string()); }},
        {7, "benchmark table golden fixture", 0.0, criterion7},
        {8, "pipeline integrity and rerun determinism", 300.0,
         [&] { return criterion8(scratch.string()); }},
        {9, "promptist fixtures and client fallback", 0.0, criterion9},
    };

    int failures = 0;
    for (const auto& e : entries) {
        auto t0 = clk::now();
        Check c;
        try {
            c = e.run();
        } catch (const std::exception& ex) {
            c.ok = false;
            c.detail = std::string("exception: ") + ex.what();
        }
        double took = std::chrono::duration<double>(clk::now() - t0).count();
        if (e.budget_seconds > 0.0 && took > e.budget_seconds) {
            c.ok = false;
            c.detail += " [over time budget " + std::to_string(e.budget_seconds) + "s]";
        }
        std::printf("[%s] criterion %d: %s (%s; %.1fs)\n", c.ok ? "PASS" : "FAIL", e.id, e.name,
                    c.detail.c_str(), took);
        std::fflush(stdout);
        if (!c.ok) ++failures;
    }
    return failures;
}
