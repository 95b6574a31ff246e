#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>

#include "helpers.hpp"
#include "hyperedit/image.hpp"
#include "hyperedit/reasonseg.hpp"

using namespace hyperedit;
namespace fs = std::filesystem;

namespace {

rs::ReasonSegConfig tiny_config() {
    rs::ReasonSegConfig cfg;
    cfg.image_size = 16;
    cfg.embed_dim = 8;
    cfg.vis_ch1 = 4;
    cfg.vis_ch2 = 6;
    return cfg;
}

}  // namespace

TEST_CASE("vocabulary round trips in-vocabulary text") {
    rs::Vocabulary vocab;
    CHECK(vocab.id(rs::kSeg) == vocab.seg_id());
    CHECK(vocab.token(vocab.pad_id()) == rs::kPad);
    for (const std::string s :
         {"please segment the red circle in the image", "the largest square is <seg> ."})
        CHECK(vocab.decode(vocab.encode(s)) == s);
    // lowercasing happens before lookup
    CHECK(vocab.decode(vocab.encode("Please Segment THE image")) == "please segment the image");
    // out-of-vocabulary words map to <unk>
    CHECK(vocab.encode("zebra") == std::vector<int>{vocab.unk_id()});
    CHECK_THROWS(vocab.id("zebra"));
    CHECK_THROWS(rs::Vocabulary({rs::kPad, rs::kBos, rs::kEos, rs::kUnk}));  // no <seg>
}

TEST_CASE("build_query normalizes the object") {
    rs::Vocabulary vocab;
    auto q = rs::build_query("the largest circle", vocab);
    CHECK(q.raw_text == "Please segment the largest circle in the image");
    CHECK(vocab.decode(q.response_ids) == "the largest circle is <seg> .");
    REQUIRE(q.seg_positions.size() == 1);
    CHECK(q.response_ids[q.seg_positions[0]] == vocab.seg_id());

    auto apple = rs::build_query("an apple", vocab);
    CHECK(apple.raw_text == "Please segment the apple in the image");

    auto vitamin = rs::build_query("food that contains the most vitamin", vocab);
    CHECK(vitamin.raw_text == "Please segment the food that contains the most vitamin in the image");
    for (int id : vitamin.token_ids) CHECK(id != vocab.unk_id());

    CHECK_THROWS(rs::build_query("", vocab));
    CHECK_THROWS(rs::build_query("the", vocab));
}

TEST_CASE("scene rendering and masks are consistent") {
    std::mt19937 rng(3);
    for (const auto& family : rs::kQueryFamilies) {
        rs::SceneSpec spec = rs::sample_scene(rng, 32, family);
        CHECK(spec.family == family);
        CHECK(!spec.object_phrase.empty());
        CHECK(spec.target >= 0);
        CHECK(spec.target < static_cast<int>(spec.shapes.size()));

        Tensor image = rs::render_scene(spec, 32);
        img::validate_image(image);
        Tensor mask = rs::shape_mask(spec.shapes[spec.target], 32);
        img::validate_mask(mask);
        double area = 0.0;
        for (double v : mask.data) area += v;
        CHECK(area > 0.0);

        // excluding the target reveals background pixels under its mask
        Tensor without = rs::render_scene(spec, 32, spec.target);
        bool differs = false;
        for (long i = 0; i < image.numel(); ++i)
            if (image.data[i] != without.data[i]) differs = true;
        CHECK(differs);
    }
}

TEST_CASE("superlative scenes keep a clear size gap") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        rs::SceneSpec spec = rs::sample_scene(rng, 32, "superlative");
        double target_r = spec.shapes[spec.target].radius;
        int target_kind = spec.shapes[spec.target].kind;
        bool largest = spec.object_phrase.rfind("largest", 0) == 0;
        // the superlative ranges over shapes of the named kind
        for (int i = 0; i < static_cast<int>(spec.shapes.size()); ++i) {
            if (i == spec.target || spec.shapes[i].kind != target_kind) continue;
            if (largest)
                CHECK(target_r > spec.shapes[i].radius * 1.3);
            else
                CHECK(target_r * 1.3 < spec.shapes[i].radius);
        }
    }
}

TEST_CASE("corpus generation is deterministic with stable family mix") {
    rs::Vocabulary vocab;
    rs::CorpusConfig cc;
    cc.size = 16;
    auto a = rs::generate_synthetic_corpus(11, 400, vocab, cc);
    auto b = rs::generate_synthetic_corpus(11, 400, vocab, cc);
    REQUIRE(a.size() == 400);
    std::map<std::string, int> counts;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(th::max_abs_diff(a[i].image, b[i].image) == 0.0);
        CHECK(th::max_abs_diff(a[i].gt_mask, b[i].gt_mask) == 0.0);
        CHECK(a[i].gt_text == b[i].gt_text);
        ++counts[a[i].family];
    }
    for (const auto& family : rs::kQueryFamilies) {
        INFO("family ", family);
        CHECK(counts[family] > 400 / 4 - 40);
        CHECK(counts[family] < 400 / 4 + 40);
    }

    // gt mask equals the target shape mask exactly
    const auto& s = a[0];
    CHECK(th::max_abs_diff(s.gt_mask, rs::shape_mask(s.scene.shapes[s.scene.target], 16)) ==
          0.0);
}

TEST_CASE("save_corpus writes image, mask, and metadata per sample") {
    rs::Vocabulary vocab;
    rs::CorpusConfig cc;
    cc.size = 16;
    auto samples = rs::generate_synthetic_corpus(13, 3, vocab, cc);
    fs::path dir = fs::temp_directory_path() / "he_rs_corpus_test";
    fs::remove_all(dir);
    rs::save_corpus(samples, dir.string(), vocab);
    for (int i = 0; i < 3; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "%05d", i);
        CHECK(fs::exists(dir / (std::string(name) + "_image.png")));
        CHECK(fs::exists(dir / (std::string(name) + "_mask.png")));
        CHECK(fs::exists(dir / (std::string(name) + "_meta.json")));
    }
    // PNG round trip preserves the binary mask exactly
    Tensor mask = img::load_mask_png((dir / "00000_mask.png").string());
    CHECK(th::max_abs_diff(mask, samples[0].gt_mask) == 0.0);
}

TEST_CASE("model forward contracts") {
    rs::Vocabulary vocab;
    rs::ReasonSegModel model(tiny_config(), vocab, 1);
    std::mt19937 rng(7);
    rs::CorpusConfig cc;
    cc.size = 16;
    auto samples = rs::generate_synthetic_corpus(17, 2, vocab, cc);
    const auto& s = samples[0];

    auto fwd = model.forward(s.image, s.query);
    CHECK(fwd.text_logits->value.shape ==
          std::vector<int>{static_cast<int>(s.query.response_ids.size()), vocab.size()});
    REQUIRE(fwd.masks.size() == s.query.seg_positions.size());
    for (const auto& m : fwd.masks) {
        CHECK(m->value.shape == std::vector<int>{1, 16, 16});
        for (double v : m->value.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    auto pred = model.predict_mask(s.image, s.query);
    CHECK(pred.soft.shape == std::vector<int>{1, 16, 16});
    Tensor hard = pred.binarized(0.5);
    for (double v : hard.data) CHECK((v == 0.0 || v == 1.0));

    CHECK_THROWS(model.forward(Tensor::zeros({3, 8, 8}), s.query));  // wrong image size
}

TEST_CASE("seg embedding extraction selects the right rows") {
    rs::Vocabulary vocab;
    rs::ReasonSegModel model(tiny_config(), vocab, 2);
    auto q = rs::build_query("red circle", vocab);
    auto hidden = model.response_hidden(q);
    CHECK(hidden->value.shape ==
          std::vector<int>{static_cast<int>(q.response_ids.size()), 8});

    auto embs = model.extract_seg_embedding(hidden->value, q.seg_positions);
    REQUIRE(embs.size() == 1);
    CHECK(embs[0].shape.size() == 1);
    CHECK(embs[0].all_finite());
    CHECK_THROWS(model.extract_seg_embedding(
        hidden->value, {static_cast<int>(q.response_ids.size())}));  // out of range

    // padding the query does not change the response hidden states
    auto padded = q;
    for (int i = 0; i < 4; ++i) padded.token_ids.push_back(vocab.pad_id());
    CHECK(th::max_abs_diff(model.response_hidden(padded)->value, hidden->value) < 1e-12);
}

TEST_CASE("iou and mask evaluation") {
    Tensor a = Tensor::zeros({1, 4, 4});
    Tensor b = Tensor::zeros({1, 4, 4});
    CHECK(rs::iou(a, b) == doctest::Approx(1.0));  // empty union convention
    a.at(0, 0, 0) = 1.0;
    CHECK(rs::iou(a, b) == doctest::Approx(0.0));
    b.at(0, 0, 0) = 1.0;
    CHECK(rs::iou(a, b) == doctest::Approx(1.0));
    b.at(0, 1, 1) = 1.0;
    CHECK(rs::iou(a, b) == doctest::Approx(0.5));

    rs::Vocabulary vocab;
    rs::ReasonSegModel model(tiny_config(), vocab, 3);
    rs::CorpusConfig cc;
    cc.size = 16;
    auto samples = rs::generate_synthetic_corpus(19, 4, vocab, cc);
    auto report = rs::evaluate_masks(model, samples);
    CHECK(report.count == 4);
    CHECK(report.giou >= 0.0);
    CHECK(report.giou <= 1.0);
    CHECK(report.ciou >= 0.0);
    CHECK(report.ciou <= 1.0);
}

TEST_CASE("model checkpoint round trip") {
    rs::Vocabulary vocab;
    rs::ReasonSegModel model(tiny_config(), vocab, 4);
    fs::path path = fs::temp_directory_path() / "he_rs_ckpt_test.bin";
    model.save(path.string());
    auto back = rs::ReasonSegModel::load(path.string());
    CHECK(back.config().image_size == 16);
    CHECK(back.vocab().size() == vocab.size());
    for (const auto& [name, p] : model.params().entries())
        CHECK(th::max_abs_diff(p->value, back.params().get(name)->value) == 0.0);
}

TEST_CASE("short training run reduces the loss deterministically") {
    rs::Vocabulary vocab;
    rs::ReasonSegModel model(tiny_config(), vocab, 5);
    rs::CorpusConfig cc;
    cc.size = 16;
    auto train = rs::generate_synthetic_corpus(23, 16, vocab, cc);
    auto held = rs::generate_synthetic_corpus(24, 4, vocab, cc);
    rs::TrainConfig tc;
    tc.steps = 20;
    tc.batch = 4;
    tc.lr = 5e-3;
    tc.seed = 2;
    auto curve = rs::train_reason_seg(model, train, held, loss::LossWeights{}, tc);
    REQUIRE(curve.size() == 20);
    CHECK(curve.back().total < curve.front().total);
    for (const auto& pt : curve) {
        CHECK(std::isfinite(pt.total));
        CHECK(pt.total == doctest::Approx(pt.txt_loss + pt.mask_loss).epsilon(1e-9));
    }

    rs::ReasonSegModel again(tiny_config(), vocab, 5);
    auto curve2 = rs::train_reason_seg(again, train, held, loss::LossWeights{}, tc);
    CHECK(curve2.back().total == doctest::Approx(curve.back().total).epsilon(1e-12));
}
