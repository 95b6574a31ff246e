#include "hyperedit/reasonseg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hyperedit/image.hpp"

namespace hyperedit::rs {

const std::vector<std::string> kColorNames = {"red", "green", "blue", "yellow", "purple"};
const std::vector<std::string> kShapeNames = {"circle", "square", "triangle"};
const std::vector<std::string> kQueryFamilies = {"attribute", "superlative", "spatial",
                                                 "count-position"};

namespace {

const double kColorRgb[5][3] = {
    {0.85, 0.10, 0.10}, {0.10, 0.70, 0.15}, {0.10, 0.20, 0.85},
    {0.90, 0.85, 0.10}, {0.60, 0.10, 0.75}};

std::vector<std::string> default_words() {
    std::vector<std::string> words = {kPad, kBos, kEos, kSeg, kUnk};
    for (const char* w :
         {"please", "segment", "the", "in", "image", "is", ".", "shape", "on",
          "left", "right", "middle", "largest", "smallest", "a", "an", "apple",
          "food", "that", "contains", "most", "vitamin", "cute", "cat",
          "background"})
        words.push_back(w);
    for (const auto& c : kColorNames) words.push_back(c);
    for (const auto& s : kShapeNames) words.push_back(s);
    return words;
}

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(default_words()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i) {
        require(!index_.count(tokens_[i]), "Vocabulary: duplicate token " + tokens_[i]);
        index_[tokens_[i]] = static_cast<int>(i);
    }
    require(index_.count(kSeg) == 1, "Vocabulary: <seg> must be present exactly once");
    require(index_.count(kPad) && index_.count(kBos) && index_.count(kEos) &&
                index_.count(kUnk),
            "Vocabulary: missing special tokens");
    pad_ = index_.at(kPad);
    seg_ = index_.at(kSeg);
    unk_ = index_.at(kUnk);
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    require(it != index_.end(), "Vocabulary: unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    require(id >= 0 && id < size(), "Vocabulary: id out of range");
    return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_ws(lowercase(text))) {
        auto it = index_.find(w);
        ids.push_back(it == index_.end() ? unk_ : it->second);
    }
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

SegQuery build_query(const std::string& editing_object, const Vocabulary& vocab) {
    require(!editing_object.empty(), "build_query: empty editing object");
    std::string obj = lowercase(editing_object);
    for (const char* art : {"a ", "an ", "the "})
        if (obj.rfind(art, 0) == 0) {
            obj = obj.substr(std::string(art).size());
            break;
        }
    require(!obj.empty() && obj != "a" && obj != "an" && obj != "the",
            "build_query: object reduces to empty after article stripping");

    SegQuery q;
    q.raw_text = "Please segment the " + obj + " in the image";
    q.token_ids = vocab.encode(q.raw_text);
    q.response_ids = vocab.encode("the " + obj + " is " + kSeg + " .");
    for (size_t i = 0; i < q.response_ids.size(); ++i)
        if (q.response_ids[i] == vocab.seg_id()) q.seg_positions.push_back(static_cast<int>(i));
    return q;
}

namespace {

bool inside_shape(const ShapeSpec& s, double x, double y) {
    double dx = x - s.cx, dy = y - s.cy;
    switch (s.kind) {
        case 0: return dx * dx + dy * dy <= s.radius * s.radius;
        case 1: return std::abs(dx) <= s.radius && std::abs(dy) <= s.radius;
        default: {
            double x0 = s.cx, y0 = s.cy - s.radius;
            double x1 = s.cx - s.radius * 0.866, y1 = s.cy + s.radius * 0.5;
            double x2 = s.cx + s.radius * 0.866, y2 = s.cy + s.radius * 0.5;
            auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
                return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            };
            double e0 = edge(x0, y0, x1, y1, x, y);
            double e1 = edge(x1, y1, x2, y2, x, y);
            double e2 = edge(x2, y2, x0, y0, x, y);
            return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
    }
}

}  // namespace

Tensor render_scene(const SceneSpec& spec, int size, int exclude_shape) {
    Tensor image({3, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = (spec.horizontal ? x : y) / static_cast<double>(size - 1);
            for (int c = 0; c < 3; ++c)
                image.at(c, y, x) = std::clamp(spec.bg_base[c] + spec.bg_grad[c] * t, 0.0, 1.0);
        }
    for (size_t i = 0; i < spec.shapes.size(); ++i) {
        if (static_cast<int>(i) == exclude_shape) continue;
        const ShapeSpec& s = spec.shapes[i];
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (inside_shape(s, x, y))
                    for (int c = 0; c < 3; ++c) image.at(c, y, x) = kColorRgb[s.color][c];
    }
    return image;
}

Tensor shape_mask(const ShapeSpec& shape, int size) {
    Tensor mask({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            mask.at(0, y, x) = inside_shape(shape, x, y) ? 1.0 : 0.0;
    return mask;
}

namespace {

bool place_shape(std::mt19937& rng, std::vector<ShapeSpec>& shapes, ShapeSpec s, int size) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int attempt = 0; attempt < 200; ++attempt) {
        s.cx = s.radius + 1 + uni(rng) * (size - 2 * (s.radius + 1));
        s.cy = s.radius + 1 + uni(rng) * (size - 2 * (s.radius + 1));
        bool ok = true;
        for (const auto& o : shapes) {
            double d = std::hypot(s.cx - o.cx, s.cy - o.cy);
            if (d < s.radius + o.radius + 2.0) {
                ok = false;
                break;
            }
        }
        if (ok) {
            shapes.push_back(s);
            return true;
        }
    }
    return false;
}

}  // namespace

SceneSpec sample_scene(std::mt19937& rng, int size, const std::string& family) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto pick_int = [&](int lo, int hi) {  // inclusive
        return lo + static_cast<int>(uni(rng) * (hi - lo + 1)) % (hi - lo + 1);
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        SceneSpec spec;
        spec.family = family;
        for (int c = 0; c < 3; ++c) {
            spec.bg_base[c] = 0.75 + 0.15 * uni(rng);
            spec.bg_grad[c] = (uni(rng) - 0.5) * 0.2;
        }
        spec.horizontal = uni(rng) < 0.5;

        auto radius = [&](double lo, double hi) { return size * (lo + (hi - lo) * uni(rng)); };

        if (family == "superlative") {
            int kind = pick_int(0, 2);
            bool want_largest = uni(rng) < 0.5;
            ShapeSpec big{kind, pick_int(0, 4), 0, 0, radius(0.16, 0.20)};
            ShapeSpec small{kind, pick_int(0, 4), 0, 0, radius(0.07, 0.10)};
            if (!place_shape(rng, spec.shapes, big, size)) continue;
            if (!place_shape(rng, spec.shapes, small, size)) continue;
            int extras = pick_int(0, 2);
            for (int e = 0; e < extras; ++e) {
                int other_kind = (kind + 1 + pick_int(0, 1)) % 3;
                place_shape(rng, spec.shapes,
                            ShapeSpec{other_kind, pick_int(0, 4), 0, 0, radius(0.08, 0.12)},
                            size);
            }
            spec.target = want_largest ? 0 : 1;
            spec.object_phrase =
                (want_largest ? "largest " : "smallest ") + kShapeNames[kind];
            return spec;
        }

        if (family == "attribute") {
            int n = pick_int(3, 4);
            for (int k = 0; k < n; ++k)
                place_shape(rng, spec.shapes,
                            ShapeSpec{pick_int(0, 2), pick_int(0, 4), 0, 0, radius(0.11, 0.17)},
                            size);
            if (spec.shapes.size() < 2) continue;
            // find a shape whose (color,kind) pair is unique in the scene
            int target = -1;
            for (size_t i = 0; i < spec.shapes.size() && target < 0; ++i) {
                bool unique = true;
                for (size_t j = 0; j < spec.shapes.size(); ++j)
                    if (j != i && spec.shapes[j].kind == spec.shapes[i].kind &&
                        spec.shapes[j].color == spec.shapes[i].color)
                        unique = false;
                if (unique) target = static_cast<int>(i);
            }
            if (target < 0) continue;
            spec.target = target;
            spec.object_phrase = kColorNames[spec.shapes[target].color] + " " +
                                 kShapeNames[spec.shapes[target].kind];
            return spec;
        }

        if (family == "spatial") {
            int n = pick_int(2, 4);
            for (int k = 0; k < n; ++k)
                place_shape(rng, spec.shapes,
                            ShapeSpec{pick_int(0, 2), pick_int(0, 4), 0, 0, radius(0.09, 0.13)},
                            size);
            if (static_cast<int>(spec.shapes.size()) < 2) continue;
            bool left = uni(rng) < 0.5;
            int target = 0;
            for (size_t i = 1; i < spec.shapes.size(); ++i) {
                if (left ? spec.shapes[i].cx < spec.shapes[target].cx
                         : spec.shapes[i].cx > spec.shapes[target].cx)
                    target = static_cast<int>(i);
            }
            // demand a clear margin so the reference is unambiguous
            bool clear = true;
            for (size_t i = 0; i < spec.shapes.size(); ++i) {
                if (static_cast<int>(i) == target) continue;
                double gap = left ? spec.shapes[i].cx - spec.shapes[target].cx
                                  : spec.shapes[target].cx - spec.shapes[i].cx;
                if (gap < 0.12 * size) clear = false;
            }
            if (!clear) continue;
            spec.target = target;
            spec.object_phrase = left ? "shape on the left" : "shape on the right";
            return spec;
        }

        // count-position: odd shape count, middle by horizontal order
        int n = uni(rng) < 0.5 ? 3 : 5;
        for (int k = 0; k < n; ++k)
            place_shape(rng, spec.shapes,
                        ShapeSpec{pick_int(0, 2), pick_int(0, 4), 0, 0, radius(0.08, 0.12)},
                        size);
        if (static_cast<int>(spec.shapes.size()) != n) continue;
        std::vector<int> order(spec.shapes.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return spec.shapes[a].cx < spec.shapes[b].cx; });
        bool spread = true;
        for (size_t i = 1; i < order.size(); ++i)
            if (spec.shapes[order[i]].cx - spec.shapes[order[i - 1]].cx < 0.08 * size)
                spread = false;
        if (!spread) continue;
        spec.target = order[order.size() / 2];
        spec.object_phrase = "middle shape";
        return spec;
    }
    throw std::runtime_error("sample_scene: could not construct a '" + family + "' scene");
}

std::vector<SegSample> generate_synthetic_corpus(unsigned seed, int n, const Vocabulary& vocab,
                                                 const CorpusConfig& cc) {
    require(n >= 1, "generate_synthetic_corpus: n must be >= 1");
    require(cc.family_ratios.size() == kQueryFamilies.size(),
            "generate_synthetic_corpus: need one ratio per family");
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double total = std::accumulate(cc.family_ratios.begin(), cc.family_ratios.end(), 0.0);
    std::vector<SegSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        double r = uni(rng) * total, acc = 0.0;
        size_t fam = 0;
        for (size_t f = 0; f < cc.family_ratios.size(); ++f) {
            acc += cc.family_ratios[f];
            if (r < acc) {
                fam = f;
                break;
            }
        }
        SegSample s;
        s.scene = sample_scene(rng, cc.size, kQueryFamilies[fam]);
        s.image = render_scene(s.scene, cc.size);
        s.gt_mask = shape_mask(s.scene.shapes[s.scene.target], cc.size);
        s.query = build_query(s.scene.object_phrase, vocab);
        s.gt_text = s.query.response_ids;
        s.family = s.scene.family;
        out.push_back(std::move(s));
    }
    return out;
}

void save_corpus(const std::vector<SegSample>& samples, const std::string& dir,
                 const Vocabulary& vocab) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu", i);
        img::save_png(dir + "/" + name + "_image.png", samples[i].image);
        img::save_mask_png(dir + "/" + name + "_mask.png", samples[i].gt_mask);
        nlohmann::json j;
        j["query"] = samples[i].query.raw_text;
        j["gt_text"] = vocab.decode(samples[i].gt_text);
        j["family"] = samples[i].family;
        std::ofstream meta(dir + "/" + name + "_meta.json");
        meta << j.dump(2) << "\n";
    }
}

std::string ReasonSegConfig::to_json(const Vocabulary& vocab) const {
    nlohmann::json j;
    j["kind"] = "reason-seg";
    j["image_size"] = image_size;
    j["embed_dim"] = embed_dim;
    j["vis_ch1"] = vis_ch1;
    j["vis_ch2"] = vis_ch2;
    j["max_response_len"] = max_response_len;
    j["vocab"] = vocab.tokens();
    return j.dump();
}

std::pair<ReasonSegConfig, Vocabulary> ReasonSegConfig::from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    ReasonSegConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.vis_ch1 = j.at("vis_ch1").get<int>();
    c.vis_ch2 = j.at("vis_ch2").get<int>();
    c.max_response_len = j.at("max_response_len").get<int>();
    Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
    return {c, vocab};
}

Tensor MaskPrediction::binarized(double threshold) const {
    Tensor out = soft;
    for (double& v : out.data) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

ReasonSegModel::ReasonSegModel(ReasonSegConfig cfg, Vocabulary vocab, unsigned init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    std::mt19937 rng(init_seed);
    int v = vocab_.size(), d = cfg_.embed_dim;
    int c1 = cfg_.vis_ch1, c2 = cfg_.vis_ch2;
    auto he = [&](int fan_in) { return std::sqrt(2.0 / fan_in); };

    params_.add("emb", Tensor::randn({v, d}, rng, 0.2));
    params_.add("pos", Tensor::randn({cfg_.max_response_len, d}, rng, 0.2));
    params_.add("ctx.w", Tensor::randn({d, d}, rng, 1.0 / std::sqrt(d)));
    params_.add("ctx.b", Tensor::zeros({d}));
    params_.add("txt.w", Tensor::randn({v, d}, rng, 1.0 / std::sqrt(d)));
    params_.add("txt.b", Tensor::zeros({v}));
    params_.add("segmlp.l1.w", Tensor::randn({2 * d, d}, rng, he(d)));
    params_.add("segmlp.l1.b", Tensor::zeros({2 * d}));
    params_.add("segmlp.l2.w", Tensor::randn({c2, 2 * d}, rng, 1.0 / std::sqrt(2 * d)));
    params_.add("segmlp.l2.b", Tensor::zeros({c2}));
    // channel gate over the visual features; bias starts the gate mostly open
    params_.add("segmlp.gate.w", Tensor::randn({c2, c2}, rng, 1.0 / std::sqrt(c2)));
    params_.add("segmlp.gate.b", Tensor::full({c2}, 1.0));

    params_.add("vis.c1.w", Tensor::randn({c1, 5, 3, 3}, rng, he(5 * 9)));
    params_.add("vis.c1.b", Tensor::zeros({c1}));
    params_.add("vis.c2.w", Tensor::randn({c2, c1, 3, 3}, rng, he(c1 * 9)));
    params_.add("vis.c2.b", Tensor::zeros({c2}));
    params_.add("vis.c3.w", Tensor::randn({c2, c2, 3, 3}, rng, he(c2 * 9)));
    params_.add("vis.c3.b", Tensor::zeros({c2}));

    params_.add("fuse.p.w", Tensor::randn({c2, 3 * c2, 1, 1}, rng, he(3 * c2)));
    params_.add("fuse.p.b", Tensor::zeros({c2}));
    params_.add("fuse.c.w", Tensor::randn({c1, c2, 3, 3}, rng, he(c2 * 9)));
    params_.add("fuse.c.b", Tensor::zeros({c1}));
    params_.add("fuse.s.w", Tensor::randn({c1, 2 * c1, 3, 3}, rng, he(2 * c1 * 9)));
    params_.add("fuse.s.b", Tensor::zeros({c1}));
    params_.add("fuse.out.w", Tensor::randn({1, c1, 1, 1}, rng, 1.0 / std::sqrt(c1)));
    params_.add("fuse.out.b", Tensor::zeros({1}));
}

ag::Var ReasonSegModel::response_hidden(const SegQuery& query) const {
    require(!query.token_ids.empty(), "response_hidden: empty query");
    int r = static_cast<int>(query.response_ids.size());
    require(r >= 1 && r <= cfg_.max_response_len, "response_hidden: response length out of range");

    auto emb = ag::gather_rows(params_.get("emb"), query.token_ids);
    std::vector<int> nonpad;
    for (size_t i = 0; i < query.token_ids.size(); ++i)
        if (query.token_ids[i] != vocab_.pad_id()) nonpad.push_back(static_cast<int>(i));
    require(!nonpad.empty(), "response_hidden: query is all padding");
    auto ctx = ag::mean_rows(emb, nonpad);
    auto u = ag::linear(ctx, params_.get("ctx.w"), params_.get("ctx.b"));

    std::vector<int> iota(r);
    std::iota(iota.begin(), iota.end(), 0);
    auto pos = ag::gather_rows(params_.get("pos"), iota);
    std::vector<ag::Var> rows;
    for (int t = 0; t < r; ++t) rows.push_back(ag::tanh_(ag::add(ag::select_row(pos, t), u)));
    return ag::stack_rows(rows);
}

ag::Var ReasonSegModel::seg_embedding_var(const ag::Var& hidden, int position) const {
    require(position >= 0 && position < hidden->value.shape[0],
            "seg embedding: position out of range");
    auto h = ag::select_row(hidden, position);
    auto z = ag::relu(ag::linear(h, params_.get("segmlp.l1.w"), params_.get("segmlp.l1.b")));
    return ag::linear(z, params_.get("segmlp.l2.w"), params_.get("segmlp.l2.b"));
}

std::vector<Tensor> ReasonSegModel::extract_seg_embedding(
    const Tensor& hidden_states, const std::vector<int>& seg_positions) const {
    require(hidden_states.shape.size() == 2, "extract_seg_embedding: [T,D] expected");
    auto h = ag::constant(hidden_states);
    std::vector<Tensor> out;
    for (int p : seg_positions) out.push_back(seg_embedding_var(h, p)->value);
    return out;
}

ReasonSegModel::Forward ReasonSegModel::forward(const Tensor& image,
                                                const SegQuery& query) const {
    img::validate_image(image);
    require(image.shape[1] == cfg_.image_size && image.shape[2] == cfg_.image_size,
            "forward: image size does not match model config");
    require(!query.seg_positions.empty(),
            "forward: query response template contains no <seg> token");

    int s = cfg_.image_size;
    Tensor input({5, s, s});
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            for (int c = 0; c < 3; ++c) input.at(c, y, x) = image.at(c, y, x);
            input.at(3, y, x) = 2.0 * x / (s - 1) - 1.0;
            input.at(4, y, x) = 2.0 * y / (s - 1) - 1.0;
        }

    auto conv = [&](const char* name, const ag::Var& x, int stride) {
        return ag::conv2d(x, params_.get(std::string(name) + ".w"),
                          params_.get(std::string(name) + ".b"), stride, 1);
    };
    auto conv1x1 = [&](const char* name, const ag::Var& x) {
        return ag::conv2d(x, params_.get(std::string(name) + ".w"),
                          params_.get(std::string(name) + ".b"), 1, 0);
    };

    auto f1 = ag::relu(conv("vis.c1", ag::constant(std::move(input)), 1));
    auto f2 = ag::relu(conv("vis.c2", f1, 2));
    auto f3 = ag::relu(conv("vis.c3", f2, 1));
    auto g = ag::mean_spatial(f3);
    int hs = f3->value.shape[1], ws = f3->value.shape[2];

    Forward out;
    auto hidden = response_hidden(query);
    std::vector<ag::Var> logits_rows;
    for (int t = 0; t < hidden->value.shape[0]; ++t)
        logits_rows.push_back(ag::linear(ag::select_row(hidden, t), params_.get("txt.w"),
                                         params_.get("txt.b")));
    out.text_logits = ag::stack_rows(logits_rows);

    for (int p : query.seg_positions) {
        auto seg = seg_embedding_var(hidden, p);
        // multiplicative text conditioning: the query selects visual channels
        auto gate = ag::sigmoid(
            ag::linear(seg, params_.get("segmlp.gate.w"), params_.get("segmlp.gate.b")));
        auto f3g = ag::mul(f3, ag::broadcast_spatial(gate, hs, ws));
        auto fused = ag::concat_channels(ag::concat_channels(f3g, ag::broadcast_spatial(g, hs, ws)),
                                         ag::broadcast_spatial(seg, hs, ws));
        auto q1 = ag::relu(conv1x1("fuse.p", fused));
        auto q2 = ag::relu(conv("fuse.c", q1, 1));
        auto up = ag::upsample_nearest2(q2);
        auto skip = ag::concat_channels(up, f1);
        auto q3 = ag::relu(conv("fuse.s", skip, 1));
        out.masks.push_back(ag::sigmoid(conv1x1("fuse.out", q3)));
    }
    return out;
}

MaskPrediction ReasonSegModel::predict_mask(const Tensor& image, const SegQuery& query) const {
    Forward f = forward(image, query);
    return MaskPrediction{f.masks.front()->value};
}

void ReasonSegModel::save(const std::string& path) const {
    nn::save_checkpoint(path, params_, cfg_.to_json(vocab_));
}

ReasonSegModel ReasonSegModel::load(const std::string& path) {
    auto [cfg, vocab] = ReasonSegConfig::from_json(nn::read_checkpoint_config(path));
    ReasonSegModel model(cfg, vocab, 0);
    nn::load_checkpoint(path, model.params_);
    return model;
}

double iou(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "iou: shape mismatch");
    long inter = 0, uni = 0;
    for (long i = 0; i < a.numel(); ++i) {
        bool pa = a.data[i] > 0.5, pb = b.data[i] > 0.5;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / uni;
}

EvalReport evaluate_masks(const ReasonSegModel& model, const std::vector<SegSample>& samples) {
    EvalReport rep;
    long cum_inter = 0, cum_union = 0;
    for (const auto& s : samples) {
        Tensor pred = model.predict_mask(s.image, s.query).binarized();
        rep.giou += iou(pred, s.gt_mask);
        for (long i = 0; i < pred.numel(); ++i) {
            bool pa = pred.data[i] > 0.5, pb = s.gt_mask.data[i] > 0.5;
            cum_inter += pa && pb;
            cum_union += pa || pb;
        }
        ++rep.count;
    }
    if (rep.count > 0) rep.giou /= rep.count;
    rep.ciou = cum_union > 0 ? static_cast<double>(cum_inter) / cum_union : 1.0;
    return rep;
}

std::vector<TrainStep> train_reason_seg(ReasonSegModel& model,
                                        const std::vector<SegSample>& train,
                                        const std::vector<SegSample>& held_out,
                                        const loss::LossWeights& weights,
                                        const TrainConfig& tc) {
    require(!train.empty(), "train_reason_seg: empty training set");
    weights.validate();
    std::mt19937 rng(tc.seed);
    std::uniform_int_distribution<size_t> pick(0, train.size() - 1);
    nn::Adam opt;
    opt.lr = tc.lr;
    auto params = model.params().vars();
    std::vector<TrainStep> curve;
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,txt_loss,mask_loss,total\n";
    }
    for (int step = 0; step < tc.steps; ++step) {
        ag::Var batch_loss;
        double txt_acc = 0.0, mask_acc = 0.0;
        for (int b = 0; b < tc.batch; ++b) {
            const SegSample& s = train[pick(rng)];
            auto fwd = model.forward(s.image, s.query);
            auto l_txt = loss::text_loss(fwd.text_logits, s.gt_text);
            auto l_mask = loss::mask_loss(fwd.masks.front(), s.gt_mask, weights);
            txt_acc += l_txt->value.data[0] / tc.batch;
            mask_acc += l_mask->value.data[0] / tc.batch;
            auto l = ag::add(ag::scale(l_txt, weights.lambda_txt),
                             ag::scale(l_mask, weights.lambda_mask));
            auto scaled = ag::scale(l, 1.0 / tc.batch);
            batch_loss = batch_loss ? ag::add(batch_loss, scaled) : scaled;
        }
        double total = batch_loss->value.data[0];
        if (!std::isfinite(total))
            throw std::runtime_error("train_reason_seg: non-finite loss at step " +
                                     std::to_string(step));
        ag::zero_grad(params);
        ag::backward(batch_loss);
        opt.step(params);
        curve.push_back({step, txt_acc, mask_acc, total});
        if (log.is_open()) log << step << "," << txt_acc << "," << mask_acc << "," << total << "\n";
        if (tc.stop_giou > 0.0 && !held_out.empty() && (step + 1) % tc.eval_every == 0) {
            EvalReport rep = evaluate_masks(model, held_out);
            if (rep.giou >= tc.stop_giou) break;
        }
    }
    return curve;
}

}  // namespace hyperedit::rs
