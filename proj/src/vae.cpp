#include "hyperedit/vae.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hyperedit/image.hpp"

namespace hyperedit::vae {

std::string VaeConfig::to_json() const {
    nlohmann::json j;
    j["kind"] = "inpaint-vae";
    j["image_size"] = image_size;
    j["latent_dim"] = latent_dim;
    j["widths"] = widths;
    j["use_hypergraph"] = use_hypergraph;
    j["tau"] = tau;
    j["beta"] = beta;
    j["inside_weight"] = inside_weight;
    return j.dump();
}

VaeConfig VaeConfig::from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    VaeConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.widths = j.at("widths").get<std::vector<int>>();
    c.use_hypergraph = j.at("use_hypergraph").get<bool>();
    c.tau = j.at("tau").get<double>();
    c.beta = j.at("beta").get<double>();
    c.inside_weight = j.at("inside_weight").get<double>();
    return c;
}

void VaeConfig::validate() const {
    require(image_size >= 8 && (image_size & (image_size - 1)) == 0,
            "image_size must be a power of two >= 8");
    require(latent_dim >= 1, "latent_dim must be positive");
    require(widths.size() == 3, "widths must list three channel counts");
    require(beta >= 0.0, "beta must be >= 0");
    require(inside_weight >= 1.0, "inside_weight must be >= 1");
    int n = middle_size() * middle_size();
    require(n <= hg::kMaxNodes, "middle block exceeds hypergraph node cap");
}

namespace {

double conv_init_scale(int fan_in) { return std::sqrt(2.0 / fan_in); }

void add_conv(nn::ParamStore& p, std::mt19937& rng, const std::string& name, int cout, int cin,
              int k) {
    p.add(name + ".w", Tensor::randn({cout, cin, k, k}, rng, conv_init_scale(cin * k * k)));
    p.add(name + ".b", Tensor::zeros({cout}));
}

void add_linear(nn::ParamStore& p, std::mt19937& rng, const std::string& name, int nout,
                int nin) {
    p.add(name + ".w", Tensor::randn({nout, nin}, rng, 1.0 / std::sqrt(nin)));
    p.add(name + ".b", Tensor::zeros({nout}));
}

ag::Var conv(const nn::ParamStore& p, const std::string& name, const ag::Var& x, int stride) {
    return ag::conv2d(x, p.get(name + ".w"), p.get(name + ".b"), stride, 1);
}

ag::Var resblock(const nn::ParamStore& p, const std::string& name, const ag::Var& x) {
    auto h = ag::relu(conv(p, name + ".c1", x, 1));
    return ag::add(x, conv(p, name + ".c2", h, 1));
}

ag::Var linear_vec(const nn::ParamStore& p, const std::string& name, const ag::Var& x) {
    return ag::linear(x, p.get(name + ".w"), p.get(name + ".b"));
}

ag::Var hyp_block(const nn::ParamStore& p, const std::string& name, const ag::Var& feat,
                  double tau_cfg, double* tau_used, int* graph_nodes) {
    // feat: [C,H,W] -> flatten, build the tau-ball hypergraph on current
    // values (constant w.r.t. gradients), message-pass, restore shape.
    int c = feat->value.shape[0], h = feat->value.shape[1], w = feat->value.shape[2];
    auto flat = ag::reshape(feat, {c, h * w});
    double tau = tau_cfg;
    if (tau <= 0.0) {
        tau = hg::median_pairwise_distance(flat->value);
        if (tau <= 0.0) tau = 1.0;  // constant feature map
    }
    hg::Hypergraph graph = hg::build_hypergraph(flat->value, tau);
    if (tau_used) *tau_used = tau;
    if (graph_nodes) *graph_nodes = graph.num_nodes;
    auto out = hg::hypconv(flat, graph, p.get(name + ".w_v2e"), p.get(name + ".w_e2v"),
                           p.get(name + ".bias"), hg::Activation::Gelu);
    // residual connection: zeroed message weights make the block an exact
    // identity, which is what the no-hypergraph configuration expects
    return ag::add(feat, ag::reshape(out, {c, h, w}));
}

}  // namespace

InpaintModel::InpaintModel(VaeConfig cfg, unsigned init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937 rng(init_seed);
    int w0 = cfg_.widths[0], w1 = cfg_.widths[1], w2 = cfg_.widths[2];
    int ms = cfg_.middle_size();
    int flat = w2 * ms * ms;

    add_conv(params_, rng, "enc.in", w0, 4, 3);
    add_conv(params_, rng, "enc.rb0.c1", w0, w0, 3);
    add_conv(params_, rng, "enc.rb0.c2", w0, w0, 3);
    add_conv(params_, rng, "enc.down0", w1, w0, 3);
    add_conv(params_, rng, "enc.rb1.c1", w1, w1, 3);
    add_conv(params_, rng, "enc.rb1.c2", w1, w1, 3);
    add_conv(params_, rng, "enc.down1", w2, w1, 3);
    add_conv(params_, rng, "enc.mid.c1", w2, w2, 3);
    add_conv(params_, rng, "enc.mid.c2", w2, w2, 3);
    if (cfg_.use_hypergraph) {
        // the second map starts small so the residual branch begins near the
        // identity and only has to learn a correction
        params_.add("enc.hyp.w_v2e", Tensor::randn({w2, w2}, rng, 1.0 / std::sqrt(w2)));
        params_.add("enc.hyp.w_e2v", Tensor::randn({w2, w2}, rng, 0.1 / std::sqrt(w2)));
        params_.add("enc.hyp.bias", Tensor::zeros({w2}));
    }
    add_linear(params_, rng, "enc.mean", cfg_.latent_dim, flat);
    add_linear(params_, rng, "enc.logvar", cfg_.latent_dim, flat);

    add_linear(params_, rng, "dec.in", flat, cfg_.latent_dim);
    // fuses the encoder middle features (spatial skip) with the latent
    // projection; prior samples decode with a zero skip
    add_conv(params_, rng, "dec.skip", w2, 2 * w2, 1);
    add_conv(params_, rng, "dec.mid.c1", w2, w2, 3);
    add_conv(params_, rng, "dec.mid.c2", w2, w2, 3);
    if (cfg_.use_hypergraph) {
        params_.add("dec.hyp.w_v2e", Tensor::randn({w2, w2}, rng, 1.0 / std::sqrt(w2)));
        params_.add("dec.hyp.w_e2v", Tensor::randn({w2, w2}, rng, 0.1 / std::sqrt(w2)));
        params_.add("dec.hyp.bias", Tensor::zeros({w2}));
    }
    add_conv(params_, rng, "dec.up0", w1, w2, 3);
    add_conv(params_, rng, "dec.rb1.c1", w1, w1, 3);
    add_conv(params_, rng, "dec.rb1.c2", w1, w1, 3);
    add_conv(params_, rng, "dec.up1", w0, w1, 3);
    add_conv(params_, rng, "dec.rb0.c1", w0, w0, 3);
    add_conv(params_, rng, "dec.rb0.c2", w0, w0, 3);
    add_conv(params_, rng, "dec.out", 3, w0, 3);
}

EncodeResult InpaintModel::encode(const Tensor& image, const Tensor& mask) const {
    img::validate_image(image);
    img::validate_mask(mask);
    require(image.shape[1] == cfg_.image_size && image.shape[2] == cfg_.image_size,
            "encode: image size does not match model config");
    require(mask.shape[1] == image.shape[1] && mask.shape[2] == image.shape[2],
            "encode: mask/image size mismatch");

    int hw = cfg_.image_size;
    Tensor input({4, hw, hw});
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            double keep = 1.0 - mask.at(0, y, x);
            for (int ch = 0; ch < 3; ++ch) input.at(ch, y, x) = image.at(ch, y, x) * keep;
            input.at(3, y, x) = mask.at(0, y, x);
        }

    auto h = ag::relu(conv(params_, "enc.in", ag::constant(std::move(input)), 1));
    h = resblock(params_, "enc.rb0", h);
    h = ag::relu(conv(params_, "enc.down0", h, 2));
    h = resblock(params_, "enc.rb1", h);
    h = ag::relu(conv(params_, "enc.down1", h, 2));
    h = resblock(params_, "enc.mid", h);

    EncodeResult res;
    if (cfg_.use_hypergraph)
        h = hyp_block(params_, "enc.hyp", h, cfg_.tau, &res.tau_used, &res.graph_nodes);

    int ms = cfg_.middle_size();
    res.middle = h;
    auto flat = ag::reshape(h, {cfg_.widths[2] * ms * ms});
    res.mean = linear_vec(params_, "enc.mean", flat);
    res.log_variance = linear_vec(params_, "enc.logvar", flat);
    return res;
}

LatentDistribution InpaintModel::encode_dist(const Tensor& image, const Tensor& mask) const {
    EncodeResult r = encode(image, mask);
    return {r.mean->value, r.log_variance->value};
}

ag::Var InpaintModel::decode_var(const ag::Var& z, const ag::Var* skip) const {
    require(z->value.shape == std::vector<int>{cfg_.latent_dim}, "decode: latent dim mismatch");
    require(z->value.all_finite(), "decode: non-finite latent");
    int ms = cfg_.middle_size();
    auto h = ag::reshape(linear_vec(params_, "dec.in", z), {cfg_.widths[2], ms, ms});
    auto side = skip ? *skip : ag::constant(Tensor::zeros({cfg_.widths[2], ms, ms}));
    require(side->value.shape == h->value.shape, "decode: skip shape mismatch");
    h = ag::relu(ag::conv2d(ag::concat_channels(h, side), params_.get("dec.skip.w"),
                            params_.get("dec.skip.b"), 1, 0));
    h = resblock(params_, "dec.mid", h);
    if (cfg_.use_hypergraph) h = hyp_block(params_, "dec.hyp", h, cfg_.tau, nullptr, nullptr);
    h = ag::relu(conv(params_, "dec.up0", ag::upsample_nearest2(h), 1));
    h = resblock(params_, "dec.rb1", h);
    h = ag::relu(conv(params_, "dec.up1", ag::upsample_nearest2(h), 1));
    h = resblock(params_, "dec.rb0", h);
    return ag::sigmoid(conv(params_, "dec.out", h, 1));
}

Tensor InpaintModel::decode(const Tensor& z) const {
    return decode_var(ag::constant(z))->value;
}

hg::Hypergraph InpaintModel::middle_hypergraph(const Tensor& image, const Tensor& mask,
                                               double tau_override) const {
    img::validate_image(image);
    img::validate_mask(mask);
    int hw = cfg_.image_size;
    Tensor input({4, hw, hw});
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            double keep = 1.0 - mask.at(0, y, x);
            for (int ch = 0; ch < 3; ++ch) input.at(ch, y, x) = image.at(ch, y, x) * keep;
            input.at(3, y, x) = mask.at(0, y, x);
        }
    auto h = ag::relu(conv(params_, "enc.in", ag::constant(std::move(input)), 1));
    h = resblock(params_, "enc.rb0", h);
    h = ag::relu(conv(params_, "enc.down0", h, 2));
    h = resblock(params_, "enc.rb1", h);
    h = ag::relu(conv(params_, "enc.down1", h, 2));
    h = resblock(params_, "enc.mid", h);
    int c = h->value.shape[0];
    int ms = cfg_.middle_size();
    Tensor flat;
    flat.shape = {c, ms * ms};
    flat.data = h->value.data;
    double tau = tau_override > 0.0 ? tau_override : cfg_.tau;
    if (tau <= 0.0) tau = hg::median_pairwise_distance(flat);
    if (tau <= 0.0) tau = 1.0;
    return hg::build_hypergraph(flat, tau);
}

void InpaintModel::save(const std::string& path) const {
    nn::save_checkpoint(path, params_, cfg_.to_json());
}

InpaintModel InpaintModel::load(const std::string& path) {
    VaeConfig cfg = VaeConfig::from_json(nn::read_checkpoint_config(path));
    InpaintModel model(cfg, 0);
    nn::load_checkpoint(path, model.params_);
    return model;
}

ag::Var vae_inpaint_loss(const ag::Var& reconstruction, const Tensor& target,
                         const Tensor& mask, const ag::Var& mean, const ag::Var& log_variance,
                         double beta, double inside_weight, LossBreakdown* breakdown) {
    require(reconstruction->value.same_shape(target), "vae loss: recon/target shape mismatch");
    img::validate_mask(mask);
    require(beta >= 0.0, "vae loss: beta must be >= 0");
    require(inside_weight >= 1.0, "vae loss: inside_weight must be >= 1");

    int c = target.shape[0], h = target.shape[1], w = target.shape[2];
    Tensor weights({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                weights.at(ch, y, x) = 1.0 + (inside_weight - 1.0) * mask.at(0, y, x);

    auto diff = ag::sub(reconstruction, ag::constant(target));
    auto recon = ag::mean(ag::mul(ag::square(diff), ag::constant(std::move(weights))));

    // KL(q || N(0,I)) with mean reduction over latent dims
    auto inner = ag::add_scalar(ag::sub(log_variance,
                                        ag::add(ag::square(mean), ag::exp_(log_variance))),
                                1.0);
    auto kl = ag::scale(ag::mean(inner), -0.5);

    if (breakdown) {
        breakdown->recon = recon->value.data[0];
        breakdown->kl = kl->value.data[0];
        breakdown->total = recon->value.data[0] + beta * kl->value.data[0];
    }
    return ag::add(recon, ag::scale(kl, beta));
}

LossBreakdown vae_inpaint_loss_value(const Tensor& reconstruction, const Tensor& target,
                                     const Tensor& mask, const LatentDistribution& dist,
                                     double beta, double inside_weight) {
    LossBreakdown b;
    vae_inpaint_loss(ag::constant(reconstruction), target, mask, ag::constant(dist.mean),
                     ag::constant(dist.log_variance), beta, inside_weight, &b);
    return b;
}

namespace {

void raster_circle(Tensor& img3, double cx, double cy, double r, const double rgb[3]) {
    int h = img3.shape[1], w = img3.shape[2];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                for (int c = 0; c < 3; ++c) img3.at(c, y, x) = rgb[c];
}

void raster_rect(Tensor& img3, int x0, int y0, int x1, int y1, const double rgb[3]) {
    int h = img3.shape[1], w = img3.shape[2];
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x)
            for (int c = 0; c < 3; ++c) img3.at(c, y, x) = rgb[c];
}

void raster_triangle(Tensor& img3, double cx, double cy, double r, const double rgb[3]) {
    // upright triangle inscribed in the radius-r disc
    int h = img3.shape[1], w = img3.shape[2];
    double x0 = cx, y0 = cy - r;
    double x1 = cx - r * 0.866, y1 = cy + r * 0.5;
    double x2 = cx + r * 0.866, y2 = cy + r * 0.5;
    auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
        return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double e0 = edge(x0, y0, x1, y1, x, y);
            double e1 = edge(x1, y1, x2, y2, x, y);
            double e2 = edge(x2, y2, x0, y0, x, y);
            if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0))
                for (int c = 0; c < 3; ++c) img3.at(c, y, x) = rgb[c];
        }
}

}  // namespace

std::vector<Scene> generate_inpaint_corpus(unsigned seed, int n, int size) {
    require(n >= 1, "generate_inpaint_corpus: n must be >= 1");
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Scene> scenes;
    scenes.reserve(n);
    for (int i = 0; i < n; ++i) {
        Scene s;
        s.image = Tensor({3, size, size});
        // textured gradient background
        double base[3], grad[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = 0.2 + 0.5 * uni(rng);
            grad[c] = (uni(rng) - 0.5) * 0.6;
        }
        double fx = 1.0 + 3.0 * uni(rng), fy = 1.0 + 3.0 * uni(rng);
        double phase = 2.0 * M_PI * uni(rng), amp = 0.05 + 0.1 * uni(rng);
        bool horizontal = uni(rng) < 0.5;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double t = (horizontal ? x : y) / static_cast<double>(size - 1);
                double tex = amp * std::sin(2.0 * M_PI * (fx * x + fy * y) / size + phase);
                for (int c = 0; c < 3; ++c)
                    s.image.at(c, y, x) = std::clamp(base[c] + grad[c] * t + tex, 0.0, 1.0);
            }
        int n_shapes = 2 + static_cast<int>(uni(rng) * 4);  // 2..5
        for (int k = 0; k < n_shapes; ++k) {
            double rgb[3] = {uni(rng), uni(rng), uni(rng)};
            double r = size * (0.06 + 0.1 * uni(rng));
            double cx = r + uni(rng) * (size - 2 * r);
            double cy = r + uni(rng) * (size - 2 * r);
            int kind = static_cast<int>(uni(rng) * 3);
            if (kind == 0)
                raster_circle(s.image, cx, cy, r, rgb);
            else if (kind == 1)
                raster_rect(s.image, static_cast<int>(cx - r), static_cast<int>(cy - r),
                            static_cast<int>(cx + r), static_cast<int>(cy + r), rgb);
            else
                raster_triangle(s.image, cx, cy, r, rgb);
        }
        // mask: rectangle / ellipse / free-form blob
        s.mask = Tensor({1, size, size});
        int mk = static_cast<int>(uni(rng) * 3);
        if (mk == 0) {
            int mw = static_cast<int>(size * (0.2 + 0.3 * uni(rng)));
            int mh = static_cast<int>(size * (0.2 + 0.3 * uni(rng)));
            int mx = static_cast<int>(uni(rng) * (size - mw));
            int my = static_cast<int>(uni(rng) * (size - mh));
            for (int y = my; y < my + mh; ++y)
                for (int x = mx; x < mx + mw; ++x) s.mask.at(0, y, x) = 1.0;
        } else if (mk == 1) {
            double rx = size * (0.1 + 0.15 * uni(rng)), ry = size * (0.1 + 0.15 * uni(rng));
            double cx = rx + uni(rng) * (size - 2 * rx), cy = ry + uni(rng) * (size - 2 * ry);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double dx = (x - cx) / rx, dy = (y - cy) / ry;
                    if (dx * dx + dy * dy <= 1.0) s.mask.at(0, y, x) = 1.0;
                }
        } else {
            // union of discs along a short random walk
            double cx = size * (0.25 + 0.5 * uni(rng)), cy = size * (0.25 + 0.5 * uni(rng));
            int hops = 4 + static_cast<int>(uni(rng) * 4);
            for (int t = 0; t < hops; ++t) {
                double r = size * (0.06 + 0.06 * uni(rng));
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                            s.mask.at(0, y, x) = 1.0;
                cx = std::clamp(cx + (uni(rng) - 0.5) * size * 0.2, 0.0, size - 1.0);
                cy = std::clamp(cy + (uni(rng) - 0.5) * size * 0.2, 0.0, size - 1.0);
            }
        }
        scenes.push_back(std::move(s));
    }
    return scenes;
}

void save_corpus(const std::vector<Scene>& scenes, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu", i);
        img::save_png(dir + "/" + name + "_image.png", scenes[i].image);
        img::save_mask_png(dir + "/" + name + "_mask.png", scenes[i].mask);
    }
}

Tensor mean_color_fill(const Tensor& image, const Tensor& mask) {
    img::validate_image(image);
    img::validate_mask(mask);
    int h = image.shape[1], w = image.shape[2];
    double sums[3] = {0, 0, 0};
    long n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(0, y, x) == 0.0) {
                for (int c = 0; c < 3; ++c) sums[c] += image.at(c, y, x);
                ++n;
            }
    require(n > 0, "mean_color_fill: mask covers the whole image");
    Tensor out = image;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(0, y, x) == 1.0)
                for (int c = 0; c < 3; ++c) out.at(c, y, x) = sums[c] / n;
    return out;
}

std::vector<TrainCurvePoint> train_inpainter(InpaintModel& model,
                                             const std::vector<Scene>& dataset,
                                             const TrainConfig& tc) {
    require(!dataset.empty(), "train_inpainter: empty dataset");
    std::mt19937 rng(tc.seed);
    std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    nn::Adam opt;
    opt.lr = tc.lr;
    auto params = model.params().vars();
    std::vector<TrainCurvePoint> curve;
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,recon_loss,kl_loss,total\n";
    }
    const VaeConfig& cfg = model.config();
    for (int step = 0; step < tc.steps; ++step) {
        ag::Var batch_loss;
        LossBreakdown acc;
        for (int b = 0; b < tc.batch; ++b) {
            const Scene& s = dataset[pick(rng)];
            EncodeResult enc = model.encode(s.image, s.mask);
            // reparameterized sample
            int z = cfg.latent_dim;
            Tensor eps({z});
            for (int i = 0; i < z; ++i) eps(i) = noise(rng);
            auto std_dev = ag::exp_(ag::scale(enc.log_variance, 0.5));
            auto zs = ag::add(enc.mean, ag::mul(std_dev, ag::constant(std::move(eps))));
            auto recon = model.decode_var(zs, &enc.middle);
            LossBreakdown bd;
            auto l = vae_inpaint_loss(recon, s.image, s.mask, enc.mean, enc.log_variance,
                                      cfg.beta, cfg.inside_weight, &bd);
            acc.recon += bd.recon / tc.batch;
            acc.kl += bd.kl / tc.batch;
            acc.total += bd.total / tc.batch;
            auto scaled = ag::scale(l, 1.0 / tc.batch);
            batch_loss = batch_loss ? ag::add(batch_loss, scaled) : scaled;
        }
        if (!std::isfinite(acc.total))
            throw std::runtime_error("train_inpainter: non-finite loss at step " +
                                     std::to_string(step));
        ag::zero_grad(params);
        ag::backward(batch_loss);
        opt.step(params);
        curve.push_back({step, acc.recon, acc.kl, acc.total});
        if (log.is_open())
            log << step << "," << acc.recon << "," << acc.kl << "," << acc.total << "\n";
    }
    return curve;
}

Tensor inpaint(const InpaintModel& model, const Tensor& image, const Tensor& mask, int samples,
               int blend_radius, unsigned sample_seed, Tensor* raw_decode) {
    require(samples >= 1, "inpaint: samples must be >= 1");
    EncodeResult enc = model.encode(image, mask);
    LatentDistribution dist{enc.mean->value, enc.log_variance->value};
    Tensor out;
    if (samples == 1) {
        out = model.decode_var(ag::constant(dist.mean), &enc.middle)->value;
    } else {
        std::mt19937 rng(sample_seed);
        std::normal_distribution<double> noise(0.0, 1.0);
        int z = model.config().latent_dim;
        Tensor acc;
        for (int s = 0; s < samples; ++s) {
            Tensor zs({z});
            for (int i = 0; i < z; ++i)
                zs(i) = dist.mean(i) + std::exp(0.5 * dist.log_variance(i)) * noise(rng);
            Tensor dec = model.decode_var(ag::constant(zs), &enc.middle)->value;
            if (s == 0)
                acc = dec;
            else
                for (long i = 0; i < dec.numel(); ++i) acc.data[i] += dec.data[i];
        }
        for (double& v : acc.data) v /= samples;
        out = acc;
    }
    out = img::clamp01(std::move(out));
    if (raw_decode) *raw_decode = out;
    return img::blend(image, out, mask, blend_radius);
}

}  // namespace hyperedit::vae
