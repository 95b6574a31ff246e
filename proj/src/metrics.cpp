#include "hyperedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hyperedit/image.hpp"

namespace hyperedit::metrics {

namespace {

void check_aligned(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "metric: image shape mismatch");
    require(a.shape.size() == 3, "metric: [C,H,W] expected");
    require(a.all_finite() && b.all_finite(), "metric: non-finite input");
}

}  // namespace

double mse(const Tensor& a, const Tensor& b, const Tensor* include) {
    check_aligned(a, b);
    int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    double s = 0.0;
    long n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (include && include->at(0, y, x) == 0.0) continue;
            for (int ch = 0; ch < c; ++ch) {
                double d = a.at(ch, y, x) - b.at(ch, y, x);
                s += d * d;
            }
            n += c;
        }
    require(n > 0, "mse: empty pixel region");
    return s / n;
}

double psnr(const Tensor& a, const Tensor& b, const Tensor* include) {
    double m = mse(a, b, include);
    if (m <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / m));
}

double ssim(const Tensor& a, const Tensor& b) {
    check_aligned(a, b);
    int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    require(h >= kSsimWindow && w >= kSsimWindow, "ssim: image smaller than window");

    auto gray = [&](const Tensor& t, int y, int x) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) s += t.at(ch, y, x);
        return s / c;
    };

    const double c1 = (kSsimK1 * kSsimL) * (kSsimK1 * kSsimL);
    const double c2 = (kSsimK2 * kSsimL) * (kSsimK2 * kSsimL);
    const int win = kSsimWindow;
    const double inv_n = 1.0 / (win * win);

    double total = 0.0;
    long windows = 0;
    for (int y = 0; y + win <= h; ++y)
        for (int x = 0; x + win <= w; ++x) {
            double ma = 0.0, mb = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    ma += gray(a, y + dy, x + dx);
                    mb += gray(b, y + dy, x + dx);
                }
            ma *= inv_n;
            mb *= inv_n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    double da = gray(a, y + dy, x + dx) - ma;
                    double db = gray(b, y + dy, x + dx) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va *= inv_n;
            vb *= inv_n;
            cov *= inv_n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return total / windows;
}

RandomConvPyramid::RandomConvPyramid(unsigned seed, int scales, int channels)
    : scales_(scales), channels_(channels) {
    std::mt19937 rng(seed);
    for (int s = 0; s < scales_; ++s)
        weights_.push_back(Tensor::randn({channels_, 3, 3, 3}, rng, 1.0 / 3.0));
}

std::vector<Tensor> RandomConvPyramid::extract(const Tensor& image) const {
    require(image.shape.size() == 3 && image.shape[0] == 3, "extractor: [3,H,W] expected");
    std::vector<Tensor> grids;
    Tensor cur = image;
    for (int s = 0; s < scales_; ++s) {
        int h = cur.shape[1], w = cur.shape[2];
        if (h < 3 || w < 3) break;
        const Tensor& wt = weights_[s];
        Tensor feat({channels_, h - 2, w - 2});
        for (int oc = 0; oc < channels_; ++oc)
            for (int y = 0; y + 3 <= h; ++y)
                for (int x = 0; x + 3 <= w; ++x) {
                    double acc = 0.0;
                    for (int ic = 0; ic < 3; ++ic)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx)
                                acc += wt.at(oc, ic, ky, kx) * cur.at(ic, y + ky, x + kx);
                    feat.at(oc, y, x) = std::tanh(acc);
                }
        grids.push_back(feat);
        // halve resolution by 2x2 average pooling
        int h2 = h / 2, w2 = w / 2;
        if (h2 < 3 || w2 < 3) break;
        Tensor next({3, h2, w2});
        for (int ic = 0; ic < 3; ++ic)
            for (int y = 0; y < h2; ++y)
                for (int x = 0; x < w2; ++x)
                    next.at(ic, y, x) = 0.25 * (cur.at(ic, 2 * y, 2 * x) +
                                                cur.at(ic, 2 * y, 2 * x + 1) +
                                                cur.at(ic, 2 * y + 1, 2 * x) +
                                                cur.at(ic, 2 * y + 1, 2 * x + 1));
        cur = next;
    }
    return grids;
}

double lpips_proxy(const Tensor& a, const Tensor& b, const FeatureExtractor& extractor) {
    check_aligned(a, b);
    auto fa = extractor.extract(a);
    auto fb = extractor.extract(b);
    require(fa.size() == fb.size() && !fa.empty(), "lpips_proxy: extractor layer mismatch");

    auto normalize = [](Tensor& t) {
        int c = t.shape[0], h = t.shape[1], w = t.shape[2];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double n = 0.0;
                for (int ch = 0; ch < c; ++ch) n += t.at(ch, y, x) * t.at(ch, y, x);
                n = std::sqrt(n) + 1e-12;
                for (int ch = 0; ch < c; ++ch) t.at(ch, y, x) /= n;
            }
    };

    double total = 0.0;
    for (size_t l = 0; l < fa.size(); ++l) {
        normalize(fa[l]);
        normalize(fb[l]);
        double s = 0.0;
        for (long i = 0; i < fa[l].numel(); ++i) {
            double d = fa[l].data[i] - fb[l].data[i];
            s += d * d;
        }
        total += s / fa[l].numel();
    }
    return total / fa.size();
}

std::optional<double> clip_sim(const Tensor& image, const std::string& text,
                               const JointEmbedder* embedder) {
    if (!embedder) return std::nullopt;
    auto vi = embedder->embed_image(image);
    auto vt = embedder->embed_text(text);
    require(vi.size() == vt.size() && !vi.empty(), "clip_sim: embedding dim mismatch");
    double dot = 0.0, ni = 0.0, nt = 0.0;
    for (size_t i = 0; i < vi.size(); ++i) {
        dot += vi[i] * vt[i];
        ni += vi[i] * vi[i];
        nt += vt[i] * vt[i];
    }
    require(ni > 0.0 && nt > 0.0, "clip_sim: zero-norm embedding");
    return dot / (std::sqrt(ni) * std::sqrt(nt));
}

const std::vector<std::string> kScenarioTags = {
    "left-right", "relative size", "mirror", "color", "multiple objects", "reasoning",
    "addition"};

std::vector<BenchmarkRecord> load_benchmark(const std::string& manifest_path, bool check_files) {
    std::ifstream in(manifest_path);
    require(in.good(), "load_benchmark: cannot open " + manifest_path);
    std::vector<BenchmarkRecord> records;
    std::vector<std::string> errors;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            errors.push_back("line " + std::to_string(lineno) + ": invalid JSON");
            continue;
        }
        BenchmarkRecord r;
        try {
            r.source_image = j.at("source_image").get<std::string>();
            r.instruction = j.at("instruction").get<std::string>();
            r.editing_mask = j.at("editing_mask").get<std::string>();
            r.scenario_tag = j.at("scenario_tag").get<std::string>();
        } catch (const std::exception&) {
            errors.push_back("line " + std::to_string(lineno) + ": missing field");
            continue;
        }
        if (std::find(kScenarioTags.begin(), kScenarioTags.end(), r.scenario_tag) ==
            kScenarioTags.end()) {
            errors.push_back("line " + std::to_string(lineno) + ": unknown scenario_tag '" +
                             r.scenario_tag + "'");
            continue;
        }
        if (check_files) {
            if (!std::filesystem::exists(r.source_image)) {
                errors.push_back("line " + std::to_string(lineno) + ": missing source image");
                continue;
            }
            if (!std::filesystem::exists(r.editing_mask)) {
                errors.push_back("line " + std::to_string(lineno) + ": missing mask");
                continue;
            }
        }
        records.push_back(std::move(r));
    }
    if (!errors.empty()) {
        std::string msg = "load_benchmark: invalid manifest:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::invalid_argument(msg);
    }
    return records;
}

MetricReport evaluate_pair(const Tensor& source, const Tensor& edited, const Tensor& mask,
                           const FeatureExtractor& extractor, bool background,
                           const JointEmbedder* embedder, const std::string& instruction) {
    MetricReport r;
    if (background) {
        // selector: pixels outside the editing mask
        Tensor outside({1, mask.shape[1], mask.shape[2]});
        for (long i = 0; i < mask.numel(); ++i) outside.data[i] = mask.data[i] == 0.0 ? 1.0 : 0.0;
        r.mse = mse(source, edited, &outside);
        r.psnr_db = psnr(source, edited, &outside);
        // windowed metrics: neutralize the editable region with source content
        Tensor neutral = edited;
        int c = edited.shape[0];
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < mask.shape[1]; ++y)
                for (int x = 0; x < mask.shape[2]; ++x)
                    if (mask.at(0, y, x) == 1.0) neutral.at(ch, y, x) = source.at(ch, y, x);
        r.ssim = ssim(source, neutral);
        r.lpips_proxy = lpips_proxy(source, neutral, extractor);
        r.region = "background";
    } else {
        r.mse = mse(source, edited);
        r.psnr_db = psnr(source, edited);
        r.ssim = ssim(source, edited);
        r.lpips_proxy = lpips_proxy(source, edited, extractor);
        r.region = "full image";
    }
    r.clip_sim = clip_sim(edited, instruction, embedder);
    return r;
}

namespace {

MetricReport mean_report(const std::vector<MetricReport>& rs) {
    MetricReport m;
    if (rs.empty()) return m;
    double clip_total = 0.0;
    int clip_n = 0;
    for (const auto& r : rs) {
        m.psnr_db += r.psnr_db;
        m.ssim += r.ssim;
        m.mse += r.mse;
        m.lpips_proxy += r.lpips_proxy;
        if (r.clip_sim) {
            clip_total += *r.clip_sim;
            ++clip_n;
        }
    }
    m.psnr_db /= rs.size();
    m.ssim /= rs.size();
    m.mse /= rs.size();
    m.lpips_proxy /= rs.size();
    if (clip_n > 0) m.clip_sim = clip_total / clip_n;
    m.region = rs.front().region;
    return m;
}

}  // namespace

RunReport evaluate_run(const std::vector<BenchmarkRecord>& records,
                       const std::vector<Tensor>& edited_images,
                       const FeatureExtractor& extractor, bool background,
                       const JointEmbedder* embedder) {
    require(records.size() == edited_images.size(),
            "evaluate_run: record/image count mismatch");
    std::map<std::string, std::vector<MetricReport>> buckets;
    std::vector<MetricReport> all;
    for (size_t i = 0; i < records.size(); ++i) {
        Tensor source = img::load_png(records[i].source_image);
        Tensor mask = img::load_mask_png(records[i].editing_mask);
        MetricReport r = evaluate_pair(source, edited_images[i], mask, extractor, background,
                                       embedder, records[i].instruction);
        buckets[records[i].scenario_tag].push_back(r);
        all.push_back(r);
    }
    RunReport out;
    for (auto& [tag, rs] : buckets) out.per_scenario[tag] = mean_report(rs);
    out.overall = mean_report(all);
    return out;
}

namespace {

nlohmann::json report_json(const MetricReport& r) {
    nlohmann::json j;
    j["psnr_db"] = r.psnr_db;
    j["ssim"] = r.ssim;
    j["mse_x1000"] = r.mse * 1000.0;
    j["lpips_x1000"] = r.lpips_proxy * 1000.0;
    if (r.clip_sim) j["clip_sim"] = *r.clip_sim;
    if (r.ins_align) j["ins_align"] = *r.ins_align;
    j["region"] = r.region;
    return j;
}

std::string fmt(double v, int prec) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

}  // namespace

std::string report_to_json(const RunReport& report) {
    nlohmann::json j;
    for (const auto& [tag, r] : report.per_scenario) j["per_scenario"][tag] = report_json(r);
    j["overall"] = report_json(report.overall);
    return j.dump(2);
}

std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                         const std::string& title) {
    auto cell = [](std::string s, size_t width) {
        if (s.size() < width) s.resize(width, ' ');
        return s;
    };
    const std::vector<std::pair<std::string, size_t>> cols = {
        {"Methods", 20},  {"PSNR^", 8},    {"LPIPSx10^3v", 12},
        {"SSIM^", 7},     {"CLIPSim^", 9}, {"Ins-align^", 10}};
    std::ostringstream os;
    os << title << "\n";
    for (size_t i = 0; i < cols.size(); ++i)
        os << (i ? "| " : "") << cell(cols[i].first, cols[i].second);
    os << "\n";
    for (size_t i = 0; i < cols.size(); ++i)
        os << (i ? "+" : "") << std::string(cols[i].second + (i ? 1 : 0), '-');
    os << "\n";
    for (const auto& [name, r] : rows) {
        os << cell(name, cols[0].second);
        os << "| " << cell(fmt(r.psnr_db, 2), cols[1].second);
        os << "| " << cell(fmt(r.lpips_proxy * 1000.0, 2), cols[2].second);
        os << "| " << cell(fmt(r.ssim, 2), cols[3].second);
        os << "| " << cell(r.clip_sim ? fmt(*r.clip_sim, 2) : "-", cols[4].second);
        os << "| " << cell(r.ins_align ? fmt(*r.ins_align, 2) : "-", cols[5].second);
        os << "\n";
    }
    return os.str();
}

}  // namespace hyperedit::metrics
