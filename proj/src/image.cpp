#include "hyperedit/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace hyperedit::img {

FlattenedFeatures flatten_for_graph(const Tensor& features) {
    require(features.shape.size() == 4, "flatten_for_graph: [B,C,H,W] expected");
    FlattenedFeatures out;
    out.height = features.shape[2];
    out.width = features.shape[3];
    out.data.shape = {features.shape[0], features.shape[1], out.height * out.width};
    out.data.data = features.data;  // row-major: position index is h*W + w
    return out;
}

Tensor restore_shape(const FlattenedFeatures& flat) {
    require(flat.data.shape.size() == 3, "restore_shape: [B,C,N] expected");
    require(flat.data.shape[2] == flat.height * flat.width,
            "restore_shape: N != height*width");
    Tensor out;
    out.shape = {flat.data.shape[0], flat.data.shape[1], flat.height, flat.width};
    out.data = flat.data.data;
    return out;
}

void validate_image(const Tensor& image) {
    require(image.shape.size() == 3, "image must be [C,H,W]");
    require(image.all_finite(), "image has non-finite values");
    for (double v : image.data) require(v >= 0.0 && v <= 1.0, "image values outside [0,1]");
}

void validate_mask(const Tensor& mask) {
    require(mask.shape.size() == 3 && mask.shape[0] == 1, "mask must be [1,H,W]");
    for (double v : mask.data) require(v == 0.0 || v == 1.0, "mask must be binary");
}

Tensor load_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    require(!m.empty(), "failed to read image: " + path);
    Tensor out({3, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            cv::Vec3b bgr = m.at<cv::Vec3b>(y, x);
            out.at(0, y, x) = bgr[2] / 255.0;
            out.at(1, y, x) = bgr[1] / 255.0;
            out.at(2, y, x) = bgr[0] / 255.0;
        }
    return out;
}

void save_png(const std::string& path, const Tensor& image) {
    require(image.shape.size() == 3 && image.shape[0] == 3, "save_png: [3,H,W] expected");
    int h = image.shape[1], w = image.shape[2];
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto q = [&](int c) {
                double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                return static_cast<unsigned char>(std::lround(v * 255.0));
            };
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
        }
    require(cv::imwrite(path, m), "failed to write image: " + path);
}

Tensor load_mask_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    require(!m.empty(), "failed to read mask: " + path);
    Tensor out({1, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            out.at(0, y, x) = m.at<unsigned char>(y, x) >= 128 ? 1.0 : 0.0;
    return out;
}

void save_mask_png(const std::string& path, const Tensor& mask) {
    validate_mask(mask);
    int h = mask.shape[1], w = mask.shape[2];
    cv::Mat m(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            m.at<unsigned char>(y, x) = mask.at(0, y, x) > 0.5 ? 255 : 0;
    require(cv::imwrite(path, m), "failed to write mask: " + path);
}

Tensor dilate_mask(const Tensor& mask, int radius) {
    validate_mask(mask);
    require(radius >= 0, "dilate_mask: radius must be >= 0");
    if (radius == 0) return mask;
    int h = mask.shape[1], w = mask.shape[2];
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (int dy = -radius; dy <= radius && v == 0.0; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -radius; dx <= radius; ++dx) {
                    int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    if (mask.at(0, yy, xx) == 1.0) {
                        v = 1.0;
                        break;
                    }
                }
            }
            out.at(0, y, x) = v;
        }
    return out;
}

Tensor blend(const Tensor& original, const Tensor& generated, const Tensor& mask, int radius) {
    require(original.same_shape(generated), "blend: image shape mismatch");
    validate_mask(mask);
    int h = original.shape[1], w = original.shape[2];
    require(mask.shape[1] == h && mask.shape[2] == w, "blend: mask/image size mismatch");
    require(radius >= 0, "blend: radius must be >= 0");

    // Feather the mask with a circular-support Gaussian. Support is strictly
    // within Euclidean radius r, so soft == 0 wherever no mask pixel lies
    // within r, and those outputs reduce to 0*gen + 1*orig == orig.
    Tensor soft({1, h, w});
    if (radius == 0) {
        soft = mask;
    } else {
        double sigma = std::max(radius / 2.0, 0.5);
        std::vector<double> kernel;
        std::vector<std::pair<int, int>> taps;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (dy * dy + dx * dx <= radius * radius) {
                    taps.emplace_back(dy, dx);
                    kernel.push_back(std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)));
                }
        double norm = 0.0;
        for (double k : kernel) norm += k;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (size_t t = 0; t < taps.size(); ++t) {
                    int yy = std::clamp(y + taps[t].first, 0, h - 1);
                    int xx = std::clamp(x + taps[t].second, 0, w - 1);
                    s += kernel[t] * mask.at(0, yy, xx);
                }
                soft.at(0, y, x) = s / norm;
            }
        // keep the mask interior fully opaque
        for (long i = 0; i < mask.numel(); ++i)
            if (mask.data[i] == 1.0) soft.data[i] = 1.0;
    }

    Tensor out = original;
    int c = original.shape[0];
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double a = soft.at(0, y, x);
                if (a == 0.0) continue;  // bit-exact original
                out.at(ch, y, x) =
                    a * generated.at(ch, y, x) + (1.0 - a) * original.at(ch, y, x);
            }
    return out;
}

Tensor clamp01(Tensor t) {
    for (double& v : t.data) v = std::clamp(v, 0.0, 1.0);
    return t;
}

}  // namespace hyperedit::img
