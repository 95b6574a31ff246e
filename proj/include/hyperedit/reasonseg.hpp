#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyperedit/losses.hpp"
#include "hyperedit/nn.hpp"

namespace hyperedit::rs {

inline const std::string kPad = "<pad>";
inline const std::string kBos = "<bos>";
inline const std::string kEos = "<eos>";
inline const std::string kSeg = "<seg>";
inline const std::string kUnk = "<unk>";

// Whitespace tokenizer over a fixed lowercase vocabulary with the <seg>
// token added to the main vocabulary.
class Vocabulary {
public:
    Vocabulary();  // default word list covering the synthetic corpus
    explicit Vocabulary(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int id(const std::string& token) const;
    const std::string& token(int id) const;
    int pad_id() const { return pad_; }
    int seg_id() const { return seg_; }
    int unk_id() const { return unk_; }

    // Lowercases first; words outside the vocabulary map to <unk>.
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int pad_ = -1, seg_ = -1, unk_ = -1;
};

struct SegQuery {
    std::string raw_text;
    std::vector<int> token_ids;      // tokenized query
    std::vector<int> response_ids;   // expected response template
    std::vector<int> seg_positions;  // indices of <seg> within response_ids
};

// "Please segment the X in the image", with leading articles stripped from X.
SegQuery build_query(const std::string& editing_object, const Vocabulary& vocab);

struct ShapeSpec {
    int kind = 0;   // 0 circle, 1 square, 2 triangle
    int color = 0;  // index into kColorNames
    double cx = 0.0, cy = 0.0, radius = 0.0;
};

extern const std::vector<std::string> kColorNames;
extern const std::vector<std::string> kShapeNames;
extern const std::vector<std::string> kQueryFamilies;  // attribute, superlative, spatial, count-position

struct SceneSpec {
    double bg_base[3] = {0, 0, 0};
    double bg_grad[3] = {0, 0, 0};
    bool horizontal = true;
    std::vector<ShapeSpec> shapes;
    int target = 0;  // index of the referenced shape
    std::string family;
    std::string object_phrase;
};

Tensor render_scene(const SceneSpec& spec, int size, int exclude_shape = -1);
Tensor shape_mask(const ShapeSpec& shape, int size);

struct SegSample {
    Tensor image;    // [3,H,W]
    SegQuery query;
    Tensor gt_mask;  // [1,H,W]
    std::vector<int> gt_text;  // response containing <seg>
    std::string family;
    SceneSpec scene;
};

struct CorpusConfig {
    int size = 32;
    std::vector<double> family_ratios = {0.25, 0.25, 0.25, 0.25};
};

SceneSpec sample_scene(std::mt19937& rng, int size, const std::string& family);
std::vector<SegSample> generate_synthetic_corpus(unsigned seed, int n,
                                                 const Vocabulary& vocab,
                                                 const CorpusConfig& cc = {});
void save_corpus(const std::vector<SegSample>& samples, const std::string& dir,
                 const Vocabulary& vocab);

struct ReasonSegConfig {
    int image_size = 32;
    int embed_dim = 32;
    int vis_ch1 = 16;
    int vis_ch2 = 32;
    int max_response_len = 16;

    std::string to_json(const Vocabulary& vocab) const;
    static std::pair<ReasonSegConfig, Vocabulary> from_json(const std::string& json);
};

struct MaskPrediction {
    Tensor soft;  // [1,H,W] in [0,1]
    Tensor binarized(double threshold = 0.5) const;
};

class ReasonSegModel {
public:
    ReasonSegModel(ReasonSegConfig cfg, Vocabulary vocab, unsigned init_seed);

    const ReasonSegConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Decoder hidden states for the response positions, driven by the query
    // context; [R, D].
    ag::Var response_hidden(const SegQuery& query) const;
    // MLP projection of selected hidden rows; one [F] embedding per position.
    std::vector<Tensor> extract_seg_embedding(const Tensor& hidden_states,
                                              const std::vector<int>& seg_positions) const;

    struct Forward {
        ag::Var text_logits;            // [R, V]
        std::vector<ag::Var> masks;     // one soft [1,H,W] per <seg> position
    };
    Forward forward(const Tensor& image, const SegQuery& query) const;

    MaskPrediction predict_mask(const Tensor& image, const SegQuery& query) const;

    void save(const std::string& path) const;
    static ReasonSegModel load(const std::string& path);

private:
    ReasonSegConfig cfg_;
    Vocabulary vocab_;
    nn::ParamStore params_;

    ag::Var seg_embedding_var(const ag::Var& hidden, int position) const;
};

double iou(const Tensor& a, const Tensor& b);  // binary masks
struct EvalReport {
    double giou = 0.0;  // mean per-image IoU
    double ciou = 0.0;  // cumulative intersection / cumulative union
    int count = 0;
};
EvalReport evaluate_masks(const ReasonSegModel& model, const std::vector<SegSample>& samples);

struct TrainConfig {
    int steps = 3000;
    int batch = 8;
    double lr = 2e-3;
    unsigned seed = 0;
    int eval_every = 200;
    double stop_giou = 0.0;  // > 0: early stop once held-out gIoU reaches this
    std::string log_csv;
};

struct TrainStep {
    int step;
    double txt_loss;
    double mask_loss;
    double total;
};

std::vector<TrainStep> train_reason_seg(ReasonSegModel& model,
                                        const std::vector<SegSample>& train,
                                        const std::vector<SegSample>& held_out,
                                        const loss::LossWeights& weights,
                                        const TrainConfig& tc);

}  // namespace hyperedit::rs
