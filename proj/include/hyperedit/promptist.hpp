#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace hyperedit::pr {

enum class EditCategory { Remove, Addition, Replace, Background, Global };

std::string category_to_string(EditCategory c);
std::optional<EditCategory> category_from_string(const std::string& s);

struct EditPlan {
    EditCategory category = EditCategory::Global;
    std::string editing_object;  // empty for Global
    std::string target_prompt;
    std::optional<std::array<double, 4>> region_hint;  // normalized [x0,y0,x1,y1]
    std::string location_hint;  // spatial words from the instruction, e.g. "top left"
    bool low_confidence = false;

    void validate() const;
    std::string to_json() const;
    static EditPlan from_json(const std::string& json);
};

// Ordered keyword rules: remove/delete/erase -> Remove; add/insert/put ->
// Addition; replace/change-into/make-into/turn-into -> Replace; the word
// "background" in the extracted object -> Background; otherwise Global.
EditPlan parse_instruction(const std::string& instruction);

// Spatial keywords map to a 3x3 grid anchor; the box side defaults to 1/3 of
// the shorter image side (x0.5 for "small"/"tiny", x1.5 for "large"/"big").
std::array<double, 4> compute_addition_region(const EditPlan& plan, int image_w, int image_h);

std::string refine_prompt(const EditPlan& plan,
                          const std::optional<std::string>& scene_caption = std::nullopt);

struct MllmClientConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    double timeout_seconds = 2.0;
    int retries = 1;
};

// POST {instruction, image: base64 PNG} -> EditPlan JSON. Any failure (network,
// timeout, schema) falls back to parse_instruction; `warning` receives the
// reason when set.
EditPlan mllm_analyze(const MllmClientConfig& config, const std::string& image_png_bytes,
                      const std::string& instruction, std::string* warning = nullptr);

struct FixtureCase {
    std::string instruction;
    std::string expected_category;
    std::string expected_object;
};

std::vector<FixtureCase> load_fixtures(const std::string& path);

}  // namespace hyperedit::pr
