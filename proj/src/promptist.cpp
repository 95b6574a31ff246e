#include "hyperedit/promptist.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include <httplib.h>

#include "hyperedit/tensor.hpp"

namespace hyperedit::pr {

std::string category_to_string(EditCategory c) {
    switch (c) {
        case EditCategory::Remove: return "Remove";
        case EditCategory::Addition: return "Addition";
        case EditCategory::Replace: return "Replace";
        case EditCategory::Background: return "Background";
        case EditCategory::Global: return "Global";
    }
    return "Global";
}

std::optional<EditCategory> category_from_string(const std::string& s) {
    if (s == "Remove") return EditCategory::Remove;
    if (s == "Addition") return EditCategory::Addition;
    if (s == "Replace") return EditCategory::Replace;
    if (s == "Background") return EditCategory::Background;
    if (s == "Global") return EditCategory::Global;
    return std::nullopt;
}

void EditPlan::validate() const {
    if (region_hint) {
        const auto& b = *region_hint;
        require(b[0] >= 0.0 && b[0] < b[2] && b[2] <= 1.0 && b[1] >= 0.0 && b[1] < b[3] &&
                    b[3] <= 1.0,
                "EditPlan: invalid region_hint bbox");
    }
    if (category == EditCategory::Addition)
        require(region_hint.has_value(), "EditPlan: Addition requires a region_hint");
    if (category == EditCategory::Replace)
        require(!editing_object.empty() && !target_prompt.empty(),
                "EditPlan: Replace requires editing_object and target_prompt");
}

std::string EditPlan::to_json() const {
    nlohmann::json j;
    j["category"] = category_to_string(category);
    j["editing_object"] = editing_object;
    j["target_prompt"] = target_prompt;
    if (region_hint)
        j["region_hint"] = *region_hint;
    else
        j["region_hint"] = nullptr;
    j["location_hint"] = location_hint;
    j["low_confidence"] = low_confidence;
    return j.dump();
}

EditPlan EditPlan::from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    EditPlan p;
    auto cat = category_from_string(j.at("category").get<std::string>());
    require(cat.has_value(), "EditPlan: unknown category");
    p.category = *cat;
    p.editing_object = j.at("editing_object").get<std::string>();
    p.target_prompt = j.at("target_prompt").get<std::string>();
    if (!j.at("region_hint").is_null())
        p.region_hint = j.at("region_hint").get<std::array<double, 4>>();
    if (j.contains("location_hint")) p.location_hint = j.at("location_hint").get<std::string>();
    if (j.contains("low_confidence")) p.low_confidence = j.at("low_confidence").get<bool>();
    p.validate();
    return p;
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) {
        std::string cleaned;
        for (char c : w)
            if (!std::ispunct(static_cast<unsigned char>(c)) || c == '-')
                cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (!cleaned.empty()) words.push_back(cleaned);
    }
    return words;
}

std::string join(const std::vector<std::string>& words, size_t from, size_t to) {
    std::string out;
    for (size_t i = from; i < to && i < words.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += words[i];
    }
    return out;
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

std::string strip_article(std::string phrase) {
    auto ws = words_of(phrase);
    if (!ws.empty() && is_article(ws.front())) ws.erase(ws.begin());
    return join(ws, 0, ws.size());
}

// drops a trailing "in the image/picture/photo"
std::vector<std::string> strip_image_ref(std::vector<std::string> ws) {
    for (size_t i = 0; i + 1 < ws.size(); ++i) {
        if (ws[i] == "in" &&
            (ws.back() == "image" || ws.back() == "picture" || ws.back() == "photo")) {
            ws.resize(i);
            break;
        }
    }
    return ws;
}

size_t find_word(const std::vector<std::string>& ws, std::initializer_list<const char*> opts,
                 size_t from = 0) {
    for (size_t i = from; i < ws.size(); ++i)
        for (const char* o : opts)
            if (ws[i] == o) return i;
    return ws.size();
}

bool contains_word(const std::vector<std::string>& ws, const char* w) {
    return std::find(ws.begin(), ws.end(), w) != ws.end();
}

}  // namespace

EditPlan parse_instruction(const std::string& instruction) {
    require(!instruction.empty(), "parse_instruction: empty instruction");
    auto ws = words_of(instruction);
    require(!ws.empty(), "parse_instruction: no words in instruction");

    EditPlan plan;

    // Remove
    size_t t = find_word(ws, {"remove", "delete", "erase"});
    if (t < ws.size()) {
        auto obj = strip_image_ref({ws.begin() + t + 1, ws.end()});
        std::string object = strip_article(join(obj, 0, obj.size()));
        if (!object.empty()) {
            plan.category = EditCategory::Remove;
            if (object.find("background") != std::string::npos) {
                plan.category = EditCategory::Background;
                plan.editing_object = "background";
                plan.target_prompt = instruction;
            } else {
                plan.editing_object = object;
                plan.target_prompt = "the scene without the " + object;
            }
            return plan;
        }
        plan.low_confidence = true;  // trigger with no object
    }

    // Addition
    t = find_word(ws, {"add", "insert", "put"});
    if (t < ws.size()) {
        size_t prep = find_word(ws, {"in", "on", "at", "near", "to", "into", "over"}, t + 1);
        std::string phrase = join(ws, t + 1, prep);
        std::string object = strip_article(phrase);
        if (!object.empty()) {
            plan.category = EditCategory::Addition;
            plan.editing_object = object;
            plan.target_prompt = phrase;
            std::vector<std::string> loc;
            for (size_t i = prep + 1; i < ws.size(); ++i)
                if (!is_article(ws[i]) && ws[i] != "of" && ws[i] != "corner" && ws[i] != "side")
                    loc.push_back(ws[i]);
            plan.location_hint = join(loc, 0, loc.size());
            plan.region_hint = compute_addition_region(plan, 512, 512);
            return plan;
        }
        plan.low_confidence = true;
    }

    // Replace
    t = find_word(ws, {"replace", "change", "make", "turn", "swap"});
    if (t < ws.size()) {
        size_t sep = (ws[t] == "replace" || ws[t] == "swap")
                         ? find_word(ws, {"with", "by", "into"}, t + 1)
                         : find_word(ws, {"into", "to"}, t + 1);
        if (sep < ws.size() && sep > t + 1 && sep + 1 < ws.size()) {
            auto obj_words = strip_image_ref({ws.begin() + t + 1, ws.begin() + sep});
            std::string object = strip_article(join(obj_words, 0, obj_words.size()));
            std::string target = join(ws, sep + 1, ws.size());
            if (!object.empty() && !target.empty()) {
                if (object.find("background") != std::string::npos) {
                    plan.category = EditCategory::Background;
                    plan.editing_object = "background";
                    plan.target_prompt = target;
                } else {
                    plan.category = EditCategory::Replace;
                    plan.editing_object = object;
                    plan.target_prompt = target;
                }
                return plan;
            }
        }
        // "make it winter" and friends fall through to Global
    }

    if (contains_word(ws, "background")) {
        plan.category = EditCategory::Background;
        plan.editing_object = "background";
        plan.target_prompt = instruction;
        return plan;
    }

    plan.category = EditCategory::Global;
    plan.editing_object.clear();
    plan.target_prompt = instruction;
    return plan;
}

std::array<double, 4> compute_addition_region(const EditPlan& plan, int image_w, int image_h) {
    require(plan.category == EditCategory::Addition,
            "compute_addition_region: plan is not an Addition");
    require(image_w > 0 && image_h > 0, "compute_addition_region: bad image size");
    auto loc = words_of(plan.location_hint);
    int row = 1, col = 1;  // center anchor by default
    if (contains_word(loc, "top")) row = 0;
    if (contains_word(loc, "bottom")) row = 2;
    if (contains_word(loc, "left")) col = 0;
    if (contains_word(loc, "right")) col = 2;

    double scale = 1.0;
    auto size_words = words_of(plan.target_prompt + " " + plan.location_hint);
    if (contains_word(size_words, "small") || contains_word(size_words, "tiny")) scale = 0.5;
    if (contains_word(size_words, "large") || contains_word(size_words, "big")) scale = 1.5;

    double base = std::min(image_w, image_h) / 3.0 * scale;
    double sw = base / image_w, sh = base / image_h;
    double cx = (col + 0.5) / 3.0, cy = (row + 0.5) / 3.0;
    std::array<double, 4> box = {cx - sw / 2.0, cy - sh / 2.0, cx + sw / 2.0, cy + sh / 2.0};
    for (int i = 0; i < 4; ++i) box[i] = std::clamp(box[i], 0.0, 1.0);
    return box;
}

namespace {

const char* kObjectSuffix = ", detailed, naturally lit";

std::string collapse_spaces(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == ' ' && !out.empty() && out.back() == ' ') continue;
        out += c;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    while (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

// caption-minus-object rewrite: deletes "(a|an|the)? <head-noun>" and patches
// the conjunction left behind.
std::string remove_object_from_caption(const std::string& caption, const std::string& object) {
    auto obj_words = words_of(object);
    if (obj_words.empty()) return caption;
    const std::string& head = obj_words.front();
    auto cap_words = words_of(caption);
    std::vector<std::string> out;
    for (size_t i = 0; i < cap_words.size(); ++i) {
        if (cap_words[i] == head) continue;
        if (i + 1 < cap_words.size() && is_article(cap_words[i]) && cap_words[i + 1] == head)
            continue;
        out.push_back(cap_words[i]);
    }
    std::string joined = join(out, 0, out.size());
    const std::pair<const char*, const char*> fixes[] = {
        {"with and", "with"}, {"and and", "and"}, {"with ,", "with"}};
    for (auto [from, to] : fixes) {
        size_t pos;
        while ((pos = joined.find(from)) != std::string::npos)
            joined = joined.substr(0, pos) + to + joined.substr(pos + std::strlen(from));
    }
    // a dangling "with" or "and" at the end reads wrong after deletion
    auto final_words = words_of(joined);
    while (!final_words.empty() &&
           (final_words.back() == "with" || final_words.back() == "and"))
        final_words.pop_back();
    return collapse_spaces(join(final_words, 0, final_words.size()));
}

}  // namespace

std::string refine_prompt(const EditPlan& plan, const std::optional<std::string>& scene_caption) {
    switch (plan.category) {
        case EditCategory::Replace:
        case EditCategory::Addition:
            return plan.target_prompt + kObjectSuffix;
        case EditCategory::Remove:
            if (scene_caption)
                return remove_object_from_caption(*scene_caption, plan.editing_object);
            return "the scene without the " + plan.editing_object;
        case EditCategory::Background:
        case EditCategory::Global: {
            std::string base = scene_caption ? *scene_caption : "the scene";
            std::string change = plan.target_prompt;
            // "make it winter" reads better as "in winter"
            if (change.rfind("make it ", 0) == 0 || change.rfind("Make it ", 0) == 0)
                change = "in " + change.substr(8);
            return base + ", " + change;
        }
    }
    return plan.target_prompt;
}

namespace {

std::string base64_encode(const std::string& bytes) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    size_t i = 0;
    while (i + 2 < bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

}  // namespace

EditPlan mllm_analyze(const MllmClientConfig& config, const std::string& image_png_bytes,
                      const std::string& instruction, std::string* warning) {
    auto fallback = [&](const std::string& why) {
        if (warning) *warning = why;
        return parse_instruction(instruction);
    };
    if (config.endpoint.empty()) return fallback("no endpoint configured");

    nlohmann::json body;
    body["instruction"] = instruction;
    body["image"] = base64_encode(image_png_bytes);
    std::string payload = body.dump();

    int attempts = std::max(1, config.retries);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        httplib::Client client(config.endpoint);
        auto secs = static_cast<time_t>(config.timeout_seconds);
        auto usecs = static_cast<time_t>((config.timeout_seconds - secs) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        auto res = client.Post("/analyze", payload, "application/json");
        if (!res) continue;  // connection failure; retry if attempts remain
        if (res->status != 200) continue;
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) return fallback("remote returned invalid JSON");
        try {
            EditPlan plan;
            auto cat = category_from_string(j.at("category").get<std::string>());
            if (!cat) return fallback("remote returned unknown category");
            plan.category = *cat;
            plan.editing_object = j.at("editing_object").get<std::string>();
            plan.target_prompt = j.at("target_prompt").get<std::string>();
            if (!j.at("region_hint").is_null())
                plan.region_hint = j.at("region_hint").get<std::array<double, 4>>();
            plan.validate();
            return plan;
        } catch (const std::exception& e) {
            return fallback(std::string("remote plan rejected: ") + e.what());
        }
    }
    return fallback("endpoint unreachable or timed out");
}

std::vector<FixtureCase> load_fixtures(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_fixtures: cannot open " + path);
    std::vector<FixtureCase> cases;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        cases.push_back({j.at("instruction").get<std::string>(),
                         j.at("expected_category").get<std::string>(),
                         j.at("expected_object").get<std::string>()});
    }
    return cases;
}

}  // namespace hyperedit::pr
