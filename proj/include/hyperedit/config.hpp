#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "hyperedit/tensor.hpp"

namespace hyperedit::cfg {

// Flat key=value file with [section] headers; '#' and ';' start comments.
class IniFile {
public:
    using Section = std::map<std::string, std::string>;

    static IniFile parse(const std::string& text) {
        IniFile ini;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.resize(comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                require(line.back() == ']',
                        "config line " + std::to_string(lineno) + ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                require(!section.empty(),
                        "config line " + std::to_string(lineno) + ": empty section name");
                ini.sections_[section];
                continue;
            }
            size_t eq = line.find('=');
            require(eq != std::string::npos,
                    "config line " + std::to_string(lineno) + ": expected key=value");
            std::string key = trim(line.substr(0, eq));
            require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
            ini.sections_[section][key] = trim(line.substr(eq + 1));
        }
        return ini;
    }

    static IniFile load(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), "config: cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        require(out.good(), "config: cannot write " + path);
        out << serialize();
    }

    std::string serialize() const {
        std::ostringstream out;
        bool first = true;
        for (const auto& [name, section] : sections_) {
            if (!first) out << '\n';
            first = false;
            if (!name.empty()) out << '[' << name << "]\n";
            for (const auto& [key, value] : section) out << key << " = " << value << '\n';
        }
        return out.str();
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key);
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const {
        auto s = sections_.find(section);
        if (s == sections_.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return std::stod(get(section, key));
    }

    int get_int(const std::string& section, const std::string& key, int fallback) const {
        if (!has(section, key)) return fallback;
        return std::stoi(get(section, key));
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        std::string v = get(section, key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::invalid_argument("config: bad boolean '" + v + "' for " + section + "." + key);
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }
    void set(const std::string& section, const std::string& key, double value) {
        std::ostringstream out;
        out << value;
        set(section, key, out.str());
    }
    void set(const std::string& section, const std::string& key, int value) {
        set(section, key, std::to_string(value));
    }
    void set(const std::string& section, const std::string& key, bool value) {
        set(section, key, std::string(value ? "true" : "false"));
    }

    const std::map<std::string, Section>& sections() const { return sections_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, Section> sections_;
};

}  // namespace hyperedit::cfg
