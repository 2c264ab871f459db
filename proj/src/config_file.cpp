#include "glissando/config_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "glissando/errors.hpp"

namespace glissando {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

} // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_text(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected 'key = value' at " + origin + ":" +
                              std::to_string(lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError("config: empty key at " + origin + ":" + std::to_string(lineno));
        }
        if (cfg.kv_.count(key)) {
            throw ConfigError("config: duplicate key '" + key + "' in " + origin);
        }
        cfg.kv_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
    return kv_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get_string(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config: integer expected for '" + key + "'");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get_string(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config: number expected for '" + key + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: boolean expected for '" + key + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& part : split_commas(get_string(key, ""))) {
        try {
            out.push_back(std::stoi(part));
        } catch (const std::logic_error&) {
            throw ConfigError("config: integer list expected for '" + key + "'");
        }
    }
    return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : split_commas(get_string(key, ""))) {
        try {
            out.push_back(std::stod(part));
        } catch (const std::logic_error&) {
            throw ConfigError("config: number list expected for '" + key + "'");
        }
    }
    return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key) const {
    return split_commas(get_string(key, ""));
}

void KeyValueConfig::require_known_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : kv_) {
        if (!allowed.count(key)) {
            throw ConfigError("config: unknown key '" + key + "' in " + origin_);
        }
    }
}

} // namespace glissando
