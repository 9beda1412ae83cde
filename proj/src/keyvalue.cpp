#include "pnn/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pnn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* type) {
    throw Error("config.bad_value", "key '" + key + "': cannot parse '" + value + "' as " + type);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw Error("config.syntax", "line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw Error("config.syntax", "line " + std::to_string(lineno) + ": empty key");
        kv.values_[key] = trim(t.substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config.io", "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValues::to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

void KeyValues::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("config.io", "cannot open " + path.string() + " for writing");
    out << to_string();
}

const std::string& KeyValues::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error("config.missing_key", "missing key '" + key + "'");
    return it->second;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

long long KeyValues::get_int(const std::string& key) const {
    const std::string& v = get(key);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "integer");
    return out;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KeyValues::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, "number");
        return d;
    } catch (const std::logic_error&) {
        bad_value(key, v, "number");
    }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = get(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    bad_value(key, v, "boolean");
}

std::vector<std::string> KeyValues::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : get_list(key)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) bad_value(key, item, "number");
        } catch (const std::logic_error&) {
            bad_value(key, item, "number");
        }
    }
    return out;
}

}  // namespace pnn
