#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pnn/error.hpp"

namespace pnn {

// Plain-text `key=value` configuration. Blank lines and lines starting with
// '#' are ignored; whitespace around keys and values is trimmed.
class KeyValues {
public:
    static KeyValues parse(const std::string& text);
    static KeyValues read(const std::filesystem::path& path);

    void write(const std::filesystem::path& path) const;
    std::string to_string() const;

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    const std::string& get(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma separated
    std::vector<double> get_doubles(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pnn
