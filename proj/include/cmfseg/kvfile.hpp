#pragma once

#include "cmfseg/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cmfseg {

// Flat `key = value` text block. Keeps insertion order so emitted files are
// deterministic. Lines starting with '#' and blank lines are skipped on parse.
class KvFile {
public:
    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, std::int64_t v);
    void set_double(const std::string& key, double v);
    void set_ints(const std::string& key, const std::vector<std::int64_t>& v);
    void set_doubles(const std::string& key, const std::vector<double>& v);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    std::vector<std::int64_t> get_ints(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }

    std::string serialize() const;

    static KvFile parse_text(const std::string& text, const std::string& origin);
    static KvFile load(const std::string& path);
    void save(const std::string& path) const;

    // Shortest text that parses back to the same double ("1" for 1.0).
    static std::string format_double(double v);

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

} // namespace cmfseg
