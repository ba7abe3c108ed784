#include "cmfseg/kvfile.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cmfseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

void KvFile::set(const std::string& key, const std::string& value) {
    for (auto& e : entries_) {
        if (e.first == key) {
            e.second = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void KvFile::set_int(const std::string& key, std::int64_t v) {
    set(key, std::to_string(v));
}

void KvFile::set_double(const std::string& key, double v) {
    set(key, format_double(v));
}

void KvFile::set_ints(const std::string& key, const std::vector<std::int64_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(v[i]);
    }
    set(key, s);
}

void KvFile::set_doubles(const std::string& key, const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += format_double(v[i]);
    }
    set(key, s);
}

bool KvFile::has(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return true;
    return false;
}

const std::string& KvFile::get(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return e.second;
    throw ValidationError("kvfile", "missing key '" + key + "'");
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

std::int64_t KvFile::get_int(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || trim(end) != "")
        throw ValidationError("kvfile", "key '" + key + "': not an integer: '" + s + "'");
    return v;
}

double KvFile::get_double(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || trim(end) != "")
        throw ValidationError("kvfile", "key '" + key + "': not a number: '" + s + "'");
    return v;
}

std::int64_t KvFile::get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KvFile::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::vector<std::int64_t> KvFile::get_ints(const std::string& key) const {
    std::istringstream iss(get(key));
    std::vector<std::int64_t> out;
    std::int64_t v;
    while (iss >> v) out.push_back(v);
    if (!iss.eof())
        throw ValidationError("kvfile", "key '" + key + "': not an integer list");
    return out;
}

std::vector<double> KvFile::get_doubles(const std::string& key) const {
    std::istringstream iss(get(key));
    std::vector<double> out;
    double v;
    while (iss >> v) out.push_back(v);
    if (!iss.eof())
        throw ValidationError("kvfile", "key '" + key + "': not a number list");
    return out;
}

std::string KvFile::serialize() const {
    std::string out;
    for (const auto& e : entries_) {
        out += e.first;
        out += " = ";
        out += e.second;
        out += '\n';
    }
    return out;
}

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
    KvFile kv;
    std::istringstream iss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(iss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError("kvfile", origin + ":" + std::to_string(lineno) +
                                               ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ValidationError("kvfile", origin + ":" + std::to_string(lineno) +
                                               ": empty key");
        kv.set(key, value);
    }
    return kv;
}

KvFile KvFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("kvfile", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

void KvFile::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("kvfile", "cannot write '" + path + "'");
    out << serialize();
    if (!out) throw IoError("kvfile", "write failed for '" + path + "'");
}

std::string KvFile::format_double(double v) {
    // Shortest representation that round-trips through strtod.
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = std::strtod(buf, nullptr);
        if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace cmfseg
