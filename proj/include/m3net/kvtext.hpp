#pragma once

// Flat key=value text, the one config syntax used everywhere: dataset cards,
// model configs embedded in checkpoints, and run configs. '#' starts a comment.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "m3net/errors.hpp"

namespace m3net {

class KvText {
public:
    static KvText parse(const std::string& text) {
        KvText kv;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected key=value, got \"" + line + "\"");
            kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            if (pos > text.size()) break;
        }
        return kv;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            order_.push_back(key);
            values_.emplace(key, value);
        } else {
            it->second = value;  // later assignment wins
        }
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::int64_t get_int(const std::string& key) const {
        return parse_int(key, get(key));
    }
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key) const {
        const std::string& s = get(key);
        try {
            std::size_t used = 0;
            std::uint64_t v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an unsigned integer: " + s);
        }
    }
    std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_u64(key) : fallback;
    }

    double get_real(const std::string& key) const {
        const std::string& s = get(key);
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: " + s);
        }
    }
    double get_real_or(const std::string& key, double fallback) const {
        return has(key) ? get_real(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string& s = get(key);
        if (s == "true" || s == "1" || s == "on") return true;
        if (s == "false" || s == "0" || s == "off") return false;
        throw ConfigError("config key " + key + ": not a boolean: " + s);
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    const std::vector<std::string>& keys() const { return order_; }

    std::string to_text() const {
        std::string out;
        for (const std::string& k : order_) {
            out += k;
            out += " = ";
            out += values_.at(k);
            out += '\n';
        }
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::int64_t parse_int(const std::string& key, const std::string& s) const {
        try {
            std::size_t used = 0;
            std::int64_t v = std::stoll(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an integer: " + s);
        }
    }

    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

}  // namespace m3net
