#ifndef GCS_IO_HPP
#define GCS_IO_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcs {

/// Strict `key = value` configuration file: one pair per line, '#' comments,
/// duplicate keys rejected. Consumers read typed values and then call
/// ensure_all_used() so unrecognized keys fail loudly instead of being
/// silently ignored.
class KeyValueConfig {
  public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& origin) {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line = line.substr(0, hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos)
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": expected 'key = value'");
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty() || val.empty())
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": empty key or value");
            if (!cfg.values_.emplace(key, val).second)
                throw std::invalid_argument(origin + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f)
            throw std::runtime_error("config: cannot open " + path);
        return parse(f, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw std::invalid_argument(origin_ + ": missing key '" + key + "'");
        used_.insert(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& dflt) {
        return has(key) ? get_string(key) : dflt;
    }

    double get_double(const std::string& key) {
        const std::string s = get_string(key);
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not a number");
        }
        if (pos != s.size())
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not a number");
        return v;
    }

    double get_double(const std::string& key, double dflt) {
        return has(key) ? get_double(key) : dflt;
    }

    long long get_int(const std::string& key) {
        const double v = get_double(key);
        const long long i = static_cast<long long>(v);
        if (static_cast<double>(i) != v)
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not an integer");
        return i;
    }

    long long get_int(const std::string& key, long long dflt) {
        return has(key) ? get_int(key) : dflt;
    }

    bool get_bool(const std::string& key) {
        const std::string s = get_string(key);
        if (s == "true" || s == "1" || s == "yes" || s == "on")
            return true;
        if (s == "false" || s == "0" || s == "no" || s == "off")
            return false;
        throw std::invalid_argument(origin_ + ": key '" + key + "' is not a boolean");
    }

    bool get_bool(const std::string& key, bool dflt) {
        return has(key) ? get_bool(key) : dflt;
    }

    /// Throws if any key was never consumed by a get_* call.
    void ensure_all_used() const {
        std::vector<std::string> unknown;
        for (const auto& [k, v] : values_)
            if (!used_.count(k))
                unknown.push_back(k);
        if (!unknown.empty()) {
            std::string msg = origin_ + ": unknown key(s):";
            for (const auto& k : unknown)
                msg += " '" + k + "'";
            throw std::invalid_argument(msg);
        }
    }

  private:
    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

/// Write-then-rename so readers never observe a half-written file.
inline void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot open " + tmp + " for writing");
        f << content;
        if (!f)
            throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

/// Minimal CSV table: header fixed at construction, one row per call,
/// numbers formatted to full round-trip precision.
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<double>& row) {
        if (row.size() != header_.size())
            throw std::invalid_argument("csv: row width does not match header");
        rows_.push_back(row);
    }

    std::string str() const {
        std::ostringstream os;
        os.precision(12);
        for (std::size_t i = 0; i < header_.size(); ++i)
            os << (i ? "," : "") << header_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i)
                os << (i ? "," : "") << r[i];
            os << '\n';
        }
        return os.str();
    }

    void save(const std::string& path) const { write_text_atomic(path, str()); }

    std::size_t rows() const { return rows_.size(); }

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

} // namespace gcs

#endif
