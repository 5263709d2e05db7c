#include "spv/trial_log.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "spv/error.hpp"

namespace spv::trial_log {
namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

[[noreturn]] void bad(std::size_t line, const std::string& what) {
    throw ValidationError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(line, std::string("bad ") + field + " '" + s + "'");
    return v;
}

template <class T>
T parse_int(const std::string& s, std::size_t line, const char* field) {
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        bad(line, std::string("bad ") + field + " '" + s + "'");
    return v;
}

bool getline_lf(std::istream& is, std::string& line) {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    if (quoted) throw ValidationError("unterminated quoted field");
    return out;
}

void write_trials(std::ostream& os, const std::vector<tasks::TrialRecord>& records) {
    os << kTrialHeader << '\n';
    for (const auto& r : records) {
        os << tasks::to_string(r.task) << ',' << r.block << ',' << quote(r.condition.device) << ','
           << format_double(r.condition.rho_um) << ',' << format_double(r.condition.lambda_um) << ','
           << tasks::to_string(r.condition.display) << ',' << r.trial << ',' << quote(r.stimulus) << ','
           << quote(r.response) << ',';
        if (r.correct) os << (*r.correct ? '1' : '0');
        os << ',';
        if (r.collisions) os << *r.collisions;
        os << ',' << format_double(r.time_s) << ',' << r.seed << '\n';
    }
}

std::vector<tasks::TrialRecord> read_trials(std::istream& is) {
    std::string line;
    if (!getline_lf(is, line) || line != kTrialHeader) throw ValidationError("line 1: missing trial log header");
    std::vector<tasks::TrialRecord> out;
    std::size_t n = 1;
    while (getline_lf(is, line)) {
        ++n;
        if (line.empty()) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_line(line);
        } catch (const ValidationError& e) {
            bad(n, e.what());
        }
        if (f.size() != 13) bad(n, "expected 13 fields, got " + std::to_string(f.size()));
        tasks::TrialRecord r;
        try {
            r.task = tasks::parse_task(f[0]);
            r.condition.display = tasks::parse_display(f[5]);
        } catch (const ConfigError& e) {
            bad(n, e.what());
        }
        r.block = parse_int<int>(f[1], n, "block");
        r.condition.device = f[2];
        r.condition.rho_um = parse_double(f[3], n, "rho_um");
        r.condition.lambda_um = parse_double(f[4], n, "lambda_um");
        r.trial = parse_int<int>(f[6], n, "trial");
        r.stimulus = f[7];
        r.response = f[8];
        if (f[9] == "1") r.correct = true;
        else if (f[9] == "0") r.correct = false;
        else if (!f[9].empty()) bad(n, "bad correct '" + f[9] + "'");
        if (!f[10].empty()) r.collisions = parse_int<int>(f[10], n, "collisions");
        r.time_s = parse_double(f[11], n, "time_s");
        r.seed = parse_int<std::uint64_t>(f[12], n, "seed");
        out.push_back(std::move(r));
    }
    return out;
}

void write_paths(std::ostream& os, const std::vector<tasks::TrialRecord>& records) {
    os << kPathHeader << '\n';
    for (const auto& r : records)
        for (const auto& p : r.path)
            os << r.trial << ',' << format_double(p.t) << ',' << format_double(p.x) << ',' << format_double(p.y)
               << ',' << format_double(p.yaw_deg) << '\n';
}

void read_paths(std::istream& is, std::vector<tasks::TrialRecord>& records) {
    std::string line;
    if (!getline_lf(is, line) || line != kPathHeader) throw ValidationError("line 1: missing path trace header");
    std::map<int, tasks::TrialRecord*> by_id;
    for (auto& r : records) {
        by_id[r.trial] = &r;
        r.path.clear();
    }
    std::size_t n = 1;
    while (getline_lf(is, line)) {
        ++n;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) bad(n, "expected 5 fields, got " + std::to_string(f.size()));
        const int id = parse_int<int>(f[0], n, "trial_id");
        const auto it = by_id.find(id);
        if (it == by_id.end()) bad(n, "unknown trial_id " + f[0]);
        tasks::PathSample s{parse_double(f[1], n, "t_s"), parse_double(f[2], n, "x_m"), parse_double(f[3], n, "y_m"),
                            parse_double(f[4], n, "yaw_deg")};
        auto& path = it->second->path;
        if (!path.empty() && s.t < path.back().t) bad(n, "timestamps decrease within trial " + f[0]);
        path.push_back(s);
    }
}

std::string trials_csv(const std::vector<tasks::TrialRecord>& records) {
    std::ostringstream os;
    write_trials(os, records);
    return os.str();
}

std::string paths_csv(const std::vector<tasks::TrialRecord>& records) {
    std::ostringstream os;
    write_paths(os, records);
    return os.str();
}

}  // namespace spv::trial_log
