#pragma once

#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ttsvd/errors.hpp"
#include "ttsvd/perf_model.hpp"
#include "ttsvd/shape.hpp"
#include "ttsvd/tt_svd.hpp"

#include <nlohmann/json.hpp>

namespace ttsvd {

/// One report row: a (step, phase) sample of a run.
/// CSV schema: variant,shape,rmax,eps,phase,step,seconds,flops,bytes,rank
struct ReportRow {
    std::string variant;
    std::string shape;
    index_t rmax = 0;
    double eps = 0;
    std::string phase;
    index_t step = 0;
    double seconds = 0;
    std::uint64_t flops = 0;
    std::uint64_t bytes = 0;
    index_t rank = 0;
};

inline const char* kReportHeader = "variant,shape,rmax,eps,phase,step,seconds,flops,bytes,rank";

namespace detail {
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

/// Expand a recorded run into rows, one per step and phase (stable order:
/// tsqr, small-svd, tsmm, reorder).
inline std::vector<ReportRow> rows_from_recorder(const RunRecorder& rec, const std::string& variant,
                                                 const std::string& shape, index_t rmax, double eps,
                                                 const Counters* totals = nullptr) {
    (void)totals;
    std::vector<ReportRow> rows;
    for (const auto& s : rec.steps) {
        const std::pair<const char*, double> phases[] = {
            {"tsqr", s.t_tsqr}, {"small-svd", s.t_small_svd}, {"tsmm", s.t_tsmm}, {"reorder", s.t_reorder}};
        for (const auto& [name, secs] : phases) {
            ReportRow r;
            r.variant = variant;
            r.shape = shape;
            r.rmax = rmax;
            r.eps = eps;
            r.phase = name;
            r.step = s.step;
            r.seconds = secs;
            r.rank = s.rank;
            if (std::string(name) == "tsqr") {
                r.flops = static_cast<std::uint64_t>(
                    tsqr_cost(static_cast<double>(s.rows), static_cast<double>(s.cols),
                              static_cast<double>(BlockParams::for_cols(s.cols).n_b))
                        .n_flops);
                r.bytes = 8ull * static_cast<std::uint64_t>(s.rows) * static_cast<std::uint64_t>(s.cols);
            } else if (std::string(name) == "tsmm") {
                r.flops = 2ull * static_cast<std::uint64_t>(s.rows) * static_cast<std::uint64_t>(s.cols) *
                          static_cast<std::uint64_t>(s.rank);
                r.bytes = 8ull * static_cast<std::uint64_t>(s.rows) *
                          static_cast<std::uint64_t>(s.cols + s.rank);
            }
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

/// Write rows as CSV (header always present). Returns bytes written.
inline std::size_t emit_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
    std::ostringstream ss;
    ss << kReportHeader << '\n';
    for (const auto& r : rows) {
        ss << r.variant << ',' << r.shape << ',' << r.rmax << ','
           << detail::format_double(r.eps) << ',' << r.phase << ',' << r.step << ','
           << detail::format_double(r.seconds) << ',' << r.flops << ',' << r.bytes << ','
           << r.rank << '\n';
    }
    const std::string s = ss.str();
    out << s;
    if (!out) throw IoError("emit_csv: write failed");
    return s.size();
}

/// Write rows as a JSON array mirroring the CSV schema. Returns bytes written.
inline std::size_t emit_json(const std::vector<ReportRow>& rows, std::ostream& out) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        o["variant"] = r.variant;
        o["shape"] = r.shape;
        o["rmax"] = r.rmax;
        o["eps"] = r.eps;
        o["phase"] = r.phase;
        o["step"] = r.step;
        o["seconds"] = r.seconds;
        o["flops"] = r.flops;
        o["bytes"] = r.bytes;
        o["rank"] = r.rank;
        arr.push_back(std::move(o));
    }
    const std::string s = arr.dump(2) + "\n";
    out << s;
    if (!out) throw IoError("emit_json: write failed");
    return s.size();
}

inline std::size_t emit_report(const std::vector<ReportRow>& rows, const std::string& format,
                               std::ostream& out) {
    if (format == "csv") return emit_csv(rows, out);
    if (format == "json") return emit_json(rows, out);
    throw IoError("emit_report: unknown format '" + format + "'");
}

inline std::vector<ReportRow> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("parse_csv: empty input");
    if (line != kReportHeader) throw IoError("parse_csv: unexpected header");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        if (f.size() != 10) throw IoError("parse_csv: bad row");
        ReportRow r;
        r.variant = f[0];
        r.shape = f[1];
        r.rmax = std::stoll(f[2]);
        r.eps = std::strtod(f[3].c_str(), nullptr);
        r.phase = f[4];
        r.step = std::stoll(f[5]);
        r.seconds = std::strtod(f[6].c_str(), nullptr);
        r.flops = std::strtoull(f[7].c_str(), nullptr, 10);
        r.bytes = std::strtoull(f[8].c_str(), nullptr, 10);
        r.rank = std::stoll(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ReportRow> parse_json(std::istream& in) {
    nlohmann::json arr = nlohmann::json::parse(in);
    std::vector<ReportRow> rows;
    for (const auto& o : arr) {
        ReportRow r;
        r.variant = o.at("variant").get<std::string>();
        r.shape = o.at("shape").get<std::string>();
        r.rmax = o.at("rmax").get<index_t>();
        r.eps = o.at("eps").get<double>();
        r.phase = o.at("phase").get<std::string>();
        r.step = o.at("step").get<index_t>();
        r.seconds = o.at("seconds").get<double>();
        r.flops = o.at("flops").get<std::uint64_t>();
        r.bytes = o.at("bytes").get<std::uint64_t>();
        r.rank = o.at("rank").get<index_t>();
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace ttsvd
