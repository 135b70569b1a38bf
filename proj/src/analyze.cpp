#include "fragbench/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "fragbench/errors.hpp"
#include "fragbench/score.hpp"

namespace fragbench {

using nlohmann::json;

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::micro_f1: return "micro_f1";
        case Metric::accuracy: return "accuracy";
        case Metric::entropy_bits: return "entropy_bits";
    }
    return "micro_f1";
}

std::vector<EvalRecord> filter_ok(const std::vector<EvalRecord>& records) {
    std::vector<EvalRecord> ok;
    ok.reserve(records.size());
    for (const auto& r : records)
        if (r.status == CallStatus::ok) ok.push_back(r);
    return ok;
}

namespace {

struct MeanStd {
    double mean = 0.0;
    double std_dev = 0.0;
};

MeanStd mean_and_sample_std(const std::vector<double>& values) {
    MeanStd out;
    const double n = static_cast<double>(values.size());
    for (double v : values) out.mean += v;
    out.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std_dev = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

}  // namespace

Curve aggregate_curve(const std::vector<EvalRecord>& records, Metric metric) {
    if (records.empty()) throw std::invalid_argument("aggregate_curve: no records");
    if (metric == Metric::entropy_bits)
        throw std::invalid_argument("aggregate_curve: entropy uses aggregate_entropy");

    for (const auto& r : records) {
        if (r.status != CallStatus::ok)
            throw std::invalid_argument(
                "aggregate_curve: non-ok record present; filter_ok the input first");
        if (!r.scored)
            throw std::invalid_argument("aggregate_curve: unscored record for " +
                                        r.identity());
    }

    // level -> seed -> records; metric is pooled across documents within a
    // seed, then averaged across seeds.
    std::map<double, std::map<std::uint64_t, std::vector<const EvalRecord*>>> grid;
    for (const auto& r : records) grid[r.wfr_level][r.frag_seed].push_back(&r);

    Curve curve;
    curve.metric = metric;
    for (const auto& [level, by_seed] : grid) {
        std::vector<double> per_seed;
        for (const auto& [seed, bucket] : by_seed) {
            if (metric == Metric::micro_f1) {
                std::vector<MicroCounts> counts;
                counts.reserve(bucket.size());
                for (const EvalRecord* r : bucket) counts.push_back({r->tp, r->fp, r->fn});
                per_seed.push_back(micro_f1(counts));
            } else {
                std::size_t correct = 0;
                for (const EvalRecord* r : bucket)
                    if (r->correct.value_or(false)) ++correct;
                per_seed.push_back(static_cast<double>(correct) /
                                   static_cast<double>(bucket.size()));
            }
        }
        auto [mean, std_dev] = mean_and_sample_std(per_seed);
        curve.points.push_back({level, mean, std_dev, per_seed.size()});
    }
    return curve;
}

Curve aggregate_entropy(const std::vector<EntropyPoint>& points) {
    if (points.empty()) throw std::invalid_argument("aggregate_entropy: no points");

    std::map<double, std::vector<double>> by_level;
    for (const auto& p : points) by_level[p.wfr_level].push_back(p.entropy_bits);

    Curve curve;
    curve.metric = Metric::entropy_bits;
    for (const auto& [level, values] : by_level) {
        auto [mean, std_dev] = mean_and_sample_std(values);
        curve.points.push_back({level, mean, std_dev, values.size()});
    }
    return curve;
}

namespace {

constexpr double kLevelEps = 1e-9;

const CurvePoint* find_level(const Curve& curve, double level) {
    for (const auto& p : curve.points)
        if (std::abs(p.level - level) < kLevelEps) return &p;
    return nullptr;
}

}  // namespace

ValleyReport detect_valley(const Curve& curve, double delta) {
    if (curve.points.size() < 3)
        throw std::invalid_argument("detect_valley: need at least 3 levels");
    const CurvePoint* clean = find_level(curve, 0.0);
    const CurvePoint* full = find_level(curve, 1.0);
    if (!clean || !full)
        throw std::invalid_argument("detect_valley: curve must include levels 0 and 1");

    const CurvePoint* min_point = &curve.points.front();
    for (const auto& p : curve.points)
        if (p.mean < min_point->mean) min_point = &p;  // ties keep the lowest level

    ValleyReport report;
    report.f1_clean = clean->mean;
    report.f1_min = min_point->mean;
    report.level_at_min = min_point->level;
    report.f1_full = full->mean;
    report.depth = report.f1_clean - report.f1_min;
    report.rebound = report.f1_full - report.f1_min;
    report.delta = delta;
    report.is_u_shaped = report.depth > delta && report.rebound > delta &&
                         min_point->level > kLevelEps &&
                         min_point->level < 1.0 - kLevelEps;
    return report;
}

OffsetReport entropy_offset(const Curve& f1, const Curve& entropy) {
    if (f1.points.size() != entropy.points.size())
        throw std::invalid_argument("entropy_offset: level grids differ in size");
    for (std::size_t i = 0; i < f1.points.size(); ++i)
        if (std::abs(f1.points[i].level - entropy.points[i].level) >= kLevelEps)
            throw std::invalid_argument("entropy_offset: level grids differ");

    const CurvePoint* peak = &entropy.points.front();
    for (const auto& p : entropy.points)
        if (p.mean > peak->mean) peak = &p;
    const CurvePoint* valley = &f1.points.front();
    for (const auto& p : f1.points)
        if (p.mean < valley->mean) valley = &p;

    OffsetReport report;
    report.level_entropy_peak = peak->level;
    report.level_f1_min = valley->level;
    report.offset = peak->level - valley->level;
    report.consistent_with_finding = report.offset < 0.0;
    return report;
}

namespace {

// Fixed-width float formatting keeps re-emission byte-identical.
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_curve_csv(const Curve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << "level,mean,std,n\n";
    for (const auto& p : curve.points)
        out << fmt(p.level) << ',' << fmt(p.mean) << ',' << fmt(p.std_dev) << ',' << p.n
            << '\n';
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace

void emit_report(const std::vector<Curve>& curves,
                 const std::optional<ValleyReport>& valley,
                 const std::optional<OffsetReport>& offset,
                 const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    for (const auto& curve : curves)
        write_curve_csv(curve, out_dir + "/curve_" + metric_name(curve.metric) + ".csv");

    // Long-format table for plotting.
    {
        std::string path = out_dir + "/curves_long.csv";
        std::ofstream out(path);
        if (!out) throw io_error("cannot write " + path);
        out << "metric,level,mean,std,n\n";
        for (const auto& curve : curves)
            for (const auto& p : curve.points)
                out << metric_name(curve.metric) << ',' << fmt(p.level) << ',' << fmt(p.mean)
                    << ',' << fmt(p.std_dev) << ',' << p.n << '\n';
        if (!out) throw io_error("write failed: " + path);
    }

    json summary;
    summary["metrics"] = json::array();
    for (const auto& curve : curves) summary["metrics"].push_back(metric_name(curve.metric));
    if (valley) {
        summary["valley"] = {{"f1_clean", valley->f1_clean},
                             {"f1_min", valley->f1_min},
                             {"level_at_min", valley->level_at_min},
                             {"f1_full", valley->f1_full},
                             {"depth", valley->depth},
                             {"rebound", valley->rebound},
                             {"delta", valley->delta},
                             {"is_u_shaped", valley->is_u_shaped}};
    }
    if (offset) {
        summary["entropy_offset"] = {
            {"level_entropy_peak", offset->level_entropy_peak},
            {"level_f1_min", offset->level_f1_min},
            {"offset", offset->offset},
            {"consistent_with_finding", offset->consistent_with_finding}};
    }

    std::string path = out_dir + "/summary.json";
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << summary.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace fragbench
