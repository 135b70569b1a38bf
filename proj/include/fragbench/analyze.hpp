#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fragbench/runner.hpp"
#include "fragbench/tokenstats.hpp"

namespace fragbench {

enum class Metric { micro_f1, accuracy, entropy_bits };

std::string metric_name(Metric m);

struct CurvePoint {
    double level = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;  // sample (n-1) convention, 0 when n = 1
    std::size_t n = 0;
};

struct Curve {
    Metric metric = Metric::micro_f1;
    std::vector<CurvePoint> points;  // sorted by level ascending
};

// U-shape summary of an F1 curve. is_u_shaped requires both the drop and
// the rebound to exceed delta and the minimum to sit strictly inside the
// sweep.
struct ValleyReport {
    double f1_clean = 0.0;
    double f1_min = 0.0;
    double level_at_min = 0.0;
    double f1_full = 0.0;
    double depth = 0.0;    // f1_clean - f1_min
    double rebound = 0.0;  // f1_full - f1_min
    double delta = 0.0;
    bool is_u_shaped = false;
};

struct OffsetReport {
    double level_entropy_peak = 0.0;
    double level_f1_min = 0.0;
    double offset = 0.0;  // peak level - min level
    bool consistent_with_finding = false;  // offset < 0: entropy peaks first
};

// Drops every record whose status is not ok (the exclusion rule for
// curve averages).
std::vector<EvalRecord> filter_ok(const std::vector<EvalRecord>& records);

// Groups by level; within a level computes the metric per frag_seed
// (micro-F1 or accuracy pooled across documents within the seed), then
// mean/std across seeds. Records must be non-empty, all ok-status, and
// scored.
Curve aggregate_curve(const std::vector<EvalRecord>& records, Metric metric);

// Mean/std over documents per level.
Curve aggregate_entropy(const std::vector<EntropyPoint>& points);

// Requires levels 0 and 1 present and at least 3 levels. Ties at the
// minimum resolve to the lowest level.
ValleyReport detect_valley(const Curve& curve, double delta = 0.05);

// argmax of entropy means vs argmin of F1 means on a shared grid; ties
// resolve to the lowest level.
OffsetReport entropy_offset(const Curve& f1, const Curve& entropy);

// Writes curve_<metric>.csv per curve, curves_long.csv across all, and
// summary.json with the valley/offset reports and the delta used.
// Re-emission is byte-identical for identical inputs.
void emit_report(const std::vector<Curve>& curves,
                 const std::optional<ValleyReport>& valley,
                 const std::optional<OffsetReport>& offset,
                 const std::string& out_dir);

}  // namespace fragbench
