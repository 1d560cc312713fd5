#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ttsvd/errors.hpp"
#include "ttsvd/shape.hpp"
#include "ttsvd/tsqr.hpp"

namespace ttsvd {

/// Per-host bandwidths (bytes/s, by access pattern) and applicable peak flop
/// rate feeding the Roofline model.
struct MachineProfile {
    std::string name = "unnamed";
    double b_load = 0, b_copy = 0, b_stream = 0, b_store = 0; // bytes/s
    double p_max = 0;                                         // flops/s

    /// Micro-benchmarked characteristics of the 14-core Skylake Gold 6132
    /// socket used as the built-in example profile.
    static MachineProfile skylake_gold_6132() {
        return MachineProfile{"skylake-gold-6132", 93e9, 70e9, 73e9, 45e9, 1009e9};
    }

    /// Expected ordering is b_store <= b_copy <= b_load; violations are
    /// reported as warnings, not errors.
    std::vector<std::string> validate() const {
        std::vector<std::string> w;
        if (!(b_load > 0 && b_copy > 0 && b_stream > 0 && b_store > 0 && p_max > 0))
            throw IoError("MachineProfile: all rates must be positive");
        if (b_store > b_copy) w.push_back("profile: b_store > b_copy is unusual");
        if (b_copy > b_load) w.push_back("profile: b_copy > b_load is unusual");
        return w;
    }
};

enum class BandwidthKind { load, copy, stream, store };

inline double bandwidth(const MachineProfile& p, BandwidthKind k) {
    switch (k) {
        case BandwidthKind::load: return p.b_load;
        case BandwidthKind::copy: return p.b_copy;
        case BandwidthKind::stream: return p.b_stream;
        case BandwidthKind::store: return p.b_store;
    }
    return p.b_stream;
}

/// Work characterization plus, after roofline(), the ideal run time and the
/// limiting resource.
struct CostEstimate {
    double n_flops = 0;
    double v_bytes = 0;
    double i_c = 0; // flops per byte on the slowest path
    double t_min = 0;
    enum class Bound { memory, compute } bound = Bound::memory;

    CostEstimate& operator+=(const CostEstimate& o) {
        n_flops += o.n_flops;
        v_bytes += o.v_bytes;
        i_c = v_bytes > 0 ? n_flops / v_bytes : 0.0;
        return *this;
    }
};

/// Roofline evaluation: compute-bound iff the compute intensity exceeds the
/// machine intensity p_max / b_s; t_min follows from the binding resource.
inline CostEstimate roofline(CostEstimate cost, const MachineProfile& prof, BandwidthKind kind) {
    const double b_s = bandwidth(prof, kind);
    cost.i_c = cost.n_flops / cost.v_bytes;
    if (cost.i_c > prof.p_max / b_s) {
        cost.bound = CostEstimate::Bound::compute;
        cost.t_min = cost.n_flops / prof.p_max;
    } else {
        cost.bound = CostEstimate::Bound::memory;
        cost.t_min = cost.v_bytes / b_s;
    }
    return cost;
}

/// Q-less TSQR work model: n_flops = (1 + 1/n_b) 2 n m^2 and a single
/// streaming read of the input, V = 8 n m bytes, giving
/// I_c = (1 + 1/n_b) m / 4. Pass n_b = infinity for the asymptotic model.
inline CostEstimate tsqr_cost(double n, double m, double n_b = std::numeric_limits<double>::infinity()) {
    CostEstimate c;
    c.n_flops = (1.0 + 1.0 / n_b) * 2.0 * n * m * m;
    c.v_bytes = 8.0 * n * m;
    c.i_c = c.n_flops / c.v_bytes;
    return c;
}

/// Fused TSMM work model: 2 n m k flops, reads 8 n m and writes 8 n k bytes,
/// I_c = m k / (4 (m + k)).
inline CostEstimate tsmm_cost(double n, double m, double k) {
    CostEstimate c;
    c.n_flops = 2.0 * n * m * k;
    c.v_bytes = 8.0 * n * (m + k);
    c.i_c = c.n_flops / c.v_bytes;
    return c;
}

/// Closed-form transfer volume bound of the full sweep for a bounding
/// reduction factor f_bar: (2 + f_bar) / (1 - f_bar) * n_bar elements.
inline double ttsvd_volume_estimate(double n_bar, double f_bar) {
    if (!(f_bar > 0.0 && f_bar < 1.0))
        throw DivergenceError("ttsvd_volume_estimate: requires 0 < f_bar < 1");
    return 8.0 * n_bar * (2.0 + f_bar) / (1.0 - f_bar);
}

/// Closed-form flop bound: 2 n_bar r_max (1/f_bar + 2/(1 - f_bar)).
/// Specializes to 36 n_bar r_max at f_bar = 1/16 and 12 n_bar r_max at 1/2.
/// Neglects the small SVD work, so it is valid for high dimension counts.
inline double ttsvd_flops_estimate(double n_bar, double r_max, double f_bar) {
    if (!(f_bar > 0.0 && f_bar < 1.0))
        throw DivergenceError("ttsvd_flops_estimate: requires 0 < f_bar < 1");
    return 2.0 * n_bar * r_max * (1.0 / f_bar + 2.0 / (1.0 - f_bar));
}

/// Reduction factor minimizing the flop bound: d/df (1/f + 2/(1-f)) = 0
/// gives f = 1/(1 + sqrt(2)) ~ 0.414.
inline double optimal_reduction_factor() {
    return 1.0 / (1.0 + std::sqrt(2.0));
}

/// Per-step dimensions and reduction factors of a sweep.
struct ReductionPlan {
    struct Step {
        index_t rows = 0, cols = 0, rank = 0;
        double f = 0;
        CostEstimate tsqr, tsmm;
    };
    std::vector<Step> steps;
    double f_bar = 0; // max over modeled steps

    CostEstimate total() const {
        CostEstimate t;
        for (const auto& s : steps) {
            t += s.tsqr;
            t += s.tsmm;
        }
        return t;
    }
};

/// Exact per-step sums of tsqr_cost + tsmm_cost over a sweep with the given
/// (possibly merged) dimensions and rank chain r_0..r_d, using the realized
/// reduction factors rather than the f_bar bound. The final step writes a
/// core, not a work matrix for a further step, so its tsmm is not modeled.
inline ReductionPlan per_step_model(const std::vector<index_t>& dims,
                                    const std::vector<index_t>& ranks,
                                    index_t l2_budget_bytes = 256 * 1024) {
    const index_t d = static_cast<index_t>(dims.size());
    if (static_cast<index_t>(ranks.size()) != d + 1)
        throw DimensionMismatch("per_step_model: ranks must have d+1 entries");
    ReductionPlan plan;
    double cur = 1.0;
    for (index_t n : dims) cur *= static_cast<double>(n);
    for (index_t i = d - 1; i >= 1; --i) {
        const index_t m = dims[static_cast<std::size_t>(i)] * ranks[static_cast<std::size_t>(i + 1)];
        const index_t k = ranks[static_cast<std::size_t>(i)];
        ReductionPlan::Step s;
        s.rows = static_cast<index_t>(cur / static_cast<double>(m));
        s.cols = m;
        s.rank = k;
        s.f = static_cast<double>(k) / static_cast<double>(m);
        const double n_b = static_cast<double>(BlockParams::for_cols(m, l2_budget_bytes).n_b);
        s.tsqr = tsqr_cost(static_cast<double>(s.rows), static_cast<double>(m), n_b);
        if (i > 1) s.tsmm = tsmm_cost(static_cast<double>(s.rows), static_cast<double>(m),
                                      static_cast<double>(k));
        plan.f_bar = std::max(plan.f_bar, s.f);
        plan.steps.push_back(s);
        cur *= s.f;
    }
    return plan;
}

/// Rank chain of a sweep over full-rank data: r_i = min(r_max, prod of
/// extents on either side). This is what random dense inputs realize.
inline std::vector<index_t> predicted_ranks(const std::vector<index_t>& dims, index_t r_max) {
    const index_t d = static_cast<index_t>(dims.size());
    std::vector<index_t> r(static_cast<std::size_t>(d + 1), 1);
    for (index_t i = 1; i < d; ++i) {
        double left = 1, right = 1;
        for (index_t l = 0; l < i; ++l) left = std::min(left * static_cast<double>(dims[static_cast<std::size_t>(l)]), 1e18);
        for (index_t l = i; l < d; ++l) right = std::min(right * static_cast<double>(dims[static_cast<std::size_t>(l)]), 1e18);
        const double cap = std::min(left, right);
        r[static_cast<std::size_t>(i)] =
            static_cast<index_t>(std::min(static_cast<double>(r_max), cap));
    }
    return r;
}

/// Flat key-value machine profile file: keys name, b_load, b_copy, b_stream,
/// b_store, p_max (SI units). '#' starts a comment.
inline MachineProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_profile: cannot open " + path);
    MachineProfile p;
    bool seen[5] = {false, false, false, false, false};
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "name") {
            ls >> p.name;
        } else if (key == "b_load") {
            ls >> p.b_load;
            seen[0] = true;
        } else if (key == "b_copy") {
            ls >> p.b_copy;
            seen[1] = true;
        } else if (key == "b_stream") {
            ls >> p.b_stream;
            seen[2] = true;
        } else if (key == "b_store") {
            ls >> p.b_store;
            seen[3] = true;
        } else if (key == "p_max") {
            ls >> p.p_max;
            seen[4] = true;
        } else {
            throw IoError("load_profile: unknown key '" + key + "'");
        }
        if (ls.fail()) throw IoError("load_profile: bad value for key '" + key + "'");
    }
    for (bool s : seen)
        if (!s) throw IoError("load_profile: missing required key in " + path);
    p.validate();
    return p;
}

} // namespace ttsvd
