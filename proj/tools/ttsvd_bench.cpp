// Benchmark and decomposition driver: generate inputs, run TT-SVD variants,
// time the kernel phases, compare against the Roofline cost model and emit
// machine-readable reports.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttsvd/perf_model.hpp"
#include "ttsvd/report.hpp"
#include "ttsvd/storage.hpp"
#include "ttsvd/tensor_train.hpp"
#include "ttsvd/tt_svd.hpp"

namespace {

using namespace ttsvd;

constexpr index_t kUncapped = std::numeric_limits<index_t>::max();

/// Shape grammar: "2^27" (27 dimensions of extent 2) or "4x4x2".
Shape parse_shape(const std::string& s) {
    const auto caret = s.find('^');
    if (caret != std::string::npos) {
        const index_t base = std::stoll(s.substr(0, caret));
        const index_t count = std::stoll(s.substr(caret + 1));
        if (base < 1 || count < 1 || count > 64)
            throw DimensionError("bad power-form shape: " + s);
        return Shape(std::vector<index_t>(static_cast<std::size_t>(count), base));
    }
    std::vector<index_t> dims;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto next = s.find('x', pos);
        if (next == std::string::npos) next = s.size();
        dims.push_back(std::stoll(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return Shape(dims);
}

struct Options {
    std::string shape;
    index_t rmax = 0; // 0 = uncapped
    double eps = 0.0;
    std::string variant = "tsqr";
    double f1min = 0.5;
    index_t mmin = 16;
    int threads = 0; // 0 = default
    index_t partitions = 0;
    std::uint64_t seed = 0;
    int repeats = 3;
    std::string profile_path;
    std::string format = "csv";
    std::string out_path;
    bool verify = false;
    bool keep_warmup = false;
    std::string input_path;   // load tensor instead of generating
    std::string dump_input;   // dump generated tensor
    std::string save_tt_path; // save the decomposition
    std::vector<std::string> bench_variants;
};

index_t effective_rmax(const Options& o) { return o.rmax <= 0 ? kUncapped : o.rmax; }

std::vector<DenseTensor> split_first_dim(const DenseTensor& X) {
    const auto& dims = X.shape().dims();
    if (dims.size() < 2) throw DimensionError("distributed: needs d >= 2");
    const index_t parts = dims[0];
    std::vector<index_t> sub(dims.begin() + 1, dims.end());
    std::vector<DenseTensor> slabs;
    slabs.reserve(static_cast<std::size_t>(parts));
    const index_t rest = X.total() / parts;
    for (index_t p = 0; p < parts; ++p) {
        DenseTensor slab{Shape(sub)};
        for (index_t l = 0; l < rest; ++l) slab.at_flat(l) = X.at_flat(p + parts * l);
        slabs.push_back(std::move(slab));
    }
    return slabs;
}

struct RunOutput {
    TensorTrain tt;
    RunRecorder recorder;
    Counters counters;
    double wall_seconds = 0;
};

RunOutput run_variant(const std::string& variant, const DenseTensor& X, const Options& o) {
    RunOutput out;
    ExecContext ctx;
    ctx.threads = o.threads > 0 ? o.threads : default_threads();
    ctx.counters = &out.counters;
    ctx.recorder = &out.recorder;
    TruncationSpec spec;
    spec.r_max = effective_rmax(o);
    spec.eps = o.eps;
    ThickBoundsParams tb;
    tb.m_min = o.mmin;
    tb.f1_min = o.f1min;

    const double t0 = detail::now_seconds();
    if (variant == "reference") {
        out.tt = tt_svd_reference(X, spec);
    } else if (variant == "tsqr") {
        out.tt = tt_svd_tsqr(X, spec, ctx);
    } else if (variant == "thick") {
        out.tt = tt_svd_thick_bounds(X, spec, tb, ctx);
    } else if (variant == "two-sided") {
        out.tt = tt_svd_two_sided(X, spec, ctx);
    } else if (variant == "distributed") {
        const index_t first = X.shape().dim(0);
        if (o.partitions > 0 && o.partitions != first)
            throw CLI::ValidationError("--partitions must equal the leading extent " +
                                       std::to_string(first));
        out.tt = tt_svd_distributed(split_first_dim(X), spec, ctx);
    } else {
        throw CLI::ValidationError("unknown variant '" + variant + "'");
    }
    out.wall_seconds = detail::now_seconds() - t0;
    return out;
}

std::string ranks_to_string(const std::vector<index_t>& r) {
    std::string s = "(";
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(r[i]);
    }
    return s + ")";
}

void write_rows(const std::vector<ReportRow>& rows, const Options& o) {
    if (o.out_path.empty()) return;
    std::ofstream f(o.out_path);
    if (!f) throw IoError("cannot open " + o.out_path);
    emit_report(rows, o.format, f);
}

MachineProfile profile_for(const Options& o) {
    if (o.profile_path.empty()) return MachineProfile::skylake_gold_6132();
    return load_profile(o.profile_path);
}

void print_step_table(const RunRecorder& rec) {
    std::printf("%4s %12s %8s %6s %8s  %10s %10s %10s %10s\n", "step", "rows", "cols", "rank",
                "f", "tsqr[s]", "svd[s]", "tsmm[s]", "reorder[s]");
    for (const auto& s : rec.steps)
        std::printf("%4lld %12lld %8lld %6lld %8.4f  %10.3e %10.3e %10.3e %10.3e\n",
                    static_cast<long long>(s.step), static_cast<long long>(s.rows),
                    static_cast<long long>(s.cols), static_cast<long long>(s.rank), s.f,
                    s.t_tsqr, s.t_small_svd, s.t_tsmm, s.t_reorder);
}

DenseTensor make_input(const Options& o) {
    if (!o.input_path.empty()) return load_tensor(o.input_path);
    DenseTensor X = random_tensor(parse_shape(o.shape), o.seed);
    if (!o.dump_input.empty()) dump_tensor(X, o.dump_input);
    return X;
}

int cmd_decompose(const Options& o) {
    DenseTensor X = make_input(o);
    RunOutput r = run_variant(o.variant, X, o);
    const auto ranks = r.tt.ranks();
    std::printf("variant=%s shape=%s rmax=%lld eps=%g threads=%d seed=%llu\n", o.variant.c_str(),
                X.shape().to_string().c_str(), static_cast<long long>(effective_rmax(o)), o.eps,
                o.threads > 0 ? o.threads : default_threads(),
                static_cast<unsigned long long>(o.seed));
    std::printf("ranks=%s max_rank=%lld\n", ranks_to_string(ranks).c_str(),
                static_cast<long long>(r.tt.max_rank()));
    print_step_table(r.recorder);
    std::printf("counters: flops=%llu bytes=%llu\n",
                static_cast<unsigned long long>(r.counters.flops),
                static_cast<unsigned long long>(r.counters.bytes));

    // the first step's reduction factor drives the closed-form bounds
    const double f1 = r.recorder.steps.empty() ? 1.0 : r.recorder.steps.front().f;
    const double n_bar = static_cast<double>(X.total());
    if (f1 > 0 && f1 < 1) {
        const double vol = ttsvd_volume_estimate(n_bar, f1);
        std::printf("model: f1=%g volume_estimate=%.4g bytes (%.4g elements = %.3g x n_bar)\n",
                    f1, vol, vol / 8, vol / 8 / n_bar);
        if (effective_rmax(o) != kUncapped)
            std::printf("model: flops_estimate=%.4g\n",
                        ttsvd_flops_estimate(n_bar, static_cast<double>(effective_rmax(o)), f1));
    } else {
        std::printf("model: f1=%g (no closed-form bound)\n", f1);
    }
    std::printf("wall=%.6f s\n", r.wall_seconds);

    if (!o.save_tt_path.empty()) save_tt(r.tt, o.save_tt_path);

    int rc = 0;
    if (o.verify) {
        const double err = tt_error(X, r.tt);
        std::printf("error=%.6e\n", err);
        if (effective_rmax(o) == kUncapped && err > o.eps + 1e-10) {
            std::fprintf(stderr, "verify failed: error %.3e exceeds eps %.3e\n", err, o.eps);
            rc = 1;
        }
    }
    write_rows(rows_from_recorder(r.recorder, o.variant, X.shape().to_string(), effective_rmax(o),
                                  o.eps, &r.counters),
               o);
    return rc;
}

int cmd_bench(const Options& o) {
    if (o.repeats < 2) throw CLI::ValidationError("bench requires --repeats >= 2");
    std::vector<std::string> variants = o.bench_variants;
    if (variants.empty()) variants.push_back(o.variant);
    DenseTensor X = make_input(o);

    std::vector<ReportRow> all_rows;
    std::vector<std::vector<index_t>> rank_sets;
    for (const auto& v : variants) {
        std::vector<double> walls;
        Counters counters;
        std::vector<index_t> ranks;
        for (int rep = 0; rep < o.repeats; ++rep) {
            RunOutput r = run_variant(v, X, o);
            const bool warmup = rep == 0 && !o.keep_warmup;
            if (!warmup) {
                walls.push_back(r.wall_seconds);
                counters = r.counters;
                auto rows = rows_from_recorder(r.recorder, v, X.shape().to_string(),
                                               effective_rmax(o), o.eps, &r.counters);
                all_rows.insert(all_rows.end(), rows.begin(), rows.end());
            }
            ranks = r.tt.ranks();
        }
        rank_sets.push_back(ranks);
        std::sort(walls.begin(), walls.end());
        const double wmin = walls.front();
        const double wmed = walls[walls.size() / 2];
        std::printf("bench variant=%s samples=%zu min=%.6f s median=%.6f s\n", v.c_str(),
                    walls.size(), wmin, wmed);
        std::printf("bench variant=%s achieved %.3f GByte/s, %.3f GFlop/s (counters / median)\n",
                    v.c_str(), static_cast<double>(counters.bytes) / wmed / 1e9,
                    static_cast<double>(counters.flops) / wmed / 1e9);
        std::printf("bench variant=%s ranks=%s\n", v.c_str(), ranks_to_string(ranks).c_str());
    }
    for (std::size_t i = 1; i < rank_sets.size(); ++i)
        if (rank_sets[i] != rank_sets[0])
            std::printf("note: rank sequences differ between variants\n");
    write_rows(all_rows, o);
    return 0;
}

int cmd_model(const Options& o) {
    const MachineProfile prof = profile_for(o);
    for (const auto& w : prof.validate()) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const Shape shape = parse_shape(o.shape);
    const index_t rmax = effective_rmax(o);

    std::vector<index_t> dims = shape.dims();
    if (o.variant == "thick") {
        ThickBoundsParams tb;
        tb.m_min = o.mmin;
        tb.f1_min = o.f1min;
        const auto [k, m] = choose_combined_dims(shape, tb, rmax);
        dims.assign(shape.dims().begin(), shape.dims().end() - k);
        dims.push_back(m);
        std::printf("thick-bounds: combining k=%lld trailing dims into m=%lld\n",
                    static_cast<long long>(k), static_cast<long long>(m));
    }
    const auto ranks = predicted_ranks(dims, rmax);
    const ReductionPlan plan = per_step_model(dims, ranks);

    std::printf("%4s %14s %8s %6s %8s  %14s %14s %8s %10s %8s\n", "step", "rows", "cols", "rank",
                "f", "flops", "bytes", "I_c", "t_min[s]", "bound");
    CostEstimate total;
    double t_total = 0;
    for (std::size_t j = 0; j < plan.steps.size(); ++j) {
        const auto& s = plan.steps[j];
        const CostEstimate q = roofline(s.tsqr, prof, BandwidthKind::load);
        CostEstimate m = s.tsmm;
        const bool has_tsmm = m.v_bytes > 0;
        if (has_tsmm) m = roofline(m, prof, BandwidthKind::stream);
        CostEstimate step = q;
        step += m;
        const double t = q.t_min + m.t_min;
        std::printf("%4zu %14.0f %8lld %6lld %8.4f  %14.4g %14.4g %8.3f %10.3e %s\n", j + 1,
                    static_cast<double>(s.rows), static_cast<long long>(s.cols),
                    static_cast<long long>(s.rank), s.f, step.n_flops, step.v_bytes, step.i_c, t,
                    q.bound == CostEstimate::Bound::compute ? "compute" : "memory");
        total += step;
        t_total += t;
    }
    std::printf("total: flops=%.6g bytes=%.6g (%.4g GFlop, %.4g GByte) t_min=%.4g s\n",
                total.n_flops, total.v_bytes, total.n_flops / 1e9, total.v_bytes / 1e9, t_total);
    const double n_bar = static_cast<double>(shape.total());
    if (plan.f_bar > 0 && plan.f_bar < 1) {
        std::printf("f_bar=%g bound: volume=%.6g bytes (%.4g GByte)", plan.f_bar,
                    ttsvd_volume_estimate(n_bar, plan.f_bar),
                    ttsvd_volume_estimate(n_bar, plan.f_bar) / 1e9);
        if (rmax != kUncapped)
            std::printf(" flops=%.6g (%.4g GFlop)",
                        ttsvd_flops_estimate(n_bar, static_cast<double>(rmax), plan.f_bar),
                        ttsvd_flops_estimate(n_bar, static_cast<double>(rmax), plan.f_bar) / 1e9);
        std::printf("\n");
    } else {
        std::printf("f_bar=%g: no closed-form bound\n", plan.f_bar);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-train SVD benchmark harness"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* c, bool need_shape = true) {
        auto* s = c->add_option("--shape", o.shape, "tensor shape, e.g. 2^20 or 4x4x2");
        if (need_shape) s->required();
        c->add_option("--rmax", o.rmax, "maximal TT rank (0 = uncapped)");
        c->add_option("--eps", o.eps, "relative tolerance");
        c->add_option("--variant", o.variant,
                      "reference|tsqr|thick|two-sided|distributed");
        c->add_option("--f1min", o.f1min, "thick-bounds minimal first reduction factor");
        c->add_option("--mmin", o.mmin, "thick-bounds minimal combined dimension");
        c->add_option("--threads", o.threads, "worker threads (default: TTSVD_THREADS or cores)");
        c->add_option("--partitions", o.partitions, "distributed partition count");
        c->add_option("--seed", o.seed, "random seed");
        c->add_option("--profile", o.profile_path, "machine profile file");
        c->add_option("--format", o.format, "report format: csv|json")
            ->check(CLI::IsMember({"csv", "json"}));
        c->add_option("--out", o.out_path, "report output path");
    };

    auto* dec = app.add_subcommand("decompose", "decompose a tensor and report");
    add_common(dec);
    dec->add_flag("--verify", o.verify, "reconstruct and check the error bound");
    dec->add_option("--input", o.input_path, "load tensor dump instead of generating");
    dec->add_option("--dump-input", o.dump_input, "dump the generated tensor");
    dec->add_option("--save-tt", o.save_tt_path, "save the decomposition");

    auto* ben = app.add_subcommand("bench", "repeat runs, discard warm-up, report timings");
    add_common(ben);
    ben->add_option("--repeats", o.repeats, "total runs per variant (first is warm-up)");
    ben->add_flag("--keep-warmup", o.keep_warmup, "keep the warm-up sample");
    ben->add_option("--variants", o.bench_variants, "variants to compare");

    auto* mod = app.add_subcommand("model", "print the Roofline cost model table");
    add_common(mod);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (dec->parsed()) return cmd_decompose(o);
        if (ben->parsed()) return cmd_bench(o);
        if (mod->parsed()) return cmd_model(o);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const AllocationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DegenerateDimension& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
