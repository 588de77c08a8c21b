// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Thresholds are pinned in code; timings are wall-clock.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "wd/distortion.hpp"
#include "wd/features.hpp"
#include "wd/grid.hpp"
#include "wd/io/png_io.hpp"
#include "wd/io/wdgrid.hpp"
#include "wd/limits_lab.hpp"
#include "wd/numeric.hpp"
#include "wd/pooling.hpp"
#include "wd/rng.hpp"
#include "wd/sigma_map.hpp"
#include "wd/synthesis.hpp"

namespace {

namespace fs = std::filesystem;

struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string g_cli_path;
fs::path g_tmp;

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli_path + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

// ---- criterion 1: pooling PMF property suite -------------------------------

bool crit_pmf_axioms(std::string& detail) {
    const double t0 = now_seconds();
    const std::vector<double> grid = {0.0, 0.01, 0.1, 1.0, 10.0, 1e4};
    const auto report = wd::check_pmf_axioms(grid, [](double s) { return wd::make_tsg_pmf(s); }, 100000);
    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "elapsed=" << elapsed << "s";
    if (!report.all_pass()) os << "; " << report.to_string();
    detail = os.str();
    return report.all_pass() && elapsed < 10.0;
}

// ---- criterion 2: small-sigma limit ----------------------------------------

bool crit_fidelity_limit(std::string& detail) {
    const double t0 = now_seconds();
    const auto z = wd::Seq1D::periodic({0.0, 1.0});
    const auto zh = wd::Seq1D::periodic({1.0, 0.0});
    const std::vector<double> grid = {1.0, 0.3, 0.1, 0.03, 0.0};
    const auto table = wd::fidelity_limit_table(z, zh, 2.0, grid, 1e-3);
    bool ok = table.pass;
    for (const auto& row : table.rows)
        if (row.sigma <= 0.03 && row.sigma > 0.0 && row.abs_error > 1e-3) ok = false;
    // Exact equality at sigma = 0 (delta pooling, no limit needed).
    if (table.rows.back().value != table.rows.back().target) ok = false;
    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "err(0.03)=" << table.rows[3].abs_error << " value(0)=" << table.rows.back().value
       << " elapsed=" << elapsed << "s";
    detail = os.str();
    return ok && elapsed < 5.0;
}

// ---- criterion 3: large-sigma limit ----------------------------------------

bool crit_realism_limit(std::string& detail) {
    const double t0 = now_seconds();
    const std::vector<double> grid = {1.0, 10.0, 100.0, 1000.0, 1e4};
    const auto periodic = wd::realism_limit_table(wd::Seq1D::periodic({0.0, 0.0, 1.0}),
                                                  wd::Seq1D::periodic({1.0, 1.0, 0.0}), 1.0, grid, 1e-2);
    const bool periodic_ok = periodic.pass &&
                             std::abs(periodic.rows.back().target - 1.0 / 3.0) < 1e-12 &&
                             periodic.rows.back().abs_error <= 1e-2;

    const std::vector<double> iid_grid = {10.0, 100.0, 1000.0, 1e4};
    const auto iid = wd::realism_limit_table(wd::Seq1D::iid_uniform(3), wd::Seq1D::iid_uniform(4), 2.0,
                                             iid_grid, 2e-2);
    const bool iid_ok = iid.pass && iid.rows.back().abs_error <= 2e-2;

    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "periodic_err=" << periodic.rows.back().abs_error << " iid_err=" << iid.rows.back().abs_error
       << " elapsed=" << elapsed << "s";
    detail = os.str();
    return periodic_ok && iid_ok && elapsed < 30.0;
}

// ---- criterion 4: weighted sums match Cesaro means -------------------------

bool crit_cesaro(std::string& detail) {
    struct Case {
        const char* name;
        wd::Seq1D seq;
        double mean;
    };
    const std::vector<Case> cases = {
        {"constant", wd::Seq1D::periodic({1.0}), 1.0},
        {"alternating", wd::Seq1D::periodic({1.0, -1.0}), 0.0},
        {"finite_window", wd::Seq1D::zero_extended(std::vector<double>(21, 1.0)), 0.0},
        {"periodic_001", wd::Seq1D::periodic({0.0, 0.0, 1.0}), 1.0 / 3.0},
        {"iid_uniform", wd::Seq1D::iid_uniform(5), 0.5},
    };
    std::ostringstream os;
    bool ok = true;
    for (const auto& c : cases) {
        const double v = wd::cesaro_weighted_sum(c.seq, 1e4);
        const double err = std::abs(v - c.mean);
        os << c.name << "=" << err << " ";
        ok = ok && err < 1e-2;
    }
    detail = os.str();
    return ok;
}

// ---- criterion 5: exact 1-D transport vs LP oracle -------------------------

bool crit_transport_oracle(std::string& detail) {
    const double t0 = now_seconds();
    wd::Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto make = [&](int max_points) {
            wd::WeightedEmpirical e;
            const int n = 1 + rng.uniform_int(max_points);
            e.support.resize(static_cast<std::size_t>(n));
            e.weights.resize(static_cast<std::size_t>(n));
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                e.support[static_cast<std::size_t>(i)] = 4.0 * rng.uniform() - 2.0;
                e.weights[static_cast<std::size_t>(i)] = 0.05 + rng.uniform();
                total += e.weights[static_cast<std::size_t>(i)];
            }
            for (double& w : e.weights) w /= total;
            return e;
        };
        const auto a = make(8);
        const auto b = make(8);
        const double p = (trial % 3 == 0) ? 1.0 : ((trial % 3 == 1) ? 2.0 : 3.0);
        const double fast = wd::exact_w_p_1d(a, b, p);
        const double lp = oracle::w_p_1d_lp(a.support, a.weights, b.support, b.weights, p);
        worst = std::max(worst, std::abs(fast - lp) / std::max(1.0, std::abs(lp)));
    }
    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "max_rel_err=" << worst << " elapsed=" << elapsed << "s";
    detail = os.str();
    return worst <= 1e-9 && elapsed < 10.0;
}

// ---- criterion 6: proxy identities -----------------------------------------

bool crit_proxy_identities(std::string& detail) {
    wd::Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + rng.uniform_int(8);
        wd::PooledMoments a, b;
        a.mean.resize(static_cast<std::size_t>(d));
        a.var.resize(static_cast<std::size_t>(d));
        b.mean.resize(static_cast<std::size_t>(d));
        b.var.resize(static_cast<std::size_t>(d));
        std::vector<double> ca(static_cast<std::size_t>(d) * d, 0.0), cb(ca);
        for (int i = 0; i < d; ++i) {
            a.mean[static_cast<std::size_t>(i)] = 4 * rng.uniform() - 2;
            b.mean[static_cast<std::size_t>(i)] = 4 * rng.uniform() - 2;
            a.var[static_cast<std::size_t>(i)] = 3 * rng.uniform();
            b.var[static_cast<std::size_t>(i)] = 3 * rng.uniform();
            ca[static_cast<std::size_t>(i) * d + i] = a.var[static_cast<std::size_t>(i)];
            cb[static_cast<std::size_t>(i) * d + i] = b.var[static_cast<std::size_t>(i)];
        }
        worst = std::max(worst, std::abs(wd::bures_w2(a.mean, ca, b.mean, cb) -
                                         wd::gaussianized_diag_w2(a, b)));
        if (trial == 0) {
            if (wd::bures_w2(a.mean, ca, a.mean, ca) > 1e-12) return false;
            if (wd::gaussianized_diag_w2(a, a) != 0.0) return false;
        }
    }
    std::ostringstream os;
    os << "max_abs_gap=" << worst;
    detail = os.str();
    return worst <= 1e-10;
}

// ---- criterion 7: full-pipeline gradient check ------------------------------

bool crit_gradient(std::string& detail) {
    wd::ImageGrid ref(16, 16, 1);
    {
        wd::Rng rng(404);
        for (double& v : ref.values()) v = rng.uniform();
    }
    std::vector<std::uint8_t> pins(256, 0);
    pins[8 * 16 + 8] = 1;
    const auto map = wd::pinned_sigma(16, 16, pins, 16.0);

    wd::SynthesisConfig cfg;
    cfg.features.num_layers = 2;
    cfg.features.widths = {6, 8};
    cfg.features.kernel_size = 3;
    cfg.features.seed = 5;
    cfg.poi_mode = wd::PoiMode::automatic;
    cfg.poi_random = 12;
    cfg.poi_sets = 2;
    const wd::SynthesisObjective objective(ref, map, cfg);

    std::vector<double> x;
    {
        wd::Rng rng(405);
        x.resize(ref.size());
        for (double& v : x) v = rng.uniform();
    }
    std::vector<double> grad;
    objective.evaluate(x, &grad);

    wd::Rng rng(406);
    const double step = 1e-3;
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
        const std::size_t i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(x.size())));
        const double keep = x[i];
        x[i] = keep + step;
        const double fp = objective.evaluate(x, nullptr);
        x[i] = keep - step;
        const double fm = objective.evaluate(x, nullptr);
        x[i] = keep;
        const double fd = (fp - fm) / (2.0 * step);
        const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, rel);
    }
    std::ostringstream os;
    os << "max_rel_err=" << worst;
    detail = os.str();
    return worst <= 1e-4;
}

// ---- criteria 8/9: synthesis regimes ----------------------------------------

double g_fidelity_mse = -1.0;

wd::SynthesisConfig synthesis_config() {
    wd::SynthesisConfig cfg;
    cfg.features.num_layers = 2;
    cfg.features.widths = {12, 24};
    cfg.features.kernel_size = 3;
    cfg.features.seed = 9;
    cfg.init_seed = 1234;
    return cfg;
}

wd::ImageGrid acceptance_texture() { return oracle::checker_texture(64, 4, 0.35, 2718); }

bool crit_fidelity_synthesis(std::string& detail) {
    const double t0 = now_seconds();
    const wd::ImageGrid ref = acceptance_texture();
    const auto map = wd::constant_sigma(64, 64, 0.0);
    wd::SynthesisConfig cfg = synthesis_config();
    cfg.max_iterations = 1000;
    auto [image, trace] = wd::synthesize(ref, map, cfg);
    g_fidelity_mse = wd::mean_squared_error(image, ref);
    std::ostringstream os;
    os << "pixel_mse=" << g_fidelity_mse << " iterations=" << trace.loss.size() - 1
       << " elapsed=" << now_seconds() - t0 << "s";
    detail = os.str();
    return g_fidelity_mse <= 1e-3;
}

bool crit_realism_synthesis(std::string& detail) {
    const double t0 = now_seconds();
    const wd::ImageGrid ref = acceptance_texture();
    const auto map = wd::constant_sigma(64, 64, 64.0);
    wd::SynthesisConfig cfg = synthesis_config();
    cfg.max_iterations = 600;
    cfg.poi_random = 25;
    cfg.poi_sets = 8;
    auto [image, trace] = wd::synthesize(ref, map, cfg);
    const double final_loss = trace.loss.back();
    const double initial_loss = trace.loss.front();
    const double mse = wd::mean_squared_error(image, ref);

    bool ok = final_loss <= 0.05 * initial_loss;
    if (g_fidelity_mse < 0.0) return false;
    ok = ok && mse >= 10.0 * g_fidelity_mse;

    // Sigma ladder on the sparse even grid: pixel MSE must not decrease
    // beyond 10% between adjacent sigmas.
    wd::SynthesisConfig prog_cfg = synthesis_config();
    prog_cfg.max_iterations = 350;
    const auto entries = wd::sigma_progression(ref, {2.0, 8.0, 32.0, 64.0}, prog_cfg);
    std::ostringstream ladder;
    bool trend = true;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ladder << entries[i].pixel_mse << (i + 1 < entries.size() ? "," : "");
        if (i > 0 && entries[i].pixel_mse < 0.9 * entries[i - 1].pixel_mse) trend = false;
    }
    ok = ok && trend;

    std::ostringstream os;
    os << "loss_ratio=" << final_loss / initial_loss << " mse=" << mse
       << " fidelity_mse=" << g_fidelity_mse << " ladder=[" << ladder.str() << "]"
       << " elapsed=" << now_seconds() - t0 << "s";
    detail = os.str();
    return ok;
}

// ---- criterion 10: pairwise matrix structure --------------------------------

bool crit_pairwise(std::string& detail) {
    const double t0 = now_seconds();
    const int size = 64;
    std::vector<wd::ImageGrid> textures = {
        oracle::stripes_texture(size, 8, 0.3, 11),
        oracle::checker_texture(size, 4, 0.3, 22),
        oracle::blob_texture(size, 0.5, 33),
    };

    wd::SynthesisConfig cfg = synthesis_config();
    cfg.max_iterations = 350;
    cfg.poi_random = 25;
    cfg.poi_sets = 8;
    const auto map = wd::constant_sigma(size, size, static_cast<double>(size));

    std::vector<wd::ImageGrid> images;  // A, A^R, B, B^R, C, C^R
    for (const auto& tex : textures) {
        images.push_back(tex);
        auto [resynth, trace] = wd::synthesize(tex, map, cfg);
        images.push_back(resynth);
    }

    // Matrix of normalized distortions at sigma = 4000, 3x3 grid, diag proxy.
    wd::FeatureStackSpec spec = cfg.features;
    const auto banks = wd::banks_for_spec(spec, 1);
    struct Moments {
        std::vector<std::vector<wd::PooledMoments>> per_layer;
        std::vector<int> depths;
    };
    std::vector<Moments> all;
    for (const auto& img : images) {
        const auto stack = wd::feature_stack_with_banks(img, spec, banks);
        Moments m;
        for (const auto& layer : stack.layers) {
            const auto pmf = wd::make_tsg_pmf(4000.0 / layer.scale);
            std::vector<wd::PooledMoments> pts;
            for (int gi = 0; gi < 3; ++gi)
                for (int gj = 0; gj < 3; ++gj) {
                    const int r = static_cast<int>((static_cast<long long>(layer.height) * (2 * gi + 1)) / 6);
                    const int c = static_cast<int>((static_cast<long long>(layer.width) * (2 * gj + 1)) / 6);
                    pts.push_back(wd::pooled_moments(
                        layer, wd::product_kernel_2d(pmf, r, c, layer.height, layer.width)));
                }
            m.per_layer.push_back(std::move(pts));
            m.depths.push_back(layer.depth);
        }
        all.push_back(std::move(m));
    }

    const auto entry = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t li = 0; li < all[i].per_layer.size(); ++li)
            for (std::size_t pt = 0; pt < all[i].per_layer[li].size(); ++pt) {
                acc += wd::gaussianized_diag_w2(all[i].per_layer[li][pt], all[j].per_layer[li][pt]) /
                       all[i].depths[li];
                ++count;
            }
        return acc / static_cast<double>(count);
    };

    double intra = 0.0;
    int intra_n = 0;
    double inter = 0.0;
    int inter_n = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t j = 0; j < images.size(); ++j) {
            if (i == j) continue;
            const double v = entry(i, j);
            if (i / 2 == j / 2) {
                intra += v;
                ++intra_n;
            } else {
                inter += v;
                ++inter_n;
            }
        }
    intra /= intra_n;
    inter /= inter_n;

    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "mean_intra=" << intra << " mean_inter=" << inter << " elapsed=" << elapsed << "s";
    detail = os.str();
    return intra < inter && elapsed < 600.0;
}

// ---- criterion 11: diag vs sliced performance -------------------------------

bool crit_backend_speed(std::string& detail) {
    const int dims = 64, d = 128;
    wd::FeatureStack a, b;
    auto make_layer = [&](std::uint64_t seed) {
        wd::FeatureLayer l;
        l.height = dims;
        l.width = dims;
        l.depth = d;
        l.scale = 1;
        l.layer_id = 0;
        l.values.resize(static_cast<std::size_t>(dims) * dims * d);
        wd::Rng rng(seed);
        for (double& v : l.values) v = rng.uniform();
        return l;
    };
    a.layers.push_back(make_layer(1));
    b.layers.push_back(make_layer(2));

    const auto time_backend = [&](wd::Backend backend) {
        wd::DistortionParams params;
        params.backend = backend;
        params.sliced_projections = d;  // d random projections
        std::vector<double> times;
        for (int rep = 0; rep < 3; ++rep) {
            const double t0 = now_seconds();
            volatile double sink =
                wd::local_distortion(a, b, 0, dims / 2, dims / 2, static_cast<double>(dims), params);
            (void)sink;
            times.push_back(now_seconds() - t0);
        }
        std::sort(times.begin(), times.end());
        return times[1];
    };

    const double t_diag = time_backend(wd::Backend::diag);
    const double t_sliced = time_backend(wd::Backend::sliced);
    std::ostringstream os;
    os << "diag=" << t_diag << "s sliced=" << t_sliced << "s ratio=" << t_sliced / t_diag;
    detail = os.str();
    return t_sliced >= 1.5 * t_diag;
}

// ---- criterion 12: CLI determinism ------------------------------------------

bool crit_determinism(std::string& detail) {
    if (g_cli_path.empty()) {
        detail = "no --cli path provided";
        return false;
    }
    fs::create_directories(g_tmp);
    const std::string ref_png = (g_tmp / "ref.png").string();
    wd::io::write_png(ref_png, oracle::checker_texture(16, 4, 0.3, 5));

    const auto compare_reruns = [&](const std::string& args,
                                    const std::vector<std::string>& outputs) -> bool {
        std::vector<std::string> first;
        if (run_cli(args) != 0) return false;
        for (const auto& out : outputs) first.push_back(read_bytes(out));
        for (const auto& out : outputs) fs::remove(out);
        if (run_cli(args) != 0) return false;
        for (std::size_t i = 0; i < outputs.size(); ++i)
            if (read_bytes(outputs[i]) != first[i]) return false;
        return true;
    };

    const std::string map_path = (g_tmp / "map.wdg").string();
    const bool map_ok = compare_reruns(
        "sigma-map --rows 24 --cols 24 --pinned-center --edge-sigma 24 --out " + map_path +
            " --png " + (g_tmp / "map.png").string(),
        {map_path, (g_tmp / "map.png").string()});

    const std::string out_png = (g_tmp / "synth.png").string();
    const std::string trace_csv = (g_tmp / "trace.csv").string();
    const bool synth_ok = compare_reruns(
        "synthesize --ref " + ref_png + " --sigma 8 --iterations 20 --poi auto --poi-random 6 "
        "--poi-sets 2 --feature-layers 2 --feature-widths 6,8 --out " + out_png + " --trace " +
            trace_csv,
        {out_png, trace_csv});

    const std::string report = (g_tmp / "report.json").string();
    const bool dist_ok = compare_reruns(
        "distortion --ref " + ref_png + " --rec " + out_png +
            " --sigma 8 --poi grid --feature-layers 2 --feature-widths 6,8 --out " + report,
        {report});

    const std::string stack_path = (g_tmp / "stack.wdg").string();
    const bool export_ok = compare_reruns(
        "export-features --image " + ref_png + " --feature-layers 2 --feature-widths 6,8 --out " +
            stack_path,
        {stack_path});

    std::ostringstream os;
    os << "sigma-map=" << (map_ok ? "ok" : "DIFF") << " synthesize=" << (synth_ok ? "ok" : "DIFF")
       << " distortion=" << (dist_ok ? "ok" : "DIFF") << " export=" << (export_ok ? "ok" : "DIFF");
    detail = os.str();
    return map_ok && synth_ok && dist_ok && export_ok;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--cli") g_cli_path = argv[i + 1];
        if (flag == "--tmp") g_tmp = argv[i + 1];
    }
    if (g_tmp.empty()) g_tmp = fs::temp_directory_path() / "wd_acceptance";

    const std::vector<Criterion> criteria = {
        {1, "pooling pmf property suite", crit_pmf_axioms},
        {2, "small-sigma fidelity limit", crit_fidelity_limit},
        {3, "large-sigma realism limit", crit_realism_limit},
        {4, "cesaro-sum equivalence", crit_cesaro},
        {5, "exact 1-D transport vs LP oracle", crit_transport_oracle},
        {6, "bures/diag proxy identities", crit_proxy_identities},
        {7, "full-pipeline gradient check", crit_gradient},
        {8, "fidelity-regime synthesis", crit_fidelity_synthesis},
        {9, "realism-regime synthesis and sigma ladder", crit_realism_synthesis},
        {10, "pairwise matrix structure", crit_pairwise},
        {11, "diag backend speed vs sliced", crit_backend_speed},
        {12, "CLI rerun determinism", crit_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool pass = false;
        const double t0 = now_seconds();
        try {
            pass = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
            pass = false;
        }
        const double elapsed = now_seconds() - t0;
        std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", pass ? "PASS" : "FAIL", c.id,
                    c.name.c_str(), elapsed, detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures > 0) std::printf("%d criterion(s) FAILED\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
