#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "support/oracles.hpp"
#include "wd/rng.hpp"
#include "wd/synthesis.hpp"

namespace {

wd::ImageGrid random_image(int h, int w, int channels, std::uint64_t seed) {
    wd::ImageGrid img(h, w, channels);
    wd::Rng rng(seed);
    for (double& v : img.values()) v = rng.uniform();
    return img;
}

// Central finite differences at sampled coordinates.
void check_gradient(const std::function<double(const std::vector<double>&, std::vector<double>*)>& fn,
                    std::vector<double> x, int samples, std::uint64_t seed, double step,
                    double tolerance) {
    std::vector<double> grad;
    fn(x, &grad);
    REQUIRE(grad.size() == x.size());
    wd::Rng rng(seed);
    for (int s = 0; s < samples; ++s) {
        const std::size_t i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(x.size())));
        const double keep = x[i];
        x[i] = keep + step;
        const double fp = fn(x, nullptr);
        x[i] = keep - step;
        const double fm = fn(x, nullptr);
        x[i] = keep;
        const double fd = (fp - fm) / (2.0 * step);
        const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        INFO("coordinate ", i, " fd=", fd, " analytic=", grad[i]);
        CHECK(rel <= tolerance);
    }
}

wd::SynthesisConfig small_config() {
    wd::SynthesisConfig cfg;
    cfg.features.num_layers = 2;
    cfg.features.widths = {6, 8};
    cfg.features.kernel_size = 3;
    cfg.features.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("objective: zero loss and zero gradient at the reference") {
    const wd::ImageGrid ref = random_image(12, 12, 1, 3);
    const auto map = wd::constant_sigma(12, 12, 4.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.poi_mode = wd::PoiMode::grid;
    const wd::SynthesisObjective objective(ref, map, cfg);
    std::vector<double> grad;
    const double loss = objective.evaluate(ref.values(), &grad);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
    for (double g : grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("objective: single fidelity pixel is the scalar quadratic") {
    wd::ImageGrid ref(1, 1, 1);
    ref.at(0, 0, 0) = 0.3;
    const auto map = wd::constant_sigma(1, 1, 0.0);
    wd::SynthesisConfig cfg;
    cfg.features.num_layers = 1;
    cfg.features.widths = {2};
    cfg.features.kernel_size = 1;
    cfg.use_default_multipliers = false;
    cfg.multipliers.per_layer[0] = 1.0;
    cfg.multipliers.per_layer[1] = 0.0;
    cfg.multipliers.sigma_zero = 1.0;
    const wd::SynthesisObjective objective(ref, map, cfg);
    std::vector<double> grad;
    const double loss = objective.evaluate({0.8}, &grad);
    CHECK(loss == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(grad[0] == doctest::Approx(2.0 * (0.8 - 0.3)).epsilon(1e-12));
}

TEST_CASE("gradient: conv chain in isolation (all sigma zero)") {
    const wd::ImageGrid ref = random_image(10, 10, 1, 7);
    const auto map = wd::constant_sigma(10, 10, 0.0);
    const wd::SynthesisConfig cfg = small_config();
    const wd::SynthesisObjective objective(ref, map, cfg);
    check_gradient([&](const std::vector<double>& x,
                       std::vector<double>* g) { return objective.evaluate(x, g); },
                   random_image(10, 10, 1, 8).values(), 30, 17, 1e-3, 1e-4);
}

TEST_CASE("gradient: pooled moments and diagonal proxy (uniform sigma)") {
    const wd::ImageGrid ref = random_image(10, 10, 1, 9);
    const auto map = wd::constant_sigma(10, 10, 3.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.poi_mode = wd::PoiMode::grid;
    const wd::SynthesisObjective objective(ref, map, cfg);
    check_gradient([&](const std::vector<double>& x,
                       std::vector<double>* g) { return objective.evaluate(x, g); },
                   random_image(10, 10, 1, 10).values(), 30, 18, 1e-3, 1e-4);
}

TEST_CASE("gradient: mixed pinned map") {
    const wd::ImageGrid ref = random_image(12, 12, 1, 11);
    std::vector<std::uint8_t> pins(144, 0);
    pins[6 * 12 + 6] = 1;
    const auto map = wd::pinned_sigma(12, 12, pins, 6.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.poi_mode = wd::PoiMode::automatic;
    cfg.poi_random = 10;
    cfg.poi_sets = 2;
    const wd::SynthesisObjective objective(ref, map, cfg);
    check_gradient([&](const std::vector<double>& x,
                       std::vector<double>* g) { return objective.evaluate(x, g); },
                   random_image(12, 12, 1, 12).values(), 30, 19, 1e-3, 1e-4);
}

TEST_CASE("gradient: gram baseline") {
    const wd::ImageGrid ref = random_image(10, 10, 1, 13);
    std::vector<std::uint8_t> mask(100, 0);
    for (int r = 3; r < 7; ++r)
        for (int c = 3; c < 7; ++c) mask[static_cast<std::size_t>(r) * 10 + c] = 1;
    wd::FeatureStackSpec spec;
    spec.num_layers = 2;
    spec.widths = {5, 7};
    spec.seed = 21;
    const auto banks = wd::banks_for_spec(spec, 1);
    check_gradient(
        [&](const std::vector<double>& x, std::vector<double>* g) {
            return wd::baseline_loss_and_gradient(ref, mask, 0.7, banks, spec, x, g);
        },
        random_image(10, 10, 1, 14).values(), 30, 20, 1e-3, 1e-4);
}

TEST_CASE("synthesize: fidelity regime pins pixels to the reference") {
    const wd::ImageGrid ref = oracle::checker_texture(16, 4, 0.2, 31);
    const auto map = wd::constant_sigma(16, 16, 0.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.max_iterations = 300;
    auto [image, trace] = wd::synthesize(ref, map, cfg);
    CHECK(wd::mean_squared_error(image, ref) < 1e-3);
    for (std::size_t i = 1; i < trace.loss.size(); ++i)
        CHECK(trace.loss[i] <= trace.loss[i - 1] + 1e-12);
}

TEST_CASE("synthesize: bit-identical traces for identical seeds") {
    const wd::ImageGrid ref = oracle::stripes_texture(16, 4, 0.2, 32);
    const auto map = wd::constant_sigma(16, 16, 8.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.max_iterations = 25;
    cfg.poi_random = 8;
    cfg.poi_sets = 3;
    auto [img1, tr1] = wd::synthesize(ref, map, cfg);
    auto [img2, tr2] = wd::synthesize(ref, map, cfg);
    CHECK(tr1.loss == tr2.loss);
    CHECK(img1.values() == img2.values());
}

TEST_CASE("synthesize: pinned pixels converge to the reference values") {
    const wd::ImageGrid ref = oracle::blob_texture(16, 0.7, 33);
    std::vector<std::uint8_t> pins(256, 0);
    for (int r = 6; r < 10; ++r)
        for (int c = 6; c < 10; ++c) pins[static_cast<std::size_t>(r) * 16 + c] = 1;
    const auto map = wd::pinned_sigma(16, 16, pins, 16.0);
    wd::SynthesisConfig cfg = small_config();
    cfg.max_iterations = 400;
    cfg.poi_random = 12;
    cfg.poi_sets = 4;
    auto [image, trace] = wd::synthesize(ref, map, cfg);
    for (int r = 6; r < 10; ++r)
        for (int c = 6; c < 10; ++c)
            CHECK(std::abs(image.at(r, c, 0) - ref.at(r, c, 0)) <= 0.01);
}

TEST_CASE("baseline: reference init has zero loss; gram weight trades off masked MSE") {
    const wd::ImageGrid ref = oracle::stripes_texture(16, 4, 0.25, 41);
    std::vector<std::uint8_t> mask(256, 0);
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) mask[static_cast<std::size_t>(r) * 16 + c] = 1;

    wd::SynthesisConfig cfg = small_config();
    cfg.max_iterations = 200;

    // Loss at the reference itself is exactly zero.
    const auto banks = wd::banks_for_spec(cfg.features, 1);
    const double at_ref = wd::baseline_loss_and_gradient(ref, mask, 1.0, banks, cfg.features,
                                                         ref.values(), nullptr);
    CHECK(at_ref == doctest::Approx(0.0).epsilon(1e-12));

    auto [pure_mse, tr1] = wd::baseline_mse_plus_gram(ref, mask, 0.0, cfg);
    const double mse_pure = wd::mean_squared_error_masked(pure_mse, ref, mask);
    CHECK(mse_pure < 1e-3);

    auto [with_gram, tr2] = wd::baseline_mse_plus_gram(ref, mask, 50.0, cfg);
    const double mse_gram = wd::mean_squared_error_masked(with_gram, ref, mask);
    CHECK(mse_gram > mse_pure);
}

TEST_CASE("progression: sigma zero reduces to the fidelity case") {
    const wd::ImageGrid ref = oracle::checker_texture(16, 4, 0.2, 51);
    wd::SynthesisConfig cfg = small_config();
    cfg.max_iterations = 250;
    const auto entries = wd::sigma_progression(ref, {0.0}, cfg);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].pixel_mse < 1e-3);

    CHECK_THROWS_AS(wd::sigma_progression(ref, {4.0, 1.0}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(wd::sigma_progression(ref, {-1.0}, cfg), std::invalid_argument);
}
