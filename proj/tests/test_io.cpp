#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "wd/errors.hpp"
#include "wd/features.hpp"
#include "wd/io/png_io.hpp"
#include "wd/io/wdgrid.hpp"
#include "wd/rng.hpp"

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("wd_io_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

wd::ImageGrid random_image(int h, int w, int channels, std::uint64_t seed) {
    wd::ImageGrid img(h, w, channels);
    wd::Rng rng(seed);
    for (double& v : img.values()) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("wdgrid: export/import round trip is byte-stable") {
    TempDir tmp;
    wd::FeatureStackSpec spec;
    spec.num_layers = 2;
    spec.widths = {4, 6};
    spec.seed = 77;
    const auto stack = wd::random_feature_stack(random_image(9, 7, 3, 5), spec);

    const std::string a = tmp.file("a.wdg");
    const std::string b = tmp.file("b.wdg");
    wd::io::write_stack(a, stack);
    const auto loaded = wd::io::read_stack(a);
    REQUIRE(loaded.layers.size() == stack.layers.size());
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        CHECK(loaded.layers[i].layer_id == stack.layers[i].layer_id);
        CHECK(loaded.layers[i].scale == stack.layers[i].scale);
        CHECK(loaded.layers[i].height == stack.layers[i].height);
        CHECK(loaded.layers[i].width == stack.layers[i].width);
        CHECK(loaded.layers[i].depth == stack.layers[i].depth);
    }
    wd::io::write_stack(b, loaded);
    CHECK(read_bytes(a) == read_bytes(b));  // float32 payload is stable

    // Imported values are the float32-narrowed originals.
    for (std::size_t i = 0; i < stack.layers.size(); ++i)
        for (std::size_t j = 0; j < stack.layers[i].values.size(); ++j)
            CHECK(loaded.layers[i].values[j] ==
                  static_cast<double>(static_cast<float>(stack.layers[i].values[j])));
}

TEST_CASE("wdgrid: bad magic, truncation, dims mismatch") {
    TempDir tmp;
    const std::string good = tmp.file("good.wdg");
    wd::FeatureStackSpec spec;
    spec.num_layers = 1;
    spec.widths = {2};
    spec.seed = 1;
    wd::io::write_stack(good, wd::random_feature_stack(random_image(4, 4, 1, 1), spec));

    // Bad magic.
    {
        std::string bytes = read_bytes(good);
        bytes[0] = 'X';
        const std::string bad = tmp.file("bad_magic.wdg");
        std::ofstream(bad, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(wd::io::read_stack(bad), doctest::Contains("bad magic"), wd::IoError);
    }
    // Truncated payload.
    {
        std::string bytes = read_bytes(good);
        bytes.resize(bytes.size() - 7);
        const std::string bad = tmp.file("trunc.wdg");
        std::ofstream(bad, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(wd::io::read_stack(bad), doctest::Contains("truncated"), wd::IoError);
    }
    // Scale inconsistent with dims: two layers claiming scales that cannot
    // share a base resolution.
    {
        wd::FeatureStack stack;
        wd::FeatureLayer l0;
        l0.layer_id = 0;
        l0.scale = 1;
        l0.height = 16;
        l0.width = 16;
        l0.depth = 1;
        l0.values.assign(256, 0.0);
        wd::FeatureLayer l1 = l0;
        l1.layer_id = 1;
        l1.scale = 2;
        l1.height = 5;  // ceil(16/2) = 8, not 5
        l1.width = 8;
        l1.values.assign(40, 0.0);
        stack.layers = {l0, l1};
        const std::string bad = tmp.file("mismatch.wdg");
        wd::io::write_stack(bad, stack);
        CHECK_THROWS_WITH_AS(wd::io::read_stack(bad), doctest::Contains("scale/dims mismatch"),
                             wd::IoError);
    }
    // Missing file.
    CHECK_THROWS_AS(wd::io::read_stack(tmp.file("nope.wdg")), wd::IoError);
}

TEST_CASE("png: quantized round trip, gray and rgb") {
    TempDir tmp;
    for (int channels : {1, 3}) {
        wd::ImageGrid img = random_image(11, 13, channels, 9);
        // Quantize to the 8-bit lattice so the round trip is exact.
        for (double& v : img.values()) v = std::round(v * 255.0) / 255.0;
        const std::string path = tmp.file("img" + std::to_string(channels) + ".png");
        wd::io::write_png(path, img);
        const wd::ImageGrid back = wd::io::read_png(path);
        REQUIRE(back.channels() == channels);
        REQUIRE(back.height() == 11);
        REQUIRE(back.width() == 13);
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(back.values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(wd::io::read_png(tmp.file("missing.png")), wd::IoError);
}

TEST_CASE("sigma-map grid round trip") {
    TempDir tmp;
    std::vector<double> values = {0.0, 1.5, 2.25, 4000.0, 0.5, 3.0};
    const std::string path = tmp.file("map.wdg");
    wd::io::write_single_grid(path, values, 2, 3);
    int rows = 0, cols = 0;
    const auto back = wd::io::read_single_grid(path, rows, cols);
    CHECK(rows == 2);
    CHECK(cols == 3);
    for (std::size_t i = 0; i < values.size(); ++i)
        CHECK(back[i] == static_cast<double>(static_cast<float>(values[i])));
}
