#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "stegnet/frontend.hpp"
#include "stegnet/jpeg.hpp"

using namespace stegnet;

namespace {

// Reference IDCT straight from the orthonormal DCT-II definition, written
// independently of the matrix-product implementation under test.
void naive_idct8(const double* d, double* s) {
    const double pi = std::acos(-1.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double acc = 0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    const double su = std::sqrt((u == 0 ? 1.0 : 2.0) / 8);
                    const double sv = std::sqrt((v == 0 ? 1.0 : 2.0) / 8);
                    acc += su * sv * d[u * 8 + v] * std::cos(pi * u * (2 * i + 1) / 16) *
                           std::cos(pi * v * (2 * j + 1) / 16);
                }
            s[i * 8 + j] = acc;
        }
}

// Reference subband projection with its own basis computation and plain
// accumulation order.
std::vector<double> naive_bank(const std::vector<double>& img, int h, int w, int n) {
    const double pi = std::acos(-1.0);
    std::vector<double> basis(static_cast<std::size_t>(n) * n);
    for (int u = 0; u < n; ++u)
        for (int j = 0; j < n; ++j)
            basis[static_cast<std::size_t>(u) * n + j] =
                std::sqrt((u == 0 ? 1.0 : 2.0) / n) * std::cos(pi * u * (2 * j + 1) / (2 * n));
    const int pb = (n - 1) / 2;
    std::vector<double> out(static_cast<std::size_t>(n) * n * h * w, 0.0);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double acc = 0;
                    for (int dy = 0; dy < n; ++dy)
                        for (int dx = 0; dx < n; ++dx) {
                            const int iy = y - pb + dy;
                            const int ix = x - pb + dx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += img[static_cast<std::size_t>(iy) * w + ix] *
                                   basis[static_cast<std::size_t>(u) * n + dy] *
                                   basis[static_cast<std::size_t>(v) * n + dx];
                        }
                    out[((static_cast<std::size_t>(u) * n + v) * h + y) * w + x] = acc;
                }
    return out;
}

JpegPlane random_plane(int w, int h, std::mt19937_64& rng, int qf = 75) {
    JpegPlane p;
    p.width = w;
    p.height = h;
    p.qtable = standard_luminance_qtable(qf);
    p.quality_factor = qf;
    p.coeffs.resize(static_cast<std::size_t>(p.block_count()) * 64);
    std::uniform_int_distribution<int> dist(-20, 20);
    for (auto& c : p.coeffs) c = static_cast<std::int16_t>(dist(rng));
    return p;
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("all-zero coefficients decompress to a constant 128 plane") {
    JpegPlane p;
    p.width = 16;
    p.height = 16;
    p.qtable.fill(7);
    p.coeffs.assign(4 * 64, 0);
    auto t = decompress_no_round(p);
    REQUIRE(t.shape() == Shape{1, 1, 16, 16});
    for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == 128.0);
}

TEST_CASE("a DC-only block decompresses to 128 + d*q/8") {
    JpegPlane p;
    p.width = 8;
    p.height = 8;
    p.qtable.fill(5);
    p.coeffs.assign(64, 0);
    p.coeffs[0] = 7;
    auto t = decompress_no_round(p);
    for (std::size_t i = 0; i < t.size(); ++i)
        REQUIRE(t[i] == Catch::Approx(128.0 + 7.0 * 5.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("decompression matches the definition-based block IDCT") {
    std::mt19937_64 rng(99);
    auto p = random_plane(24, 16, rng);
    auto t = decompress_no_round(p);
    double d[64], s[64];
    for (int by = 0; by < p.blocks_y(); ++by)
        for (int bx = 0; bx < p.blocks_x(); ++bx) {
            for (int k = 0; k < 64; ++k)
                d[k] = double(p.coeffs[static_cast<std::size_t>((by * p.blocks_x() + bx)) * 64 + k]) *
                       p.qtable[static_cast<std::size_t>(k)];
            naive_idct8(d, s);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    REQUIRE(t.at(0, 0, by * 8 + i, bx * 8 + j) ==
                            Catch::Approx(s[i * 8 + j] + 128.0).margin(1e-6));
        }
}

TEST_CASE("decompression rejects malformed block data") {
    JpegPlane p;
    p.width = 16;
    p.height = 8;
    p.qtable.fill(1);
    p.coeffs.assign(64, 0);  // should be 2 blocks
    REQUIRE_THROWS_AS(decompress_no_round(p), std::invalid_argument);
    p.coeffs.assign(2 * 64, 0);
    p.qtable[3] = 0;
    REQUIRE_THROWS_AS(decompress_no_round(p), std::invalid_argument);
}

TEST_CASE("re-quantizing a decompressed plane recovers the coefficients exactly") {
    std::mt19937_64 rng(7);
    auto p = random_plane(32, 32, rng, 95);
    auto t = decompress_no_round(p);
    auto back = quantize_plane(t, p.qtable, p.quality_factor);
    REQUIRE(back.width == p.width);
    REQUIRE(back.height == p.height);
    REQUIRE(back.coeffs == p.coeffs);
}

TEST_CASE("quality scaling of the standard luminance table") {
    auto q50 = standard_luminance_qtable(50);
    REQUIRE(q50[0] == 16);
    REQUIRE(q50[63] == 99);
    auto q75 = standard_luminance_qtable(75);
    REQUIRE(q75[0] == 8);
    REQUIRE(q75[63] == 50);
    auto q100 = standard_luminance_qtable(100);
    for (auto v : q100) REQUIRE(v == 1);
    auto q95 = standard_luminance_qtable(95);
    for (int k = 0; k < 64; ++k) REQUIRE(q95[std::size_t(k)] <= q75[std::size_t(k)]);
    REQUIRE_THROWS_AS(standard_luminance_qtable(0), std::invalid_argument);
    REQUIRE_THROWS_AS(standard_luminance_qtable(101), std::invalid_argument);
}

TEST_CASE("coefficient container round-trips byte-exactly") {
    std::mt19937_64 rng(3);
    auto p = random_plane(16, 24, rng);
    const auto path = tmp_path("stegnet_roundtrip.jcf");
    write_jcf(path, p);
    auto q = read_jcf(path);
    REQUIRE(q.width == p.width);
    REQUIRE(q.height == p.height);
    REQUIRE(q.qtable == p.qtable);
    REQUIRE(q.coeffs == p.coeffs);

    // write the same plane again: the file must be byte-identical
    const auto path2 = tmp_path("stegnet_roundtrip2.jcf");
    write_jcf(path2, q);
    auto is1 = open_in(path), is2 = open_in(path2);
    std::string a((std::istreambuf_iterator<char>(is1)), std::istreambuf_iterator<char>());
    std::string b((std::istreambuf_iterator<char>(is2)), std::istreambuf_iterator<char>());
    REQUIRE(a == b);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("container loader rejects garbage") {
    const auto path = tmp_path("stegnet_bad.jcf");
    {
        auto os = open_out(path);
        os << "not a container at all";
    }
    REQUIRE_THROWS_AS(read_jcf(path), std::runtime_error);
    {
        auto os = open_out(path);
        write_magic(os, "JCF1");
        write_u32(os, 16);
        write_u32(os, 16);
        // header truncated before the qtable
    }
    REQUIRE_THROWS_AS(read_jcf(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("bank kernels form an orthonormal family for every supported size") {
    for (int n : {2, 3, 4, 5, 8}) {
        PreprocConfig cfg;
        cfg.dct_size = n;
        auto k = dct_bank_kernels(cfg);
        const int bands = n * n;
        REQUIRE(k.shape() == Shape{bands, 1, n, n});
        for (int a = 0; a < bands; ++a)
            for (int b = 0; b < bands; ++b) {
                double dot = 0;
                for (int i = 0; i < n * n; ++i)
                    dot += k.plane(a, 0)[i] * k.plane(b, 0)[i];
                REQUIRE(dot == Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-6));
            }
    }
}

TEST_CASE("constant plane: DC band exactly 4c, AC bands exactly zero in the interior") {
    const double c = 3.25;
    Tensor<double> img = Tensor<double>::full(Shape{1, 1, 12, 12}, c);
    auto out = dct_filter_bank(img);
    const auto [pb, pa] = bank_padding(4);
    for (int band = 0; band < 16; ++band)
        for (int y = pb; y < 12 - pa; ++y)
            for (int x = pb; x < 12 - pa; ++x) {
                const double v = out.at(0, band, y, x);
                if (band == 0)
                    REQUIRE(v == 4.0 * c);  // bitwise, not approximate
                else
                    REQUIRE(v == 0.0);
            }
}

TEST_CASE("filter bank matches the definition-based projection") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-10, 10);
    for (int n : {3, 4}) {
        const int h = 14, w = 10;
        Tensor<double> img(1, 1, h, w);
        std::vector<double> flat(static_cast<std::size_t>(h) * w);
        for (std::size_t i = 0; i < flat.size(); ++i) {
            flat[i] = dist(rng);
            img[i] = flat[i];
        }
        PreprocConfig cfg;
        cfg.dct_size = n;
        auto out = dct_filter_bank(img, cfg);
        auto ref = naive_bank(flat, h, w, n);
        REQUIRE(out.shape() == Shape{1, n * n, h, w});
        for (std::size_t i = 0; i < out.size(); ++i)
            REQUIRE(out[i] == Catch::Approx(ref[i]).margin(1e-6));
    }
}

TEST_CASE("filter bank is linear before truncation") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(-5, 5);
    Tensor<double> x(1, 1, 9, 9), y(1, 1, 9, 9), mix(1, 1, 9, 9);
    const double a = 1.7, b = -0.6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = dist(rng);
        y[i] = dist(rng);
        mix[i] = a * x[i] + b * y[i];
    }
    auto fx = dct_filter_bank(x), fy = dct_filter_bank(y), fmix = dct_filter_bank(mix);
    for (std::size_t i = 0; i < fmix.size(); ++i)
        REQUIRE(fmix[i] == Catch::Approx(a * fx[i] + b * fy[i]).margin(1e-5));
}

TEST_CASE("truncation clamps magnitudes at an inclusive threshold") {
    Tensor<double> t(1, 1, 1, 5);
    t[0] = -9.5;
    t[1] = 3.2;
    t[2] = -3.2;
    t[3] = 8.0;
    t[4] = 8.0000001;
    auto out = abs_truncate(t, 8.0);
    REQUIRE(out[0] == 8.0);
    REQUIRE(out[1] == 3.2);
    REQUIRE(out[2] == 3.2);
    REQUIRE(out[3] == 8.0);
    REQUIRE(out[4] == 8.0);
    REQUIRE_THROWS_AS(abs_truncate(t, 0.0), std::invalid_argument);
}

TEST_CASE("preprocessing an all-zero plane saturates the DC band") {
    JpegPlane p;
    p.width = 64;
    p.height = 64;
    p.qtable.fill(3);
    p.coeffs.assign(static_cast<std::size_t>(p.block_count()) * 64, 0);
    auto out = preprocess(p);
    REQUIRE(out.shape() == Shape{1, 16, 64, 64});
    const auto [pb, pa] = bank_padding(4);
    for (int band = 0; band < 16; ++band)
        for (int y = pb; y < 64 - pa; ++y)
            for (int x = pb; x < 64 - pa; ++x) {
                const double v = out.at(0, band, y, x);
                if (band == 0)
                    REQUIRE(v == 8.0);  // 512 truncated, bitwise
                else
                    REQUIRE(v == 0.0);
            }
    for (std::size_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] >= 0.0);
        REQUIRE(out[i] <= 8.0);
    }
}

TEST_CASE("preprocessing output is monotone in the threshold") {
    std::mt19937_64 rng(17);
    auto p = random_plane(16, 16, rng);
    PreprocConfig lo, hi;
    lo.truncation_threshold = 4.0;
    hi.truncation_threshold = 8.0;
    auto a = preprocess(p, lo), b = preprocess(p, hi);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i] <= b[i] + 1e-12);
        REQUIRE(a[i] <= 4.0);
    }
}

TEST_CASE("band dropping flags shrink the output") {
    PreprocConfig no_dc;
    no_dc.include_dc = false;
    REQUIRE(dct_bank_kernels(no_dc).shape().n == 15);
    PreprocConfig no_hi;
    no_hi.include_highest = false;
    REQUIRE(dct_bank_kernels(no_hi).shape().n == 15);
    no_hi.include_dc = false;
    REQUIRE(dct_bank_kernels(no_hi).shape().n == 14);

    // first kernel with DC dropped equals second kernel of the full bank
    auto full = dct_bank_kernels();
    auto dropped = dct_bank_kernels(no_dc);
    for (int i = 0; i < 16; ++i) REQUIRE(dropped.plane(0, 0)[i] == full.plane(1, 0)[i]);
}

TEST_CASE("config validation rejects unsupported sizes") {
    PreprocConfig cfg;
    cfg.dct_size = 6;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.dct_size = 4;
    cfg.truncation_threshold = -1;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("float-mode preprocessing stays bounded and close to double") {
    std::mt19937_64 rng(23);
    auto p = random_plane(16, 16, rng);
    auto d = preprocess<double>(p);
    auto f = preprocess<float>(p);
    REQUIRE(f.shape() == d.shape());
    for (std::size_t i = 0; i < f.size(); ++i) {
        REQUIRE(f[i] >= 0.0f);
        REQUIRE(f[i] <= 8.0f);
        REQUIRE(double(f[i]) == Catch::Approx(d[i]).margin(1e-3));
    }
}
