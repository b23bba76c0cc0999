#include "doctest.h"

#include "mathrag/errors.hpp"
#include "mathrag/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mathrag;

namespace {

std::vector<float> random_unit(std::mt19937& rng, int dim) {
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(dim));
    float norm_sq = 0.0f;
    for (auto& x : v) {
        x = gauss(rng);
        norm_sq += x * x;
    }
    float inv = 1.0f / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

// Exact top-k oracle: score desc, id asc on ties.
std::vector<DenseHit> brute_force(const std::vector<std::string>& ids,
                                  const std::vector<std::vector<float>>& vecs,
                                  const std::vector<float>& query, int k) {
    std::vector<DenseHit> hits;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        float dot = 0.0f;
        for (std::size_t d = 0; d < query.size(); ++d) dot += query[d] * vecs[i][d];
        hits.push_back({ids[i], dot});
    }
    std::sort(hits.begin(), hits.end(), [](const DenseHit& a, const DenseHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (hits.size() > std::size_t(k)) hits.resize(std::size_t(k));
    return hits;
}

struct Fixture {
    std::vector<std::string> ids;
    std::vector<std::vector<float>> vecs;
    HnswIndex index;
};

Fixture build_fixture(int n, int dim, std::uint32_t data_seed, HnswParams params) {
    std::mt19937 rng(data_seed);
    Fixture f{{}, {}, HnswIndex(params)};
    for (int i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "doc_%05d", i);
        f.ids.emplace_back(buf);
        f.vecs.push_back(random_unit(rng, dim));
        f.index.add(f.ids.back(), f.vecs.back());
    }
    return f;
}

} // namespace

TEST_CASE("construction parameter validation") {
    CHECK_THROWS_AS(HnswIndex({.dim = 0}), ValidationError);
    CHECK_THROWS_AS(HnswIndex({.dim = 8, .m = 1}), ValidationError);
    CHECK_THROWS_AS(HnswIndex({.dim = 8, .m = 16, .ef_construction = 4}), ValidationError);
}

TEST_CASE("add validates dimension, norm, and id uniqueness") {
    HnswIndex index({.dim = 4, .m = 2, .ef_construction = 8});
    std::vector<float> unit = {1.0f, 0.0f, 0.0f, 0.0f};
    index.add("a", unit);
    CHECK_THROWS_AS(index.add("a", unit), ValidationError);
    CHECK_THROWS_AS(index.add("b", std::vector<float>{1.0f, 0.0f}), DimensionMismatch);
    CHECK_THROWS_AS(index.add("c", std::vector<float>{1.0f, 1.0f, 1.0f, 1.0f}), ValidationError);
    CHECK_THROWS_AS(index.add("", unit), ValidationError);
    CHECK(index.size() == 1);
}

TEST_CASE("small corpus searches are exact") {
    // ef_search at or above the corpus size guarantees the exact scan path
    HnswParams params{.dim = 16, .m = 4, .ef_construction = 16, .ef_search = 64, .seed = 42};
    auto f = build_fixture(60, 16, 1234, params);

    std::mt19937 rng(777);
    for (int trial = 0; trial < 25; ++trial) {
        auto q = random_unit(rng, 16);
        auto got = f.index.search(q, 10);
        auto want = brute_force(f.ids, f.vecs, q, 10);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].id == want[i].id);
            CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-5));
        }
    }
}

TEST_CASE("k larger than the corpus returns exactly corpus-size results") {
    HnswParams params{.dim = 8, .m = 4, .ef_construction = 16, .ef_search = 8};
    auto f = build_fixture(7, 8, 99, params);
    std::mt19937 rng(5);
    auto q = random_unit(rng, 8);
    auto got = f.index.search(q, 50);
    CHECK(got.size() == 7);
}

TEST_CASE("duplicate vectors under different ids are both returned") {
    HnswParams params{.dim = 4, .m = 2, .ef_construction = 8};
    HnswIndex index(params);
    std::vector<float> v = {0.0f, 1.0f, 0.0f, 0.0f};
    std::vector<float> w = {1.0f, 0.0f, 0.0f, 0.0f};
    index.add("dup_b", v);
    index.add("dup_a", v);
    index.add("other", w);
    auto got = index.search(v, 2);
    REQUIRE(got.size() == 2);
    // identical scores; id ascending breaks the tie
    CHECK(got[0].id == "dup_a");
    CHECK(got[1].id == "dup_b");
    CHECK(got[0].score == doctest::Approx(1.0f));
}

TEST_CASE("self-retrieval on a graph-scale index") {
    // n > ef forces the graph search path rather than the exact fallback.
    HnswParams params{.dim = 32, .m = 8, .ef_construction = 64, .ef_search = 48, .seed = 42};
    auto f = build_fixture(2000, 32, 4321, params);
    auto got = f.index.search(f.vecs[17], 1);
    REQUIRE(got.size() == 1);
    CHECK(got[0].id == "doc_00017");
    CHECK(got[0].score == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("recall@10 on random unit vectors clears 0.95") {
    HnswParams params{.dim = 64, .m = 16, .ef_construction = 200, .ef_search = 128, .seed = 42};
    const int n = 3000;
    auto f = build_fixture(n, 64, 20240818, params);

    std::mt19937 rng(31337);
    int hit = 0, total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto q = random_unit(rng, 64);
        auto got = f.index.search(q, 10);
        auto want = brute_force(f.ids, f.vecs, q, 10);
        REQUIRE(got.size() == 10);
        for (const auto& w : want) {
            total += 1;
            for (const auto& g : got) {
                if (g.id == w.id) {
                    hit += 1;
                    break;
                }
            }
        }
    }
    double recall = double(hit) / double(total);
    CHECK(recall >= 0.95);
}

TEST_CASE("identical build inputs produce identical search results") {
    HnswParams params{.dim = 16, .m = 4, .ef_construction = 32, .ef_search = 16, .seed = 42};
    auto a = build_fixture(300, 16, 55, params);
    auto b = build_fixture(300, 16, 55, params);
    CHECK(a.index == b.index);

    std::mt19937 rng(9);
    auto q = random_unit(rng, 16);
    CHECK(a.index.search(q, 20) == b.index.search(q, 20));
}

TEST_CASE("save and load round trip preserves the graph and results") {
    HnswParams params{.dim = 16, .m = 4, .ef_construction = 32, .ef_search = 16, .seed = 7};
    auto f = build_fixture(250, 16, 808, params);

    auto dir = std::filesystem::temp_directory_path() / "mathrag_hnsw_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "index.bin";
    f.index.save(path);
    HnswIndex loaded = HnswIndex::load(path);

    CHECK(loaded == f.index);
    std::mt19937 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto q = random_unit(rng, 16);
        CHECK(loaded.search(q, 15) == f.index.search(q, 15));
    }

    SUBCASE("truncated file is rejected") {
        auto content_size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, content_size / 2);
        CHECK_THROWS_AS(HnswIndex::load(path), IoError);
    }
    SUBCASE("non-index file is rejected") {
        auto bogus = dir / "bogus.bin";
        std::ofstream(bogus) << "not an index";
        CHECK_THROWS_AS(HnswIndex::load(bogus), IoError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("query dimension is checked") {
    HnswParams params{.dim = 8, .m = 4, .ef_construction = 16};
    auto f = build_fixture(10, 8, 1, params);
    std::vector<float> bad(4, 0.5f);
    CHECK_THROWS_AS(f.index.search(bad, 3), DimensionMismatch);
    CHECK_THROWS_AS(f.index.search(f.vecs[0], 0), ValidationError);
}

TEST_CASE("empty index returns no hits") {
    HnswIndex index({.dim = 4, .m = 2, .ef_construction = 8});
    std::vector<float> q = {1.0f, 0.0f, 0.0f, 0.0f};
    CHECK(index.search(q, 5).empty());
}
