#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "hgan/masks.hpp"
#include "hgan/synthdata.hpp"

using namespace hgan;

namespace {

void disk(Image& img, double cx, double cy, double r, float v)
{
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (std::hypot(x - cx, y - cy) <= r)
                img.at(x, y) = v;
}

std::vector<std::pair<double, double>> centroids(const MaskSet& m)
{
    std::vector<std::pair<double, double>> c(static_cast<std::size_t>(m.count()) + 1, {0.0, 0.0});
    const auto areas = m.areas();
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            const auto k = static_cast<std::size_t>(m.nuclei().at(x, y));
            c[k].first += x;
            c[k].second += y;
        }
    for (std::size_t k = 1; k < c.size(); ++k) {
        c[k].first /= static_cast<double>(areas[k]);
        c[k].second /= static_cast<double>(areas[k]);
    }
    return c;
}

}  // namespace

TEST_CASE("ingestion relabels contiguously")
{
    LabelImage lab(3, 2);
    lab.data = {0, 5, 9, 9, 0, 5};
    const auto m = ingest_nucleus_mask(lab);
    CHECK(m.count() == 2);
    CHECK(m.nuclei().data == std::vector<std::int32_t>{0, 1, 2, 2, 0, 1});

    lab.data = {0, 1, 2, 3, 3, 0};
    CHECK(ingest_nucleus_mask(lab).nuclei().data == lab.data);
    CHECK(ingest_nucleus_mask(lab).count() == 3);

    CHECK(ingest_nucleus_mask(LabelImage(4, 4)).count() == 0);

    lab.data[0] = -1;
    CHECK_THROWS_AS(ingest_nucleus_mask(lab), InvalidLabels);
}

TEST_CASE("non-contiguous labels are rejected by the MaskSet constructor")
{
    LabelImage lab(2, 2);
    lab.data = {0, 1, 3, 3};
    CHECK_THROWS_AS(MaskSet{lab}, InvalidLabels);
}

TEST_CASE("blob labeling")
{
    Image img(32, 32, 0.0f);
    CHECK(label_blobs(img).count() == 0);

    disk(img, 6, 6, 3, 0.8f);
    disk(img, 20, 8, 3, 0.8f);
    disk(img, 12, 24, 3, 0.8f);
    img.at(30, 30) = 0.9f;  // below min_area
    const auto m = label_blobs(img);
    CHECK(m.count() == 3);
    // Raster order of first pixel.
    CHECK(m.nuclei().at(6, 6) == 1);
    CHECK(m.nuclei().at(20, 8) == 2);
    CHECK(m.nuclei().at(12, 24) == 3);
    CHECK(m.nuclei().at(30, 30) == 0);

    Image merged(32, 32, 0.0f);
    disk(merged, 10, 10, 4, 0.8f);
    disk(merged, 15, 10, 4, 0.8f);
    CHECK(label_blobs(merged).count() == 1);

    // Diagonal neighbours are not 4-connected.
    Image diag(32, 32, 0.0f);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            diag.at(x, y) = 1.0f;
            diag.at(x + 4, y + 4) = 1.0f;
        }
    CHECK(label_blobs(diag).count() == 2);
}

TEST_CASE("blob labeling matches the synthetic placement list")
{
    SynthParams p;
    p.patch_side = 64;
    p.n_cells_min = p.n_cells_max = 3;
    p.min_gap = 4.0;
    p.background_noise_sigma = 0.0;
    p.seed = 11;
    const auto t = generate_triplet(p);
    CHECK(label_blobs(t.hoechst.pixels, 0.2, 10).count() == 3);
}

TEST_CASE("blob labeling is translation-equivariant")
{
    Image img(48, 48, 0.0f);
    disk(img, 10, 12, 3, 0.7f);
    disk(img, 25, 20, 4, 0.7f);
    Image shifted(48, 48, 0.0f);
    disk(shifted, 15, 19, 3, 0.7f);
    disk(shifted, 30, 27, 4, 0.7f);
    const auto a = centroids(label_blobs(img));
    const auto b = centroids(label_blobs(shifted));
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 1; k < a.size(); ++k) {
        CHECK(b[k].first - a[k].first == doctest::Approx(5.0));
        CHECK(b[k].second - a[k].second == doctest::Approx(7.0));
    }
}

TEST_CASE("positivity by mean intensity")
{
    Image hoechst(32, 32, 0.0f);
    disk(hoechst, 8, 8, 3, 0.8f);
    disk(hoechst, 24, 24, 3, 0.8f);
    const auto m = label_blobs(hoechst);
    REQUIRE(m.count() == 2);

    Image zeros(32, 32, 0.0f);
    CHECK(classify_positive(m, zeros, 0.3, Marker::cd3).cd3_positive().empty());

    Image ch(32, 32, 0.0f);
    disk(ch, 8, 8, 3, 0.9f);
    const auto c3 = classify_positive(m, ch, 0.5, Marker::cd3);
    CHECK(c3.cd3_positive() == std::vector<int>{1});

    CHECK_THROWS_AS(classify_positive(m, ch, 0.5, Marker::cd8), MissingPrerequisite);

    // CD8-bright nucleus 2 is CD3-negative and is dropped by the intersection.
    Image cd8(32, 32, 0.0f);
    disk(cd8, 8, 8, 3, 0.9f);
    disk(cd8, 24, 24, 3, 0.9f);
    const auto c8 = classify_positive(c3, cd8, 0.5, Marker::cd8);
    CHECK(c8.cd8_positive() == std::vector<int>{1});
    CHECK(c8.invariant_holds());
}

TEST_CASE("raising the threshold never adds positives")
{
    SynthParams p;
    p.seed = 5;
    const auto t = generate_triplet(p);
    const MaskSet base(t.truth.nuclei());
    std::size_t prev = static_cast<std::size_t>(base.count()) + 1;
    for (double th = 0.0; th <= 1.0; th += 0.05) {
        const auto m = classify_positive(base, t.cd3.pixels, th, Marker::cd3);
        CHECK(m.cd3_positive().size() <= prev);
        prev = m.cd3_positive().size();
    }
}

TEST_CASE("subset invariant survives injected violations")
{
    LabelImage lab(4, 1);
    lab.data = {1, 2, 3, 4};
    const MaskSet m(lab, {1, 2, 9}, {2, 3, 4, 0});
    CHECK(m.cd3_positive() == std::vector<int>{1, 2});
    CHECK(m.cd8_positive() == std::vector<int>{2});
    CHECK(m.invariant_holds());
    const auto n = m.with_positives(Marker::cd3, {3});
    CHECK(n.cd8_positive().empty());
    CHECK(n.invariant_holds());
}

TEST_CASE("positive masks cover exactly the positive nuclei")
{
    LabelImage lab(3, 1);
    lab.data = {1, 2, 0};
    const MaskSet m(lab, {2}, {});
    CHECK(m.positive_mask(Marker::cd3).data == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(m.nucleus_mask().data == std::vector<std::uint8_t>{1, 1, 0});
}
