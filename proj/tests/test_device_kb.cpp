#include <doctest.h>

#include <algorithm>
#include <set>

#include "support/fixtures.hpp"

using namespace rfamp;

TEST_CASE("grid cardinality")
{
    CHECK(generate_table(7, DeviceClass::cascode()).size() == 144);
    CHECK(generate_table(7, DeviceClass::diff_cs()).size() == 81);
}

TEST_CASE("table is deterministic and ordered widths outer")
{
    const auto a = generate_table(7, DeviceClass::cascode());
    const auto b = generate_table(7, DeviceClass::cascode());
    CHECK(a == b);
    CHECK(a[0].width == 45);
    CHECK(a[0].vbias == 300);
    CHECK(a[1].vbias == 325);
    CHECK(a[9].width == 54);
}

TEST_CASE("device formula at 90 um, 400 mV")
{
    // kappa · W · (V − Vth)², written out by hand.
    const double id = 0.9 * 90.0 * (0.400 - 0.280) * (0.400 - 0.280);
    const double gm = 2.0 * 0.9 * 90.0 * (0.400 - 0.280);
    const auto& r = find_device(fixtures::kb().table(DeviceKind::CascodeSingleEnded), 90, 400);
    CHECK(r.id == doctest::Approx(1.1664).epsilon(1e-12));
    CHECK(r.id == doctest::Approx(id).epsilon(1e-12));
    CHECK(r.gm == doctest::Approx(gm).epsilon(1e-12));
    CHECK(r.cin == doctest::Approx(99.0));
    CHECK(r.zin.size() == impedance_grid_ghz().size());

    const auto& d = find_device(fixtures::kb().table(DeviceKind::DiffCommonSource), 90, 400);
    CHECK(d.id == doctest::Approx(1.1 * 90.0 * 0.12 * 0.12).epsilon(1e-12));
}

TEST_CASE("invalid grids are rejected")
{
    DeviceClass c = DeviceClass::cascode();
    c.width_grid = {90, 45};
    CHECK_THROWS_AS(c.validate(), SchemaError);
    c.width_grid.clear();
    CHECK_THROWS_AS(c.validate(), SchemaError);
}

TEST_CASE("lookup_by_current")
{
    const auto& t = fixtures::kb().table(DeviceKind::CascodeSingleEnded);
    CHECK(lookup_by_current(t, kInf).size() == t.size());
    CHECK(lookup_by_current(t, 0.0001).empty());

    std::vector<double> ids;
    for (const auto& r : t)
        ids.push_back(r.id);
    std::nth_element(ids.begin(), ids.begin() + ids.size() / 2, ids.end());
    const double median = ids[ids.size() / 2];

    const auto got = lookup_by_current(t, median);
    std::vector<DeviceRecord> scan;
    for (const auto& r : t)
        if (r.id <= median)
            scan.push_back(r);
    REQUIRE(got.size() == scan.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(std::find(scan.begin(), scan.end(), got[i]) != scan.end());
    CHECK(std::is_sorted(got.begin(), got.end(), [](const auto& a, const auto& b) {
        return a.width != b.width ? a.width < b.width : a.vbias < b.vbias;
    }));
}

TEST_CASE("find_device requires a grid point")
{
    const auto& t = fixtures::kb().table(DeviceKind::CascodeSingleEnded);
    CHECK_NOTHROW(find_device(t, 45, 300));
    CHECK_THROWS_AS(find_device(t, 50, 300), UnknownDevice);
    CHECK_THROWS_AS(find_device(t, 45, 310), UnknownDevice);
}

TEST_CASE("allocate gives four configs for the documented split")
{
    const std::vector<double> ratios{0.4, 0.3, 0.3};
    const auto kinds = default_stage_kinds(3);
    const auto cfgs = allocate(fixtures::kb(), ratios, 30, kinds);
    CHECK(cfgs.size() == 4);
    for (const auto& c : cfgs) {
        REQUIRE(c.stages.size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(c.stages[i].id <= ratios[i] * 30 + 1e-12);
    }
}

TEST_CASE("allocate with no feasible record")
{
    const std::vector<double> ratios{1.0};
    const std::vector<DeviceKind> kinds{DeviceKind::CascodeSingleEnded};
    CHECK_THROWS_AS(allocate(fixtures::kb(), ratios, 0.01, kinds), InfeasibleBudget);
}

TEST_CASE("allocate against pair enumeration")
{
    const std::vector<double> ratios{0.5, 0.5};
    const std::vector<DeviceKind> kinds{DeviceKind::CascodeSingleEnded, DeviceKind::DiffCommonSource};
    const auto& t1 = fixtures::kb().table(kinds[0]);
    const auto& t2 = fixtures::kb().table(kinds[1]);

    // Every pair within the shares, and the width range each stage can take.
    std::set<std::pair<double, double>> w1, w2;
    std::vector<std::pair<DeviceRecord, DeviceRecord>> pairs;
    for (const auto& a : t1)
        for (const auto& b : t2)
            if (a.id <= 10.0 && b.id <= 10.0) {
                pairs.emplace_back(a, b);
                w1.insert({a.width, a.vbias});
                w2.insert({b.width, b.vbias});
            }
    REQUIRE_FALSE(pairs.empty());
    const double w1_max = std::prev(w1.end())->first, w1_min = w1.begin()->first;
    const double w2_max = std::prev(w2.end())->first, w2_min = w2.begin()->first;

    const auto cfgs = allocate(fixtures::kb(), ratios, 20, kinds);
    REQUIRE(cfgs.size() == 4);
    std::set<std::pair<double, double>> seen;
    for (const auto& c : cfgs) {
        CHECK(c.total_current() <= 20.0);
        const auto& a = c.stages[0];
        const auto& b = c.stages[1];
        CHECK(std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) { return p.first == a && p.second == b; }));
        CHECK((a.width == w1_max || a.width == w1_min));
        CHECK((b.width == w2_max || b.width == w2_min));
        // highest feasible bias at that width
        for (const auto& r : t1)
            if (r.width == a.width && r.id <= 10.0)
                CHECK(r.vbias <= a.vbias);
        for (const auto& r : t2)
            if (r.width == b.width && r.id <= 10.0)
                CHECK(r.vbias <= b.vbias);
        seen.insert({a.width, b.width});
    }
    CHECK(seen.size() == 4);
}

TEST_CASE("allocate validates ratios")
{
    const auto kinds = default_stage_kinds(3);
    const std::vector<double> bad_sum{0.5, 0.3, 0.3};
    CHECK_THROWS_AS(allocate(fixtures::kb(), bad_sum, 30, kinds), SchemaError);
    const std::vector<double> two{0.5, 0.5};
    CHECK_THROWS_AS(allocate(fixtures::kb(), two, 30, kinds), SchemaError);
}

TEST_CASE("records survive json")
{
    const auto& r = find_device(fixtures::kb().table(DeviceKind::DiffCommonSource), 63, 450);
    const nlohmann::json j = r;
    CHECK(j.get<DeviceRecord>() == r);
}
