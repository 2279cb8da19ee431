#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gaitdex/errors.hpp"
#include "gaitdex/gait_data.hpp"
#include "oracles.hpp"

using namespace gaitdex;

namespace {

std::string header(std::size_t t) {
    std::string h = "subject_id,healthy,side,variable";
    for (std::size_t l = 0; l < t; ++l) {
        char buf[16];
        std::snprintf(buf, sizeof buf, ",t%03zu", l);
        h += buf;
    }
    return h + "\n";
}

std::string row(const std::string& id, int healthy, const char* side, const char* var, std::size_t t, double base) {
    std::string r = id + "," + std::to_string(healthy) + "," + side + "," + var;
    for (std::size_t l = 0; l < t; ++l) r += "," + std::to_string(base + static_cast<double>(l));
    return r + "\n";
}

Cohort parse(const std::string& csv) {
    std::istringstream in(csv);
    return parse_cohort(in);
}

}  // namespace

TEST(GridSpec, EndpointsAndSpacing) {
    const GridSpec g(101);
    EXPECT_EQ(g.position(0), 0.0);
    EXPECT_EQ(g.position(100), 100.0);
    for (std::size_t l = 1; l < 101; ++l) EXPECT_NEAR(g.position(l) - g.position(l - 1), 1.0, 1e-9);
    EXPECT_THROW(GridSpec(1), ArgumentError);
}

TEST(VariableId, EighteenDistinctInCanonicalOrder) {
    const auto& all = all_variables();
    ASSERT_EQ(all.size(), 18u);
    for (std::size_t i = 0; i < all.size(); ++i) {
        EXPECT_EQ(all[i].index(), i);
        EXPECT_EQ(parse_variable_label(all[i].label()), all[i]);
        if (i > 0) EXPECT_LT(all[i - 1], all[i]);
    }
    EXPECT_EQ(all[0].side, Side::left);
    EXPECT_EQ(all[9].side, Side::right);
    EXPECT_EQ(VariableId({Joint::ankle_dorsiflexion, Side::left}).display_name(),
              "LHS ankle dorsiflexion/plantarflexion");
}

TEST(VariableSet, Shapes) {
    const auto c = VariableSet::combined15();
    ASSERT_EQ(c.size(), 15u);
    int pelvis_left = 0, pelvis_right = 0;
    for (const auto& v : c.members()) {
        if (is_pelvis(v.joint)) (v.side == Side::left ? pelvis_left : pelvis_right)++;
    }
    EXPECT_EQ(pelvis_left, 3);
    EXPECT_EQ(pelvis_right, 0);
    const auto cr = VariableSet::combined15(Side::right);
    for (const auto& v : cr.members()) {
        if (is_pelvis(v.joint)) EXPECT_EQ(v.side, Side::right);
    }
    EXPECT_TRUE(std::is_sorted(c.members().begin(), c.members().end()));

    const auto l = VariableSet::leg9(Side::left);
    ASSERT_EQ(l.size(), 9u);
    for (const auto& v : l.members()) EXPECT_EQ(v.side, Side::left);
    EXPECT_EQ(VariableSet::single({Joint::pelvic_tilt, Side::left}).size(), 1u);
}

TEST(LoadCohort, ParsesRowsInOrder) {
    const std::size_t t = 5;
    const auto c = parse(header(t) + row("B", 1, "L", "knee_flexion", t, 1) + row("A", 0, "L", "knee_flexion", t, 2) +
                         row("B", 1, "R", "hip_flexion", t, 3));
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.grid().size(), t);
    EXPECT_EQ(c.subject(0).subject_id, "B");
    EXPECT_TRUE(c.subject(0).healthy);
    EXPECT_FALSE(c.subject(1).healthy);
    EXPECT_EQ(c.subject(0).curve({Joint::hip_flexion, Side::right})[4], 7.0);
}

TEST(LoadCohort, EmptyFileWithHeaderIsValid) {
    const auto c = parse(header(4));
    EXPECT_EQ(c.size(), 0u);
}

TEST(LoadCohort, Errors) {
    const std::size_t t = 4;
    EXPECT_THROW(parse("subject,healthy\n"), ParseError);
    EXPECT_THROW(parse(""), ParseError);

    auto nan_row = row("A", 1, "L", "knee_flexion", t, 0);
    nan_row.replace(nan_row.rfind(','), std::string::npos, ",nan\n");
    try {
        parse(header(t) + nan_row);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("t003"), std::string::npos) << msg;
        EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    }

    EXPECT_THROW(parse(header(t) + row("A", 1, "L", "knee_flexion", t, 0) + row("A", 1, "L", "knee_flexion", t, 0)),
                 DataError);
    auto short_row = row("A", 1, "L", "knee_flexion", t - 1, 0);
    EXPECT_THROW(parse(header(t) + short_row), DataError);
    EXPECT_THROW(parse(header(t) + row("A", 1, "L", "elbow", t, 0)), DataError);
    EXPECT_THROW(parse(header(t) + row("A", 1, "L", "knee_flexion", t, 0) + row("A", 0, "R", "knee_flexion", t, 0)),
                 DataError);
}

TEST(LoadCohort, Metadata) {
    const std::size_t t = 3;
    std::istringstream data(header(t) + row("P1", 0, "L", "knee_flexion", t, 0) + row("H1", 1, "L", "knee_flexion", t, 0));
    std::istringstream meta(
        "subject_id,hoehn_yahr,freezer,updrs_ii,updrs_iii,k_level,amputated_side\nP1,3,1,12,,NA,\nH1,,,,,,\n");
    const auto c = parse_cohort(data, &meta);
    EXPECT_EQ(c.subject(0).metadata.hoehn_yahr, 3);
    EXPECT_EQ(c.subject(0).metadata.freezer, true);
    EXPECT_EQ(c.subject(0).metadata.updrs_ii, 12);
    EXPECT_FALSE(c.subject(0).metadata.updrs_iii);
    EXPECT_FALSE(c.subject(0).metadata.k_level);
    EXPECT_TRUE(c.subject(1).metadata.empty());

    std::istringstream data2(header(t) + row("P1", 0, "L", "knee_flexion", t, 0));
    std::istringstream meta2("subject_id,hoehn_yahr,freezer,updrs_ii,updrs_iii,k_level,amputated_side\nX9,3,,,,,\n");
    EXPECT_THROW(parse_cohort(data2, &meta2), DataError);
}

TEST(SaveCohort, RoundTripsBitExactly) {
    const auto c = synth_cohort(7, 4, 3, GridSpec(21), 1.0);
    std::stringstream buf;
    save_cohort(c, buf);
    const auto back = parse_cohort(buf);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(back.subject(i).subject_id, c.subject(i).subject_id);
        EXPECT_EQ(back.subject(i).healthy, c.subject(i).healthy);
        EXPECT_EQ(back.subject(i).curves, c.subject(i).curves);
    }
    std::stringstream again;
    save_cohort(back, again);
    EXPECT_EQ(again.str(), buf.str());
}

TEST(Resample, IdentityAtSameT) {
    const auto c = synth_cohort(3, 3, 2, GridSpec(101), 1.0);
    const auto r = resample(c, 101);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(r.subject(i).curves, c.subject(i).curves);
}

TEST(Resample, HundredOneToFiftyOneTakesEverySecondSample) {
    const auto c = synth_cohort(3, 3, 2, GridSpec(101), 1.0);
    const auto r = resample(c, 51);
    EXPECT_EQ(r.grid().size(), 51u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (const auto& [v, values] : c.subject(i).curves) {
            const auto out = r.subject(i).curve(v);
            for (std::size_t l = 0; l < 51; ++l) EXPECT_EQ(out[l], values[2 * l]);
        }
    }
}

TEST(Resample, AffineCurvesStayAffine) {
    const std::size_t t = 11;
    const auto c = parse(header(t) + row("A", 1, "L", "knee_flexion", t, 0));
    for (std::size_t target : {2u, 3u, 7u, 11u, 23u, 101u}) {
        const auto r = resample(c, target);
        const auto out = r.subject(0).curve({Joint::knee_flexion, Side::left});
        for (std::size_t l = 0; l < target; ++l) {
            EXPECT_NEAR(out[l], 10.0 * static_cast<double>(l) / static_cast<double>(target - 1), 1e-12);
        }
        EXPECT_EQ(out.front(), 0.0);
        EXPECT_EQ(out.back(), 10.0);
    }
    EXPECT_THROW(resample(c, 1), ArgumentError);
}

TEST(SelectVariables, ViewMatchesParent) {
    const auto c = synth_cohort(5, 3, 2, GridSpec(31), 1.0);
    const auto view = select_variables(c, VariableSet::combined15());
    ASSERT_EQ(view.members().size(), 15u);
    for (std::size_t u = 0; u < 15; ++u) {
        const auto m = view.curve_matrix(u);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto parent = c.subject(i).curve(view.members()[u]);
            for (std::size_t l = 0; l < 31; ++l) EXPECT_EQ(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)), parent[l]);
        }
    }
    const auto stacked = view.stacked_matrix();
    EXPECT_EQ(stacked.cols(), 15 * 31);
    EXPECT_EQ(stacked(1, 31 * 2 + 4), c.subject(1).curve(view.members()[2])[4]);
}

TEST(SelectVariables, MissingVariableNamesSubject) {
    const std::size_t t = 3;
    const auto c = parse(header(t) + row("A", 1, "L", "knee_flexion", t, 0));
    try {
        select_variables(c, VariableSet::leg9(Side::left));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("A"), std::string::npos);
    }
}

TEST(Synth, DeterministicAndShaped) {
    const auto a = synth_cohort(1, 6, 4, GridSpec(101), 1.0);
    const auto b = synth_cohort(1, 6, 4, GridSpec(101), 1.0);
    ASSERT_EQ(a.size(), 10u);
    EXPECT_EQ(a.healthy_count(), 6u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.subject(i).curves, b.subject(i).curves);
        EXPECT_EQ(a.subject(i).curves.size(), 18u);
    }
    const auto c = synth_cohort(2, 6, 4, GridSpec(101), 1.0);
    EXPECT_NE(a.subject(0).curves, c.subject(0).curves);
}

TEST(Synth, ScaleZeroPatientsMatchHealthyDistribution) {
    // With no deviation, patient and healthy curves share a distribution: the
    // average distance to the healthy mean is comparable in both groups.
    const auto c = synth_cohort(11, 80, 80, GridSpec(51), 0.0);
    const VariableId knee{Joint::knee_flexion, Side::left};
    const auto mean = healthy_mean_curve(c, knee);
    double dh = 0, dp = 0;
    for (const auto& s : c.subjects()) {
        const auto v = s.curve(knee);
        double d = 0;
        for (std::size_t l = 0; l < v.size(); ++l) d += (v[l] - mean[static_cast<Eigen::Index>(l)]) * (v[l] - mean[static_cast<Eigen::Index>(l)]);
        (s.healthy ? dh : dp) += std::sqrt(d);
    }
    EXPECT_NEAR(dp / dh, 1.0, 0.2);
}

TEST(HealthyMean, MatchesHandAverage) {
    const auto c = synth_cohort(4, 5, 3, GridSpec(21), 1.0);
    const VariableId v{Joint::hip_flexion, Side::right};
    const auto mean = healthy_mean_curve(c, v);
    for (std::size_t l : {0u, 7u, 20u}) {
        std::vector<double> vals;
        for (const auto& s : c.subjects()) {
            if (s.healthy) vals.push_back(s.curve(v)[l]);
        }
        EXPECT_NEAR(mean[static_cast<Eigen::Index>(l)], oracle::mean(vals), 1e-12);
    }
}
