#include "wassdrl/extremal.hpp"
#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace wassdrl;

namespace {

Dataset reg1d(std::vector<double> xs, std::vector<double> ys) {
    const auto N = static_cast<Eigen::Index>(xs.size());
    Mat X(N, 1);
    Vec y(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        X(i, 0) = xs[i];
        y[i] = ys[i];
    }
    return make_dataset(X, y, Task::Regression);
}

Dataset cls1d(std::vector<double> xs, std::vector<double> ys) {
    const auto N = static_cast<Eigen::Index>(xs.size());
    Mat X(N, 1);
    Vec y(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        X(i, 0) = xs[i];
        y[i] = ys[i];
    }
    return make_dataset(X, y, Task::Classification);
}

double reg_coupling(const RegressionProblem& prob, const WorstCaseDistribution& wc) {
    double c = 0.0;
    for (const auto& a : wc.atoms)
        c += a.mass * prob.metric.regression_cost(a.x - prob.dataset.input(a.source),
                                                  a.y - prob.dataset.y[a.source]);
    return c;
}

double cls_coupling(const ClassificationProblem& prob, const WorstCaseDistribution& wc) {
    double c = 0.0;
    for (const auto& a : wc.atoms)
        c += a.mass * prob.metric.classification_cost(a.x - prob.dataset.input(a.source),
                                                      a.y != prob.dataset.y[a.source]);
    return c;
}

void check_measure(const WorstCaseDistribution& wc, Eigen::Index N) {
    double total = 0.0;
    std::vector<double> per(static_cast<size_t>(N), 0.0);
    for (const auto& a : wc.atoms) {
        REQUIRE(a.mass >= 0.0);
        REQUIRE(a.source >= 0);
        REQUIRE(a.source < N);
        total += a.mass;
        per[static_cast<size_t>(a.source)] += a.mass;
    }
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
    for (double m : per)
        REQUIRE_THAT(m, Catch::Matchers::WithinAbs(1.0 / static_cast<double>(N), 1e-9));
}

}  // namespace

TEST_CASE("exact regression construction at zero radius") {
    auto ds = reg1d({0.2, 0.5, 0.8}, {0.4, 0.1, 0.9});
    RegressionProblem prob{ds, LossSpec::absolute(), SupportPolytope::joint_box(1, 0, 1),
                           TransportCost::joint_regression(Norm::Inf), 0.0};
    LinearHypothesis h{Vec::Constant(1, 0.6)};
    auto wc = worstcase_regression_exact(prob, h);
    REQUIRE(wc.atoms.size() == 3);
    check_measure(wc, 3);
    for (const auto& a : wc.atoms) {
        CHECK_THAT(a.x[0], Catch::Matchers::WithinAbs(ds.X(a.source, 0), 1e-9));
        CHECK_THAT(a.y, Catch::Matchers::WithinAbs(ds.y[a.source], 1e-9));
    }
    CHECK_THAT(wc.attained_value,
               Catch::Matchers::WithinAbs(
                   empirical_loss_regression(ds, LossSpec::absolute(), h), 1e-9));
    CHECK(wc.gap_bound <= 1e-9);
}

TEST_CASE("exact regression construction attains the dual value") {
    auto ds = reg1d({0.2, 0.8}, {0.7, 0.1});
    for (const auto& loss :
         {LossSpec::absolute(), LossSpec::eps_insensitive(0.05), LossSpec::pinball(0.3)}) {
        for (Norm p : {Norm::One, Norm::Inf}) {
            for (double rho : {0.05, 0.25}) {
                RegressionProblem prob{ds, loss, SupportPolytope::joint_box(1, 0, 1),
                                       TransportCost::joint_regression(p), rho};
                for (double wv : {-0.5, 0.7}) {
                    LinearHypothesis h{Vec::Constant(1, wv)};
                    auto wc = worstcase_regression_exact(prob, h);
                    const double ref = wc_expected_loss_regression(prob, h);
                    REQUIRE_THAT(wc.attained_value, Catch::Matchers::WithinAbs(ref, 1e-6));
                    REQUIRE(wc.gap_bound <= 1e-6);
                    REQUIRE(reg_coupling(prob, wc) <= rho + 1e-7);
                    check_measure(wc, 2);
                    for (const auto& a : wc.atoms)
                        REQUIRE(prob.support.contains(a.x, a.y, 1e-7));
                }
            }
        }
    }
    SECTION("separable metric") {
        RegressionProblem prob{ds, LossSpec::absolute(), SupportPolytope::joint_box(1, 0, 1),
                               TransportCost::separable_regression(Norm::Inf, 0.5), 0.1};
        LinearHypothesis h{Vec::Constant(1, 0.7)};
        auto wc = worstcase_regression_exact(prob, h);
        CHECK_THAT(wc.attained_value,
                   Catch::Matchers::WithinAbs(wc_expected_loss_regression(prob, h), 1e-6));
        CHECK(reg_coupling(prob, wc) <= 0.1 + 1e-7);
    }
    SECTION("frozen outputs never move") {
        RegressionProblem prob{ds, LossSpec::absolute(), SupportPolytope::joint_box(1, 0, 1),
                               TransportCost::separable_regression(Norm::Inf, kInf), 0.1};
        LinearHypothesis h{Vec::Constant(1, 0.7)};
        auto wc = worstcase_regression_exact(prob, h);
        CHECK_THAT(wc.attained_value,
                   Catch::Matchers::WithinAbs(wc_expected_loss_regression(prob, h), 1e-6));
        for (const auto& a : wc.atoms)
            REQUIRE_THAT(a.y, Catch::Matchers::WithinAbs(prob.dataset.y[a.source], 1e-9));
    }
}

TEST_CASE("one-sample worst case displaces the full budget") {
    auto ds = reg1d({1.0}, {0.0});
    RegressionProblem prob{ds, LossSpec::absolute(), SupportPolytope::all_space(),
                           TransportCost::joint_regression(Norm::Inf), 0.1};
    LinearHypothesis h{Vec::Constant(1, 1.0)};
    auto wc = worstcase_regression_exact(prob, h);
    REQUIRE(wc.atoms.size() == 1);
    CHECK_THAT(wc.atoms[0].x[0], Catch::Matchers::WithinAbs(1.1, 1e-7));
    CHECK_THAT(wc.atoms[0].y, Catch::Matchers::WithinAbs(-0.1, 1e-7));
    CHECK_THAT(wc.atoms[0].mass, Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK_THAT(wc.attained_value, Catch::Matchers::WithinAbs(1.2, 1e-7));
    CHECK(wc.gap_bound <= 1e-7);
}

TEST_CASE("unattained suprema surface as a gap bound") {
    auto ds = reg1d({1.0}, {1.02});
    RegressionProblem prob{ds, LossSpec::eps_insensitive(0.5), SupportPolytope::all_space(),
                           TransportCost::joint_regression(Norm::Inf), 0.1};
    LinearHypothesis h{Vec::Constant(1, 1.0)};
    auto wc = worstcase_regression_exact(prob, h);
    // within the budget every point stays inside the tube, so any discrete
    // plan earns zero; the dual value is carried by escaping mass
    CHECK(wc.attained_value == 0.0);
    CHECK_THAT(wc.gap_bound, Catch::Matchers::WithinAbs(0.2, 1e-7));
    CHECK_THAT(wc_expected_loss_regression(prob, h), Catch::Matchers::WithinAbs(0.2, 1e-12));
    CHECK(reg_coupling(prob, wc) <= 0.1 + 1e-7);
}

TEST_CASE("regression sequence construction") {
    auto ds = reg1d({0.5, -1.0, 2.0}, {0.2, 0.4, 1.8});
    SECTION("gamma one with zero radius is the empirical distribution") {
        RegressionProblem prob{ds, LossSpec::huber(0.5), SupportPolytope::all_space(),
                               TransportCost::joint_regression(Norm::Two), 0.0};
        LinearHypothesis h{Vec::Constant(1, 0.3)};
        auto wc = worstcase_regression_sequence(prob, h, 1.0);
        check_measure(wc, 3);
        for (const auto& a : wc.atoms)
            REQUIRE_THAT(a.x[0], Catch::Matchers::WithinAbs(ds.X(a.source, 0), 1e-12));
        CHECK_THAT(wc.attained_value,
                   Catch::Matchers::WithinAbs(
                       empirical_loss_regression(ds, LossSpec::huber(0.5), h), 1e-12));
    }
    SECTION("values converge to the worst case from below") {
        RegressionProblem prob{ds, LossSpec::huber(0.5), SupportPolytope::all_space(),
                               TransportCost::joint_regression(Norm::Two), 0.2};
        LinearHypothesis h{Vec::Constant(1, 0.3)};
        const double ref = wc_expected_loss_regression(prob, h);
        double prev = -kInf;
        for (double gamma : {1e-1, 1e-2, 1e-3}) {
            auto wc = worstcase_regression_sequence(prob, h, gamma);
            check_measure(wc, 3);
            REQUIRE(wc.attained_value <= ref + 1e-9);
            REQUIRE(wc.attained_value >= prev - 1e-12);
            REQUIRE_THAT(reg_coupling(prob, wc), Catch::Matchers::WithinAbs(0.2, 1e-9));
            prev = wc.attained_value;
        }
        CHECK(ref - prev <= 1e-2);
    }
    SECTION("euclidean displacement is collinear with the steep direction") {
        RegressionProblem prob{ds, LossSpec::huber(0.5), SupportPolytope::all_space(),
                               TransportCost::joint_regression(Norm::Two), 0.2};
        LinearHypothesis h{Vec::Constant(1, 0.3)};
        auto wc = worstcase_regression_sequence(prob, h, 1e-2);
        bool found = false;
        for (const auto& a : wc.atoms) {
            if (a.source != 0 || std::abs(a.x[0] - ds.X(0, 0)) < 1e-6) continue;
            found = true;
            const Vec d = concat(a.x - ds.input(0), a.y - ds.y[0]);
            const Vec u = concat(h.w, -1.0) / std::sqrt(h.w.squaredNorm() + 1.0);
            CHECK_THAT(d.dot(u), Catch::Matchers::WithinRel(d.norm(), 1e-9));
        }
        REQUIRE(found);
    }
    SECTION("asymmetric losses displace toward the steep tail") {
        RegressionProblem prob{ds, LossSpec::pinball(0.7), SupportPolytope::all_space(),
                               TransportCost::joint_regression(Norm::Two), 0.2};
        LinearHypothesis h{Vec::Constant(1, 0.3)};
        const double ref = wc_expected_loss_regression(prob, h);
        auto wc = worstcase_regression_sequence(prob, h, 1e-3);
        CHECK(wc.attained_value <= ref + 1e-9);
        CHECK(ref - wc.attained_value <= 1e-2);
    }
    SECTION("gamma validation") {
        RegressionProblem prob{ds, LossSpec::huber(0.5), SupportPolytope::all_space(),
                               TransportCost::joint_regression(Norm::Two), 0.2};
        LinearHypothesis h{Vec::Constant(1, 0.3)};
        CHECK_THROWS_AS(worstcase_regression_sequence(prob, h, 0.0), GammaOutOfRange);
        CHECK_THROWS_AS(worstcase_regression_sequence(prob, h, 1.5), GammaOutOfRange);
        RegressionProblem box = prob;
        box.support = SupportPolytope::joint_box(1, -5, 5);
        CHECK_THROWS_AS(worstcase_regression_sequence(box, h, 0.5),
                        BoundedSupportUnsupported);
    }
}

TEST_CASE("exact classification construction") {
    auto ds = cls1d({0.2, 0.8, 0.5}, {1.0, -1.0, 1.0});
    SECTION("zero radius is the empirical distribution") {
        ClassificationProblem prob{ds, LossSpec::hinge(),
                                   SupportPolytope::input_box(1, 0, 1),
                                   TransportCost::classification(Norm::Inf, 0.4), 0.0};
        LinearHypothesis h{Vec::Constant(1, 0.6)};
        auto wc = worstcase_classification_exact(prob, h);
        check_measure(wc, 3);
        for (const auto& a : wc.atoms) {
            REQUIRE(a.y == ds.y[a.source]);
            REQUIRE_THAT(a.x[0], Catch::Matchers::WithinAbs(ds.X(a.source, 0), 1e-9));
        }
        CHECK_THAT(wc.attained_value,
                   Catch::Matchers::WithinAbs(
                       empirical_loss_classification(ds, LossSpec::hinge(), h), 1e-9));
    }
    SECTION("dual value attained on box instances") {
        for (Norm p : {Norm::One, Norm::Inf}) {
            for (double kap : {0.4, kInf}) {
                ClassificationProblem prob{ds, LossSpec::hinge(),
                                           SupportPolytope::input_box(1, 0, 1),
                                           TransportCost::classification(p, kap), 0.15};
                LinearHypothesis h{Vec::Constant(1, 0.9)};
                auto wc = worstcase_classification_exact(prob, h);
                const double ref = wc_expected_loss_classification(prob, h);
                REQUIRE_THAT(wc.attained_value, Catch::Matchers::WithinAbs(ref, 1e-6));
                REQUIRE(wc.gap_bound <= 1e-6);
                REQUIRE(cls_coupling(prob, wc) <= 0.15 + 1e-7);
                check_measure(wc, 3);
                for (const auto& a : wc.atoms) {
                    REQUIRE(prob.input_support.contains(a.x, std::nullopt, 1e-7));
                    if (kap == kInf) REQUIRE(a.y == ds.y[a.source]);
                }
            }
        }
    }
    SECTION("cheap flips get bought") {
        auto one = cls1d({1.0}, {1.0});
        ClassificationProblem prob{one, LossSpec::hinge(), SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Inf, 0.5), 1.0};
        LinearHypothesis h{Vec::Constant(1, 1.0)};
        auto wc = worstcase_classification_exact(prob, h);
        CHECK_THAT(wc.attained_value, Catch::Matchers::WithinAbs(2.5, 1e-7));
        CHECK_THAT(wc_expected_loss_classification(prob, h),
                   Catch::Matchers::WithinAbs(2.5, 1e-12));
        double flipped = 0.0;
        for (const auto& a : wc.atoms)
            if (a.y != one.y[a.source]) flipped += a.mass;
        CHECK_THAT(flipped, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK(cls_coupling(prob, wc) <= 1.0 + 1e-7);
    }
    SECTION("norm and loss guards") {
        ClassificationProblem prob{ds, LossSpec::hinge(), SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Two, 0.4), 0.1};
        LinearHypothesis h{Vec::Constant(1, 0.6)};
        CHECK_THROWS_AS(worstcase_classification_exact(prob, h), UnsupportedNorm);
        ClassificationProblem sm = prob;
        sm.metric = TransportCost::classification(Norm::Inf, 0.4);
        sm.loss = LossSpec::logloss();
        CHECK_THROWS_AS(worstcase_classification_exact(sm, h), NotPWL);
    }
}

TEST_CASE("classification sequence construction") {
    auto ds = cls1d({1.0, -0.6}, {1.0, -1.0});
    LinearHypothesis h{Vec::Constant(1, 0.8)};
    SECTION("requires a finite flip cost and a valid gamma") {
        ClassificationProblem inf{ds, LossSpec::hinge(), SupportPolytope::all_space(),
                                  TransportCost::classification(Norm::Two, kInf), 0.3};
        CHECK_THROWS_AS(worstcase_classification_sequence(inf, h, 0.1), KappaInfinite);
        ClassificationProblem prob{ds, LossSpec::hinge(), SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Two, 0.7), 0.3};
        CHECK_THROWS_AS(worstcase_classification_sequence(prob, h, 0.0), GammaOutOfRange);
        CHECK_THROWS_AS(worstcase_classification_sequence(prob, h, 0.5), GammaOutOfRange);
    }
    SECTION("tiny radius stays near the empirical distribution") {
        ClassificationProblem prob{ds, LossSpec::hinge(), SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Two, 0.7), 1e-6};
        auto wc = worstcase_classification_sequence(prob, h, 1e-6);
        check_measure(wc, 2);
        CHECK_THAT(wc.attained_value,
                   Catch::Matchers::WithinAbs(
                       empirical_loss_classification(ds, LossSpec::hinge(), h), 1e-3));
    }
    SECTION("values converge to the worst case from below") {
        ClassificationProblem prob{ds, LossSpec::smooth_hinge(),
                                   SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Two, 0.7), 0.3};
        const double ref = wc_expected_loss_classification(prob, h);
        double prev = -kInf;
        for (double gamma : {1e-1, 1e-2, 1e-3}) {
            auto wc = worstcase_classification_sequence(prob, h, gamma);
            check_measure(wc, 2);
            REQUIRE(wc.attained_value <= ref + 1e-9);
            REQUIRE(wc.attained_value >= prev - 1e-12);
            REQUIRE(cls_coupling(prob, wc) <= 0.3 + 1e-7);
            prev = wc.attained_value;
        }
        CHECK(ref - prev <= 2e-2);
    }
    SECTION("expensive flips keep every label") {
        ClassificationProblem prob{ds, LossSpec::hinge(), SupportPolytope::all_space(),
                                   TransportCost::classification(Norm::Two, 50.0), 0.1};
        auto wc = worstcase_classification_sequence(prob, h, 1e-3);
        for (const auto& a : wc.atoms) REQUIRE(a.y == ds.y[a.source]);
        CHECK(cls_coupling(prob, wc) <= 0.1 + 1e-7);
    }
}
