#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "snowdet/metrics.hpp"

using namespace snowdet;
using namespace snowdet::oracle;

namespace {

std::vector<LabeledOutcome> outcomes_from(const ConfusionMatrix& cm) {
    std::vector<LabeledOutcome> out;
    auto add = [&](std::int64_t n, Label truth, Label pred, const char* tag) {
        for (std::int64_t i = 0; i < n; ++i) out.push_back({std::string(tag) + std::to_string(i), truth, pred});
    };
    add(cm.tp, Label::snow, Label::snow, "tp");
    add(cm.fn, Label::snow, Label::snow_free, "fn");
    add(cm.fp, Label::snow_free, Label::snow, "fp");
    add(cm.tn, Label::snow_free, Label::snow_free, "tn");
    return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("f1 examples") {
    for (double x : {0.0, 0.1, 0.5, 0.77, 1.0}) CHECK(f1(x, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(f1(0.6, 3.0 / 11.0) == doctest::Approx(0.375).epsilon(1e-3));
    CHECK(f1(1.0, 0.0) == 0.0);
    CHECK(f1(0.0, 0.0) == 0.0);
}

TEST_CASE("f1 rejects inputs outside [0,1]") {
    CHECK_THROWS_AS(f1(-0.1, 0.5), Error);
    CHECK_THROWS_AS(f1(0.5, 1.5), Error);
    CHECK_THROWS_AS(f1(std::nan(""), 0.5), Error);
    CHECK_THROWS_AS(f_beta(0.5, 0.5, 0.0), Error);
}

TEST_CASE("Eq. 1 property suite over 1000 random (p, r)") {
    std::mt19937_64 gen(20240101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double p = u(gen);
        const double r = u(gen);
        const double f = f1(p, r);
        CHECK(f1(p, p) == doctest::Approx(p).epsilon(1e-12));
        CHECK(f <= (p + r) / 2.0 + 1e-12);
        CHECK(f1(p, 0.0) == 0.0);
        CHECK(f_beta(p, r, 1.0) == doctest::Approx(f).epsilon(1e-12));
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        CHECK(f1(r, p) == doctest::Approx(f).epsilon(1e-12));
        CHECK(f == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
    }
}

TEST_CASE("f_beta weights recall for beta > 1") {
    CHECK(f_beta(0.5, 1.0, 2.0) == doctest::Approx(5.0 * 0.5 / (4.0 * 0.5 + 1.0)));
    CHECK(f_beta(0.0, 0.0, 2.0) == 0.0);
}

TEST_CASE("Table 1: eight self-consistent rows reproduce") {
    for (const auto& row : kConsistentRows) {
        CAPTURE(row.epoch);
        CAPTURE(row.model);
        const auto cm = reconstruct(row);
        const auto rep = compute_report(outcomes_from(cm));
        CHECK(std::abs(rep.macro_f1 * 100.0 - row.f1_pct) <= kTolerancePp);
        CHECK(std::abs(rep.accuracy * 100.0 - row.acc_pct) <= kTolerancePp);
        CHECK(rounded_percent(rep.macro_f1) == doctest::Approx(row.f1_pct));
        CHECK(rounded_percent(rep.accuracy) == doctest::Approx(row.acc_pct));
        CHECK(rounded_percent(rep.fp_ratio) == doctest::Approx(row.fp_pct));
        CHECK(rounded_percent(rep.fn_ratio) == doctest::Approx(row.fn_pct));
    }
}

TEST_CASE("Table 1: epoch-15 ensemble row is internally inconsistent") {
    // FP/P 45.5% and FN/N 27.3% on 11 + 11 images force fp = 5, fn = 3,
    // which gives 63.6% accuracy and 63.3% macro-F1, not the printed figures.
    const auto cm = reconstruct(kEnsembleEpoch15);
    CHECK(cm == ConfusionMatrix{8, 5, 3, 6});
    const auto rep = report_from_confusion(cm);
    CHECK(format_percent(rep.accuracy) == "63.6%");
    CHECK(format_percent(rep.macro_f1) == "63.3%");
    CHECK(std::abs(rep.accuracy * 100.0 - kEnsembleEpoch15.acc_pct) > 5.0);
    CHECK(std::abs(rep.macro_f1 * 100.0 - kEnsembleEpoch15.f1_pct) > 5.0);
    // No confusion matrix over 11 + 11 images reproduces the printed pair of
    // ratios together with the printed accuracy.
    bool any = false;
    for (int fp = 0; fp <= kPerClass; ++fp) {
        for (int fn = 0; fn <= kPerClass; ++fn) {
            const auto r = report_from_confusion({kPerClass - fn, fp, fn, kPerClass - fp});
            if (rounded_percent(r.fp_ratio) == 45.5 && rounded_percent(r.fn_ratio) == 27.3 &&
                rounded_percent(r.accuracy) == 72.7) {
                any = true;
            }
        }
    }
    CHECK_FALSE(any);
}

TEST_CASE("resnet-50 epoch-15 snow-class F1 matches the Eq. 1 example") {
    const auto rep = report_from_confusion(reconstruct(kConsistentRows[1]));
    CHECK(rep.precision_snow == doctest::Approx(0.6));
    CHECK(rep.recall_snow == doctest::Approx(3.0 / 11.0));
    CHECK(rep.f1_snow == doctest::Approx(0.375).epsilon(1e-3));
}

TEST_CASE("compute_report agrees with per-sample counting on random sets of size <= 12") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + static_cast<int>(gen() % 12);
        std::vector<LabeledOutcome> outs;
        for (int i = 0; i < n; ++i) {
            outs.push_back({"r" + std::to_string(i), gen() % 2 ? Label::snow : Label::snow_free,
                            gen() % 2 ? Label::snow : Label::snow_free});
        }
        // Oracle: per class, count directly.
        double prec[2], rec[2], f[2];
        int correct = 0;
        std::vector<std::string> wrong;
        for (int c = 0; c < 2; ++c) {
            int pred_c = 0, true_c = 0, hit = 0;
            for (const auto& o : outs) {
                const bool p = static_cast<int>(o.predicted) == c;
                const bool t = static_cast<int>(o.truth) == c;
                pred_c += p;
                true_c += t;
                hit += p && t;
            }
            prec[c] = pred_c ? static_cast<double>(hit) / pred_c : 0.0;
            rec[c] = true_c ? static_cast<double>(hit) / true_c : 0.0;
            f[c] = prec[c] + rec[c] > 0 ? 2 * prec[c] * rec[c] / (prec[c] + rec[c]) : 0.0;
        }
        int fp = 0, fn = 0, neg = 0, pos = 0;
        for (const auto& o : outs) {
            if (o.truth == o.predicted) ++correct;
            else wrong.push_back(o.record_id);
            pos += o.truth == Label::snow;
            neg += o.truth == Label::snow_free;
            fp += o.truth == Label::snow_free && o.predicted == Label::snow;
            fn += o.truth == Label::snow && o.predicted == Label::snow_free;
        }
        const auto rep = compute_report(outs);
        CHECK(rep.accuracy == doctest::Approx(static_cast<double>(correct) / n));
        CHECK(rep.precision_snow == doctest::Approx(prec[1]));
        CHECK(rep.recall_snow == doctest::Approx(rec[1]));
        CHECK(rep.f1_snow == doctest::Approx(f[1]));
        CHECK(rep.precision_snowfree == doctest::Approx(prec[0]));
        CHECK(rep.recall_snowfree == doctest::Approx(rec[0]));
        CHECK(rep.f1_snowfree == doctest::Approx(f[0]));
        CHECK(rep.macro_f1 == doctest::Approx((f[0] + f[1]) / 2));
        CHECK(rep.fp_ratio == doctest::Approx(static_cast<double>(fp) / std::max(neg, 1)));
        CHECK(rep.fn_ratio == doctest::Approx(static_cast<double>(fn) / std::max(pos, 1)));
        CHECK(rep.misclassified_ids == wrong);
        CHECK(rep.accuracy == doctest::Approx(1.0 - static_cast<double>(fp + fn) / n));

        // Swapping labels everywhere leaves macro-F1 unchanged.
        auto swapped = outs;
        for (auto& o : swapped) {
            o.truth = o.truth == Label::snow ? Label::snow_free : Label::snow;
            o.predicted = o.predicted == Label::snow ? Label::snow_free : Label::snow;
        }
        CHECK(compute_report(swapped).macro_f1 == doctest::Approx(rep.macro_f1));
    }
}

TEST_CASE("report edge cases") {
    SUBCASE("all correct") {
        const auto rep = compute_report(outcomes_from({5, 0, 0, 5}));
        CHECK(rep.accuracy == 1.0);
        CHECK(rep.macro_f1 == 1.0);
        CHECK(rep.misclassified_ids.empty());
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(compute_report(std::vector<LabeledOutcome>{}), Error);
    }
    SUBCASE("predictions without ground truth are an error") {
        std::vector<PredictionResult> preds(1);
        CHECK_THROWS_AS(compute_report(preds), Error);
        preds[0].truth = Label::snow;
        preds[0].label = Label::snow;
        CHECK(compute_report(preds).accuracy == 1.0);
    }
    SUBCASE("negative counts are rejected") {
        CHECK_THROWS_AS(report_from_confusion({-1, 0, 0, 1}), Error);
        CHECK_THROWS_AS(report_from_confusion({0, 0, 0, 0}), Error);
    }
    SUBCASE("single-class ground truth leaves the other ratio undefined") {
        const auto r = error_ratios({3, 0, 1, 0});
        CHECK_FALSE(r.fp_ratio.has_value());
        REQUIRE(r.fn_ratio.has_value());
        CHECK(*r.fn_ratio == doctest::Approx(0.25));
        CHECK(report_from_confusion({3, 0, 1, 0}).fp_ratio == 0.0);
    }
}

TEST_CASE("percent formatting rounds half away from zero") {
    CHECK(format_percent(0.3125) == "31.3%");
    CHECK(format_percent(5.0 / 11.0) == "45.5%");
    CHECK(format_percent(1.0 / 3.0) == "33.3%");
    CHECK(format_percent(0.0) == "0.0%");
    CHECK(format_percent(1.0) == "100.0%");
    CHECK(format_percent(0.00049) == "0.0%");
    CHECK(format_percent(0.00051) == "0.1%");
    CHECK(rounded_percent(0.3125) == doctest::Approx(31.3));
}

TEST_CASE("report JSON carries stable field names") {
    const auto j = report_from_confusion({3, 1, 2, 4}).to_json();
    for (const char* key : {"confusion", "accuracy", "precision_snow", "recall_snow", "f1_snow", "precision_snowfree",
                            "recall_snowfree", "f1_snowfree", "macro_f1", "fp_ratio", "fn_ratio", "misclassified_ids"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["confusion"]["tp"] == 3);
}

}
