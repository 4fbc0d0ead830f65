#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "svdq/errmodel.hpp"

using svdq::DecayModel;
using svdq::ErrorEstimate;
using svdq::Index;
using svdq::Matrix;
using svdq::Vector;

TEST(Lemma, ClosedFormValues) {
    EXPECT_EQ(svdq::lemma41_mse(1.0, 4.0), 1.0 / (12.0 * 256.0));
    EXPECT_EQ(svdq::lemma41_mse(0.0, 3.0), 0.0);
    EXPECT_EQ(svdq::lemma41_mse(2.0, 8.0), 4.0 / (12.0 * 65536.0));
    EXPECT_THROW(svdq::lemma41_mse(-1.0, 4.0), svdq::ConfigError);
    EXPECT_THROW(svdq::lemma41_mse(1.0, 0.5), svdq::ConfigError);
}

// The lemma describes the idealized quantizer whose 2^b cells tile the range,
// reconstructing at cell midpoints. Uniform channels at b=3 must match it.
TEST(Lemma, MonteCarloCellModel) {
    std::mt19937_64 gen(777);
    const double range = 3.0;
    const int bits = 3;
    const double cells = std::pow(2.0, bits);
    const double step = range / cells;
    const std::size_t n = 100000;
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = range * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
        double cell = std::floor(x / step);
        if (cell >= cells) {
            cell = cells - 1;
        }
        const double back = (cell + 0.5) * step;
        mse += (x - back) * (x - back);
    }
    mse /= static_cast<double>(n);
    const double want = svdq::lemma41_mse(range, bits);
    EXPECT_NEAR(mse, want, 0.05 * want);
}

TEST(DirectModel, UnitVarianceCase) {
    // frob^2 = s*d means unit per-sample channel energy: MSE is 4^{-b}
    EXPECT_EQ(svdq::direct_quant_mse(64.0 * 8.0, 64, 8, 3.0), std::pow(2.0, -6.0));
    EXPECT_THROW(svdq::direct_quant_mse(-1.0, 4, 4, 3.0), svdq::ConfigError);
    EXPECT_THROW(svdq::direct_quant_mse(1.0, 0, 4, 3.0), svdq::ConfigError);
}

TEST(FitDecay, RecoversExactExponential) {
    const double scale = 3.0;
    const double rate = 0.07;
    Vector singulars(64);
    for (Index j = 0; j < 64; ++j) {
        singulars(j) = scale * std::exp(-rate * static_cast<double>(j + 1));
    }
    const DecayModel fit = svdq::fit_decay(singulars);
    EXPECT_NEAR(fit.rate, rate, 1e-12);
    EXPECT_NEAR(fit.scale, scale, 1e-12);
    EXPECT_LT(fit.log_residual, 1e-12);
}

TEST(FitDecay, MisfitIsReportedNotHidden) {
    // power-law spectrum: the exponential fit must come back with a real residual
    Vector singulars(50);
    for (Index j = 0; j < 50; ++j) {
        singulars(j) = 1.0 / static_cast<double>(j + 1);
    }
    const DecayModel fit = svdq::fit_decay(singulars);
    EXPECT_TRUE(std::isfinite(fit.rate));
    EXPECT_GT(fit.log_residual, 0.01);
}

TEST(FitDecay, DegenerateSpectraRejected) {
    EXPECT_THROW(svdq::fit_decay(Vector::Zero(8)), svdq::NumericError);
    Vector one(8);
    one.setZero();
    one(0) = 5.0;
    EXPECT_THROW(svdq::fit_decay(one), svdq::NumericError);
    EXPECT_THROW(svdq::fit_decay(Vector(0)), svdq::NumericError);
}

TEST(FitDecay, TinyTailExcluded) {
    // entries under 1e-12 * lambda_1 would wreck the log fit; they are skipped
    Vector singulars(10);
    for (Index j = 0; j < 8; ++j) {
        singulars(j) = std::exp(-0.5 * static_cast<double>(j + 1));
    }
    singulars(8) = 1e-300;
    singulars(9) = 0.0;
    const DecayModel fit = svdq::fit_decay(singulars);
    EXPECT_NEAR(fit.rate, 0.5, 1e-9);
}

TEST(LatentRange, NeighborRatioIsForced) {
    DecayModel model;
    model.scale = 2.0;
    model.rate = 0.13;
    model.log_residual = 0.0;
    const double want = std::exp(-2.0 * model.rate);
    for (Index j = 1; j < 20; ++j) {
        const double ratio = svdq::latent_range_sq(j + 1, model, 100.0, 64) /
                             svdq::latent_range_sq(j, model, 100.0, 64);
        EXPECT_NEAR(ratio, want, 1e-12);
    }
}

TEST(LatentRange, EnergyClosure) {
    // summing the implied per-channel variances recovers the total energy:
    // sum_j rhat_j^2 * s / 12 = ||K||_F^2 * (1 - e^{-2 rho d})
    DecayModel model;
    model.scale = 1.0;
    model.rate = 0.09;
    const double frob_sq = 250.0;
    const Index s = 128;
    const Index d = 96;
    double total = 0.0;
    for (Index j = 1; j <= d; ++j) {
        total += svdq::latent_range_sq(j, model, frob_sq, s) * static_cast<double>(s) / 12.0;
    }
    const double want = frob_sq * (1.0 - std::exp(-2.0 * model.rate * static_cast<double>(d)));
    EXPECT_NEAR(total, want, 1e-9 * want);
}

TEST(LatentRange, Validation) {
    DecayModel model;
    model.rate = 0.1;
    EXPECT_THROW(svdq::latent_range_sq(0, model, 1.0, 4), svdq::ConfigError);
    EXPECT_THROW(svdq::latent_range_sq(1, model, 1.0, 0), svdq::ConfigError);
    EXPECT_THROW(svdq::latent_range_sq(1, model, -1.0, 4), svdq::ConfigError);
}

TEST(ErrorRatio, SteepRegimeFourBits) {
    const ErrorEstimate est = svdq::svdq_error_ratio(4.0, 0.1, 1024);
    EXPECT_EQ(est.alpha, 25.6 - (8.0 / 7.0) * std::log(4.0));
    EXPECT_TRUE(est.steep_spectrum);
    EXPECT_NEAR(est.rms_ratio, 0.0625, 1e-9);
    EXPECT_NEAR(est.svdq_mse / est.direct_mse, 0.0625 * 0.0625, 1e-12);
}

TEST(ErrorRatio, SteepRegimeTwoBits) {
    const ErrorEstimate est = svdq::svdq_error_ratio(2.0, 0.1, 1024);
    EXPECT_TRUE(est.steep_spectrum);
    EXPECT_NEAR(est.rms_ratio, 0.25, 1e-9);
}

TEST(ErrorRatio, FlatSpectrumLosesTheAdvantage) {
    const ErrorEstimate est = svdq::svdq_error_ratio(4.0, 1e-4, 64);
    EXPECT_FALSE(est.steep_spectrum);
    EXPECT_GT(est.svdq_mse / est.direct_mse, 1.0);
}

TEST(ErrorRatio, AlphaZeroIsFinite) {
    const double bits = 4.0;
    const Index d = 128;
    const double rate = (2.0 * bits / 7.0) * std::log(4.0) * 4.0 / static_cast<double>(d);
    const ErrorEstimate est = svdq::svdq_error_ratio(bits, rate, d);
    EXPECT_EQ(est.alpha, 0.0);
    // the geometric sum degenerates to 8 terms of 1
    EXPECT_DOUBLE_EQ(est.svdq_mse / est.direct_mse, 8.0 * std::pow(4.0, -bits));
}

TEST(ErrorRatio, Validation) {
    EXPECT_THROW(svdq::svdq_error_ratio(0.0, 0.1, 64), svdq::ConfigError);
    EXPECT_THROW(svdq::svdq_error_ratio(4.0, 0.1, 0), svdq::ConfigError);
    const double bad = std::nan("");
    EXPECT_THROW(svdq::svdq_error_ratio(4.0, bad, 64), svdq::ConfigError);
}

TEST(MeasureMse, HandCases) {
    Matrix a(2, 2);
    a << 3, 0, 0, 4;
    const svdq::ErrorMeasure same = svdq::measure_mse(a, a);
    EXPECT_EQ(same.mse, 0.0);
    EXPECT_EQ(same.rel_frob, 0.0);

    Matrix b = a;
    b(0, 0) = 0.0;
    const svdq::ErrorMeasure m = svdq::measure_mse(a, b);
    EXPECT_DOUBLE_EQ(m.mse, 9.0 / 4.0);
    EXPECT_DOUBLE_EQ(m.rel_frob, 3.0 / 5.0);

    const svdq::ErrorMeasure inf = svdq::measure_mse(Matrix::Zero(2, 2), b);
    EXPECT_TRUE(std::isinf(inf.rel_frob));
    EXPECT_THROW(svdq::measure_mse(a, Matrix::Zero(3, 2)), svdq::DataError);
}

TEST(Advise, FlatSpectrumGetsUniformWidths) {
    const Vector flat = Vector::Constant(32, 2.0);
    const svdq::BitSchedule s = svdq::advise_schedule(flat, 4.0, 8);
    EXPECT_EQ(s.group_bits, std::vector<int>(8, 4));
}

TEST(Advise, MatchesExhaustiveSearch) {
    svdq::GaussianSource rng(404);
    static constexpr int kWidths[] = {8, 4, 3, 2, 1, 0};
    for (int trial = 0; trial < 10; ++trial) {
        Vector singulars(8);
        for (Index j = 0; j < 8; ++j) {
            singulars(j) = std::abs(rng.gaussian()) + 0.01;
        }
        std::sort(singulars.data(), singulars.data() + 8, std::greater<double>());
        const double target = 2.0;
        const svdq::BitSchedule got = svdq::advise_schedule(singulars, target, 4);

        // brute force over every non-increasing width tuple with the right sum
        double best = -1.0;
        const Index group_size = 2;
        for (int a : kWidths)
            for (int b : kWidths)
                for (int c : kWidths)
                    for (int e : kWidths) {
                        if (b > a || c > b || e > c || a + b + c + e != 8) {
                            continue;
                        }
                        const int widths[4] = {a, b, c, e};
                        double cost = 0.0;
                        for (Index g = 0; g < 4; ++g) {
                            double energy = 0.0;
                            for (Index u = 0; u < group_size; ++u) {
                                const double lam = singulars(g * group_size + u);
                                energy += lam * lam;
                            }
                            cost += energy * std::pow(4.0, -widths[g]);
                        }
                        if (best < 0.0 || cost < best) {
                            best = cost;
                        }
                    }

        double got_cost = 0.0;
        for (Index g = 0; g < 4; ++g) {
            double energy = 0.0;
            for (Index u = 0; u < group_size; ++u) {
                const double lam = singulars(g * group_size + u);
                energy += lam * lam;
            }
            got_cost += energy * std::pow(4.0, -got.group_bits[static_cast<std::size_t>(g)]);
        }
        EXPECT_NEAR(got_cost, best, 1e-12 * best);
    }
}

TEST(Advise, BeatsHandScheduleOnItsOwnMetric) {
    Vector singulars(1024);
    for (Index j = 0; j < 1024; ++j) {
        singulars(j) = 32.0 * std::exp(-0.1 * static_cast<double>(j + 1));
    }
    const svdq::BitSchedule advised = svdq::advise_schedule(singulars, 2.25, 8);
    const svdq::BitSchedule hand = svdq::make_schedule({8, 4, 4, 2, 0, 0, 0, 0}, 1024);

    auto model_cost = [&](const svdq::BitSchedule & s) {
        double cost = 0.0;
        for (Index j = 0; j < 1024; ++j) {
            cost += singulars(j) * singulars(j) *
                    std::pow(4.0, -s.bits_for_channel(j));
        }
        return cost;
    };
    EXPECT_LE(model_cost(advised), model_cost(hand) * (1.0 + 1e-12));
    EXPECT_EQ(advised.equivalent_bits(), 2.25);
}

TEST(Advise, RejectsBadTargets) {
    const Vector flat = Vector::Constant(32, 1.0);
    EXPECT_THROW(svdq::advise_schedule(flat, 16.0, 8), svdq::ConfigError);
    EXPECT_THROW(svdq::advise_schedule(flat, -1.0, 8), svdq::ConfigError);
    EXPECT_THROW(svdq::advise_schedule(flat, 2.3, 8), svdq::ConfigError);  // sum 18.4
    EXPECT_THROW(svdq::advise_schedule(flat, 2.0, 5), svdq::ConfigError);  // 32 % 5
}
