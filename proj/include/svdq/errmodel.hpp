#pragma once

#include "svdq/types.hpp"
#include "svdq/quant.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace svdq {

// Analytic error theory for latent-basis quantization.
//
// Channel energies of centered key matrices decay roughly exponentially, so the
// spectrum is modeled as lambda_j = scale * exp(-rate * j) with 1-based j. The
// per-channel value range follows from the uniformity assumption, and the
// direct-vs-latent quantization error ratio has a closed form driven by
//
//   alpha = d*rate/4 - (2b/7)*ln 4
//
// (steeply decaying spectra mean alpha > 0 and a large SVDq advantage).

struct DecayModel {
    double scale = 0.0;        // c in lambda_j = c * exp(-rate * j)
    double rate = 0.0;         // decay per channel index
    double log_residual = 0.0; // RMS residual of the log-domain fit
};

struct ErrorEstimate {
    double direct_mse = 0.0; // per-element MSE of direct b-bit quantization, unit-energy input
    double svdq_mse = 0.0;   // per-element MSE of the arithmetic-progression latent schedule
    double alpha = 0.0;
    double rms_ratio = 0.0;       // sqrt(svdq_mse / direct_mse)
    bool steep_spectrum = false;  // alpha > 0, i.e. rate >> (8b/7d)*ln 4
};

struct ErrorMeasure {
    double mse = 0.0;
    double rel_frob = 0.0;
};

// MSE of an idealized b-bit quantizer on uniform data with value range r:
// the variance of a uniform distribution of width r/2^b.
inline double lemma41_mse(double range, double bits) {
    if (!(range >= 0.0)) {
        throw ConfigError("lemma41_mse: range must be non-negative");
    }
    if (!(bits >= 1.0)) {
        throw ConfigError("lemma41_mse: need at least one bit");
    }
    return range * range / (12.0 * std::pow(2.0, 2.0 * bits));
}

// Expected per-element MSE of direct per-channel b-bit quantization under the
// equal-variance uniform-channel model: ||K||_F^2 / (2^{2b} * d * s).
inline double direct_quant_mse(double frob_sq, Index s, Index d, double bits) {
    if (s < 1 || d < 1) {
        throw ConfigError("direct_quant_mse: dimensions must be positive");
    }
    if (!(frob_sq >= 0.0)) {
        throw ConfigError("direct_quant_mse: negative energy");
    }
    if (!(bits >= 1.0)) {
        throw ConfigError("direct_quant_mse: need at least one bit");
    }
    return frob_sq / (std::pow(2.0, 2.0 * bits) * static_cast<double>(d) * static_cast<double>(s));
}

// Unweighted least squares of log lambda_j against 1-based j. Entries below
// 1e-12 * lambda_1 (or non-positive) are excluded.
inline DecayModel fit_decay(const Vector & singulars) {
    const Index d = singulars.size();
    if (d < 1) {
        throw NumericError("fit_decay: empty spectrum");
    }
    require_finite(singulars, "fit_decay");
    const double cutoff = 1e-12 * singulars(0);

    double sum_x = 0.0, sum_y = 0.0, sum_xx = 0.0, sum_xy = 0.0;
    Index used = 0;
    for (Index j = 0; j < d; ++j) {
        const double lam = singulars(j);
        if (!(lam > 0.0) || lam < cutoff) {
            continue;
        }
        const double x = static_cast<double>(j + 1);
        const double y = std::log(lam);
        sum_x += x;
        sum_y += y;
        sum_xx += x * x;
        sum_xy += x * y;
        ++used;
    }
    if (used < 2) {
        throw NumericError("fit_decay: fewer than 2 usable singular values");
    }
    const double n = static_cast<double>(used);
    const double sxx = sum_xx - sum_x * sum_x / n;
    const double sxy = sum_xy - sum_x * sum_y / n;
    const double slope = sxy / sxx;
    const double intercept = (sum_y - slope * sum_x) / n;

    DecayModel out;
    out.scale = std::exp(intercept);
    out.rate = -slope;

    double ss = 0.0;
    for (Index j = 0; j < d; ++j) {
        const double lam = singulars(j);
        if (!(lam > 0.0) || lam < cutoff) {
            continue;
        }
        const double r = std::log(lam) - (intercept + slope * static_cast<double>(j + 1));
        ss += r * r;
    }
    out.log_residual = std::sqrt(ss / n);
    return out;
}

// Squared value range of latent channel j (1-based) under the decay model:
//   rhat_j^2 = 12 * (e^{2 rate} - 1) * e^{-2 rate j} * ||K||_F^2 / s
// using the identity c^2 ~= (e^{2 rate} - 1) * ||K||_F^2 / s.
inline double latent_range_sq(Index j, const DecayModel & model, double frob_sq, Index s) {
    if (j < 1) {
        throw ConfigError("latent_range_sq: channel index is 1-based");
    }
    if (s < 1) {
        throw ConfigError("latent_range_sq: token count must be positive");
    }
    if (!(frob_sq >= 0.0)) {
        throw ConfigError("latent_range_sq: negative energy");
    }
    const double r2 = model.rate * 2.0;
    return 12.0 * std::expm1(r2) * std::exp(-r2 * static_cast<double>(j)) * frob_sq /
           static_cast<double>(s);
}

// Closed-form error ratio of the idealized arithmetic-progression schedule
// b_i = (8 - i) * 2b/7 against direct b-bit quantization:
//
//   E(svdq) / E(direct) = 4^{b - b1} * (1 - e^{-8 alpha}) / (1 - e^{-alpha}),  b1 = 2b
//
// The geometric factor is evaluated as the 8-term sum, which is the same
// expression and stays finite at alpha = 0. direct_mse is normalized to a
// unit-energy input (||K||_F^2 = s*d). rate <= 0 is accepted for diagnostics:
// alpha goes negative and the ratio exceeds 1, flagging no SVDq advantage.
inline ErrorEstimate svdq_error_ratio(double bits, double rate, Index d) {
    if (!(bits > 0.0)) {
        throw ConfigError("svdq_error_ratio: bits must be positive");
    }
    if (d < 1) {
        throw ConfigError("svdq_error_ratio: channel count must be positive");
    }
    if (!std::isfinite(rate)) {
        throw ConfigError("svdq_error_ratio: non-finite decay rate");
    }
    ErrorEstimate out;
    out.alpha = static_cast<double>(d) * rate / 4.0 - (2.0 * bits / 7.0) * std::log(4.0);
    out.steep_spectrum = out.alpha > 0.0;

    double geometric = 0.0;
    for (int i = 0; i < 8; ++i) {
        geometric += std::exp(-out.alpha * static_cast<double>(i));
    }
    const double b1 = 2.0 * bits;
    const double mse_ratio = std::pow(4.0, bits - b1) * geometric;

    out.direct_mse = std::pow(2.0, -2.0 * bits);
    out.svdq_mse = mse_ratio * out.direct_mse;
    out.rms_ratio = std::sqrt(mse_ratio);
    return out;
}

inline ErrorMeasure measure_mse(const Matrix & original, const Matrix & reconstructed) {
    if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
        throw DataError("measure_mse: shape mismatch");
    }
    const double diff = (original - reconstructed).norm();
    const double base = original.norm();
    ErrorMeasure out;
    out.mse = diff * diff / (static_cast<double>(original.rows()) * static_cast<double>(original.cols()));
    if (diff == 0.0) {
        out.rel_frob = 0.0;
    } else if (base == 0.0) {
        out.rel_frob = std::numeric_limits<double>::infinity();
    } else {
        out.rel_frob = diff / base;
    }
    return out;
}

// Exact minimizer of the model-predicted quantization MSE
//
//   sum_j lambda_j^2 * 4^{-b(j)}
//
// over non-increasing group schedules with widths in {8,4,3,2,1,0} and mean
// width equal to the target. Searched depth-first in descending width order
// with sum-feasibility pruning, so among equal-cost schedules the first one
// found (the lexicographically largest, i.e. bits pushed toward earlier
// groups) wins. The non-increasing constraint keeps the search space tiny.
inline BitSchedule advise_schedule(const Vector & singulars, double target_bits, Index groups = 8) {
    const Index d = singulars.size();
    if (groups < 1 || d < 1 || d % groups != 0) {
        throw ConfigError("advise_schedule: channel count not divisible into groups");
    }
    require_finite(singulars, "advise_schedule");
    if (!(target_bits >= 0.0) || target_bits > 8.0) {
        throw ConfigError("advise_schedule: target outside [0, 8]");
    }
    const double total_real = target_bits * static_cast<double>(groups);
    const long total = std::lround(total_real);
    if (std::abs(total_real - static_cast<double>(total)) > 1e-9) {
        throw ConfigError("advise_schedule: target width sum is not an integer");
    }

    const Index group_size = d / groups;
    std::vector<double> energy(static_cast<std::size_t>(groups), 0.0);
    for (Index j = 0; j < d; ++j) {
        const double lam = singulars(j);
        energy[static_cast<std::size_t>(j / group_size)] += lam * lam;
    }

    static constexpr int kWidths[] = {8, 4, 3, 2, 1, 0};
    auto cost_of = [](int w) {
        return std::pow(4.0, -static_cast<double>(w));
    };

    std::vector<int> current(static_cast<std::size_t>(groups), 0);
    std::vector<int> best;
    double best_cost = 0.0;

    auto rec = [&](auto && self, Index g, int cap, long remaining, double cost) -> void {
        if (remaining < 0 || remaining > static_cast<long>(cap) * (groups - g)) {
            return;
        }
        if (g == groups) {
            if (remaining == 0 && (best.empty() || cost < best_cost)) {
                best = current;
                best_cost = cost;
            }
            return;
        }
        for (int w : kWidths) {
            if (w > cap) {
                continue;
            }
            current[static_cast<std::size_t>(g)] = w;
            self(self, g + 1, w, remaining - w,
                 cost + energy[static_cast<std::size_t>(g)] * cost_of(w));
        }
    };
    rec(rec, 0, 8, total, 0.0);

    if (best.empty()) {
        throw ConfigError("advise_schedule: no feasible schedule for target");
    }
    return make_schedule(std::move(best), d);
}

} // namespace svdq
