#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepfx {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct data_error : error {
    using error::error;
};

struct fit_error : error {
    using error::error;
};

struct positivity_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

// event: 0 = censored, 1 = cause of interest, 2 = competing cause
struct ObservedRecord {
    double time = 0.0;
    int event = 0;
    int treatment = 0;
    std::vector<double> covariates;
};

class Dataset {
public:
    std::vector<double> time;
    std::vector<int> event;
    std::vector<int> treatment;
    std::vector<std::vector<double>> covariates;  // one vector per column
    std::vector<std::string> covariate_names;

    std::size_t size() const { return time.size(); }
    std::size_t n_covariates() const { return covariates.size(); }

    ObservedRecord record(std::size_t i) const {
        ObservedRecord r;
        r.time = time[i];
        r.event = event[i];
        r.treatment = treatment[i];
        r.covariates.reserve(covariates.size());
        for (const auto& col : covariates) r.covariates.push_back(col[i]);
        return r;
    }

    void push_back(const ObservedRecord& r) {
        if (covariates.empty() && !r.covariates.empty() && time.empty()) {
            covariates.resize(r.covariates.size());
            if (covariate_names.empty())
                for (std::size_t j = 0; j < r.covariates.size(); ++j)
                    covariate_names.push_back("x" + std::to_string(j + 1));
        }
        if (r.covariates.size() != covariates.size())
            throw data_error("record has " + std::to_string(r.covariates.size()) +
                             " covariates, dataset has " +
                             std::to_string(covariates.size()));
        time.push_back(r.time);
        event.push_back(r.event);
        treatment.push_back(r.treatment);
        for (std::size_t j = 0; j < covariates.size(); ++j)
            covariates[j].push_back(r.covariates[j]);
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.covariate_names = covariate_names;
        out.covariates.resize(covariates.size());
        out.time.reserve(idx.size());
        for (std::size_t i : idx) {
            out.time.push_back(time[i]);
            out.event.push_back(event[i]);
            out.treatment.push_back(treatment[i]);
            for (std::size_t j = 0; j < covariates.size(); ++j)
                out.covariates[j].push_back(covariates[j][i]);
        }
        return out;
    }

    // Flip the treatment label on every record.
    Dataset relabeled() const {
        Dataset out = *this;
        for (auto& a : out.treatment) a = 1 - a;
        return out;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> warnings;
        for (std::size_t i = 0; i < size(); ++i) {
            if (!std::isfinite(time[i]) || time[i] <= 0.0)
                throw data_error("record " + std::to_string(i + 1) +
                                 ": time must be finite and positive, got " +
                                 std::to_string(time[i]));
            if (event[i] < 0 || event[i] > 2)
                throw data_error("record " + std::to_string(i + 1) +
                                 ": event must be 0, 1, or 2, got " +
                                 std::to_string(event[i]));
            if (treatment[i] != 0 && treatment[i] != 1)
                throw data_error("record " + std::to_string(i + 1) +
                                 ": treatment must be 0 or 1, got " +
                                 std::to_string(treatment[i]));
        }
        auto count_event = [&](int code) {
            return std::count(event.begin(), event.end(), code);
        };
        if (size() > 0) {
            if (count_event(1) == 0) warnings.push_back("no cause-1 events");
            if (count_event(2) == 0) warnings.push_back("no cause-2 events");
            if (count_event(0) == 0) warnings.push_back("no censored records");
            for (std::size_t j = 0; j < covariates.size(); ++j) {
                const auto& c = covariates[j];
                if (std::all_of(c.begin(), c.end(),
                                [&](double v) { return v == c[0]; }))
                    warnings.push_back("covariate " + covariate_names[j] +
                                       " is constant");
            }
        }
        return warnings;
    }
};

// Right-continuous cumulative step function: value(t) = sum of increments
// at jump times <= t.  Jump times strictly increasing.
class StepFunction {
public:
    StepFunction() = default;
    StepFunction(std::vector<double> jump_times, std::vector<double> increments)
        : times_(std::move(jump_times)), increments_(std::move(increments)) {
        if (times_.size() != increments_.size())
            throw error("step function: " + std::to_string(times_.size()) +
                        " jump times vs " + std::to_string(increments_.size()) +
                        " increments");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (times_[k] <= times_[k - 1])
                throw error("step function: jump times not strictly increasing at index " +
                            std::to_string(k));
        cum_.resize(times_.size());
        double s = 0.0;
        for (std::size_t k = 0; k < times_.size(); ++k) {
            s += increments_[k];
            cum_[k] = s;
        }
    }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& increments() const { return increments_; }
    std::size_t n_jumps() const { return times_.size(); }

    double value(double t) const {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 0.0;
        return cum_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    // sum of increments at jump times < t
    double left_value(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 0.0;
        return cum_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    double total() const { return cum_.empty() ? 0.0 : cum_.back(); }

private:
    std::vector<double> times_;
    std::vector<double> increments_;
    std::vector<double> cum_;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct EffectEstimate {
    double time = 0.0;
    double estimate = 0.0;
    std::optional<double> se_analytic;
    std::optional<double> se_eif;
    std::optional<double> se_bootstrap;
    std::optional<Interval> ci;
    std::optional<Interval> ci_percentile;
};

struct RiskCurve {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> se;
    std::vector<double> lo;
    std::vector<double> hi;
};

}  // namespace sepfx
