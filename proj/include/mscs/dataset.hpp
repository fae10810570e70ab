#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscs {

/**
 * A univariate response with zero or more exogenous predictor columns on a
 * strictly increasing time index. Predictors are stored column-major since
 * model fitting consumes whole columns.
 *
 * Construction validates shape, finiteness and index monotonicity; instances
 * are immutable afterwards and safe to share across threads.
 */
class TimeSeriesDataset {
public:
    TimeSeriesDataset() = default;

    TimeSeriesDataset(std::vector<double> y,
                      std::vector<std::vector<double>> predictor_columns,
                      std::vector<std::string> predictor_names,
                      std::vector<std::int64_t> time_index)
        : y_(std::move(y)),
          columns_(std::move(predictor_columns)),
          names_(std::move(predictor_names)),
          time_(std::move(time_index)) {
        const std::size_t T = y_.size();
        if (time_.empty()) {
            time_.resize(T);
            for (std::size_t t = 0; t < T; ++t) time_[t] = static_cast<std::int64_t>(t);
        }
        if (time_.size() != T)
            throw std::invalid_argument("TimeSeriesDataset: time index length mismatch");
        if (names_.size() != columns_.size())
            throw std::invalid_argument("TimeSeriesDataset: predictor name count mismatch");
        for (const auto& col : columns_)
            if (col.size() != T)
                throw std::invalid_argument("TimeSeriesDataset: predictor column length mismatch");
        for (std::size_t t = 1; t < T; ++t)
            if (time_[t] <= time_[t - 1])
                throw std::invalid_argument("TimeSeriesDataset: time index not strictly increasing");
        for (double v : y_)
            if (!std::isfinite(v))
                throw std::invalid_argument("TimeSeriesDataset: non-finite response value");
        for (const auto& col : columns_)
            for (double v : col)
                if (!std::isfinite(v))
                    throw std::invalid_argument("TimeSeriesDataset: non-finite predictor value");
    }

    std::size_t length() const { return y_.size(); }
    int n_predictors() const { return static_cast<int>(columns_.size()); }

    const std::vector<double>& y() const { return y_; }
    const std::vector<double>& predictor(int i) const { return columns_.at(i); }
    const std::vector<std::string>& predictor_names() const { return names_; }
    const std::vector<std::int64_t>& time_index() const { return time_; }

    double x(std::size_t t, int predictor_index) const {
        return columns_[predictor_index][t];
    }

    /// Rows [first, last) as a new dataset; time index carried over.
    TimeSeriesDataset slice(std::size_t first, std::size_t last) const {
        if (first > last || last > length())
            throw std::out_of_range("TimeSeriesDataset::slice: bad range");
        std::vector<double> ys(y_.begin() + first, y_.begin() + last);
        std::vector<std::vector<double>> cols;
        cols.reserve(columns_.size());
        for (const auto& c : columns_)
            cols.emplace_back(c.begin() + first, c.begin() + last);
        return TimeSeriesDataset(std::move(ys), std::move(cols), names_,
                                 std::vector<std::int64_t>(time_.begin() + first,
                                                           time_.begin() + last));
    }

private:
    std::vector<double> y_;
    std::vector<std::vector<double>> columns_;
    std::vector<std::string> names_;
    std::vector<std::int64_t> time_;
};

}  // namespace mscs
