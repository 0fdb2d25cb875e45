/*
 Copyright 2026 The VisioPath Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef VISIOPATH_SPLINE_HPP
#define VISIOPATH_SPLINE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace visiopath::spline {

/// Natural cubic interpolating spline on strictly increasing knots. The
/// interior second derivatives come from the standard tridiagonal system
/// (solved with the Thomas algorithm; the system is strictly diagonally
/// dominant, so no pivoting is needed) with zero curvature at both ends.
/// Queries outside the knot range extrapolate linearly with the boundary
/// slope, which keeps resampled references bounded.
class NaturalCubic {
 public:
  NaturalCubic(std::vector<double> t, std::vector<double> y)
      : t_(std::move(t)), y_(std::move(y)) {
    const std::size_t n = t_.size();
    if (n < 2 || y_.size() != n) {
      throw std::invalid_argument("NaturalCubic: need at least two knots");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(t_[i]) || !std::isfinite(y_[i])) {
        throw std::invalid_argument("NaturalCubic: non-finite knot");
      }
      if (i > 0 && !(t_[i] > t_[i - 1])) {
        throw std::invalid_argument(
            "NaturalCubic: knots must be strictly increasing");
      }
    }
    m_.assign(n, 0.0);
    if (n > 2) {
      const std::size_t rows = n - 2;
      std::vector<double> diag(rows), upper(rows), rhs(rows);
      for (std::size_t j = 0; j < rows; ++j) {
        const std::size_t i = j + 1;
        const double h0 = t_[i] - t_[i - 1];
        const double h1 = t_[i + 1] - t_[i];
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
      }
      // Forward sweep; the sub-diagonal entry of row j is h_{j}.
      for (std::size_t j = 1; j < rows; ++j) {
        const double sub = t_[j + 1] - t_[j];
        const double w = sub / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
      }
      m_[rows] = rhs[rows - 1] / diag[rows - 1];
      for (std::size_t j = rows - 1; j > 0; --j) {
        m_[j] = (rhs[j - 1] - upper[j - 1] * m_[j + 1]) / diag[j - 1];
      }
    }
  }

  double value(double t) const {
    if (!std::isfinite(t)) {
      throw std::invalid_argument("NaturalCubic: non-finite query");
    }
    if (t <= t_.front()) {
      return y_.front() + boundary_slope(0) * (t - t_.front());
    }
    if (t >= t_.back()) {
      return y_.back() + boundary_slope(segments() - 1) * (t - t_.back());
    }
    const std::size_t i = segment_of(t);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return m_[i] * a * a * a / (6.0 * h) + m_[i + 1] * b * b * b / (6.0 * h) +
           (y_[i] / h - m_[i] * h / 6.0) * a +
           (y_[i + 1] / h - m_[i + 1] * h / 6.0) * b;
  }

  double derivative(double t) const {
    if (!std::isfinite(t)) {
      throw std::invalid_argument("NaturalCubic: non-finite query");
    }
    if (t <= t_.front()) return boundary_slope(0);
    if (t >= t_.back()) return boundary_slope(segments() - 1);
    return slope_in_segment(segment_of(t), t);
  }

  const std::vector<double>& knots() const { return t_; }
  const std::vector<double>& second_derivatives() const { return m_; }

 private:
  std::size_t segments() const { return t_.size() - 1; }

  std::size_t segment_of(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t idx = static_cast<std::size_t>(it - t_.begin());
    return std::min(std::max<std::size_t>(idx, 1) - 1, segments() - 1);
  }

  double slope_in_segment(std::size_t i, double t) const {
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return -m_[i] * a * a / (2.0 * h) + m_[i + 1] * b * b / (2.0 * h) -
           (y_[i] / h - m_[i] * h / 6.0) + (y_[i + 1] / h - m_[i + 1] * h / 6.0);
  }

  // Slope at the left end of segment 0 or the right end of the last segment.
  double boundary_slope(std::size_t i) const {
    return slope_in_segment(i, i == 0 ? t_.front() : t_.back());
  }

  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots, natural ends
};

}  // namespace visiopath::spline

#endif  // VISIOPATH_SPLINE_HPP
