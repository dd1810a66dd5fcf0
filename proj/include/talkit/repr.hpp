#pragma once

// Fixed-size temporal representations of a variable-length interval:
// global average pooling, k-part pooling with context, structured temporal
// pyramid pooling (STPP) and boundary-sensitive linear-interpolated sampling
// (BSP). Kernels are templated on the unit matrix so tests can run them in
// double precision; the pipeline uses float FeatureSequence rows.
//
// Coordinates: unit i covers [i, i+1). Pooling weights each unit by the
// fraction of it covered by the pooled span. Interpolation addresses rows
// at integer indices (see unit_feature).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/features.hpp"

namespace talkit {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Mean over [a, b) clamped to the sequence, fraction-weighted. An empty
/// clamped span yields the nearest boundary row.
template <typename Derived>
Vec<typename Derived::Scalar> pool_span(const Eigen::MatrixBase<Derived>& units, double a,
                                        double b) {
  const auto n = static_cast<double>(units.rows());
  const double lo = std::clamp(a, 0.0, n);
  const double hi = std::clamp(b, 0.0, n);
  if (!(hi > lo)) {
    const Eigen::Index row = (lo <= 0.0) ? 0 : units.rows() - 1;
    return units.row(row).transpose();
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(units.cols());
  double total = 0.0;
  const auto first = static_cast<Eigen::Index>(std::floor(lo));
  const auto last = static_cast<Eigen::Index>(std::ceil(hi));
  for (Eigen::Index i = first; i < last && i < units.rows(); ++i) {
    const double w = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
    if (w <= 0.0) continue;
    acc += w * units.row(i).transpose().template cast<double>();
    total += w;
  }
  return (acc / total).template cast<typename Derived::Scalar>();
}

inline void require_nondegenerate(const Interval& interval) {
  if (interval.length() < kMinIntervalLength) {
    throw DataError("degenerate interval (length < 1e-6 units)");
  }
}

/// Mean of the unit vectors covered by the interval.
template <typename Derived>
Vec<typename Derived::Scalar> global_avg_pool(const Eigen::MatrixBase<Derived>& units,
                                              const Interval& interval) {
  require_nondegenerate(interval);
  return pool_span(units, interval.start, interval.end);
}

namespace detail {

template <typename Scalar>
void put_block(Vec<Scalar>& out, Eigen::Index& block, const Vec<Scalar>& v) {
  out.segment(block * v.size(), v.size()) = v;
  ++block;
}

// Appends k equal contiguous parts of [start, end) to out.
template <typename Derived>
void put_parts(const Eigen::MatrixBase<Derived>& units, const Interval& interval, int k,
               Vec<typename Derived::Scalar>& out, Eigen::Index& block) {
  const double len = interval.length();
  double lo = interval.start;
  for (int i = 0; i < k; ++i) {
    const double hi = (i + 1 == k) ? interval.end : interval.start + len * (i + 1) / k;
    put_block(out, block, pool_span(units, lo, hi));
    lo = hi;
  }
}

// Equally spaced interpolated samples over [a, b], endpoints included; a
// single sample sits at the midpoint.
template <typename Derived>
void put_samples(const Eigen::MatrixBase<Derived>& units, double a, double b, int count,
                 Vec<typename Derived::Scalar>& out, Eigen::Index& block) {
  for (int j = 0; j < count; ++j) {
    const double x = count == 1 ? 0.5 * (a + b) : a + (b - a) * j / (count - 1);
    put_block(out, block, unit_feature(units, x));
  }
}

}  // namespace detail

/// f_start || part_1 || ... || part_k || f_end. Context blocks are present
/// only when n_ctx > 0.
template <typename Derived>
Vec<typename Derived::Scalar> kpart_pool(const Eigen::MatrixBase<Derived>& units,
                                         const Interval& interval, int k, int n_ctx) {
  require_nondegenerate(interval);
  ReprSpec spec{KPartPool{k}, n_ctx};
  Vec<typename Derived::Scalar> out(repr_output_dim(spec, units.cols()));
  Eigen::Index block = 0;
  if (n_ctx > 0) {
    detail::put_block(out, block, pool_span(units, interval.start - n_ctx, interval.start));
  }
  detail::put_parts(units, interval, k, out, block);
  if (n_ctx > 0) {
    detail::put_block(out, block, pool_span(units, interval.end, interval.end + n_ctx));
  }
  return out;
}

/// starting || course level 1 parts || ... || course level L parts || ending.
template <typename Derived>
Vec<typename Derived::Scalar> stpp(const Eigen::MatrixBase<Derived>& units,
                                   const Interval& interval, const std::vector<int>& levels,
                                   int n_ctx) {
  require_nondegenerate(interval);
  ReprSpec spec{Stpp{levels}, n_ctx};
  Vec<typename Derived::Scalar> out(repr_output_dim(spec, units.cols()));
  Eigen::Index block = 0;
  if (n_ctx > 0) {
    detail::put_block(out, block, pool_span(units, interval.start - n_ctx, interval.start));
  }
  for (int parts : levels) {
    detail::put_parts(units, interval, parts, out, block);
  }
  if (n_ctx > 0) {
    detail::put_block(out, block, pool_span(units, interval.end, interval.end + n_ctx));
  }
  return out;
}

/// pooled start ctx || A samples over [s-n_ctx, s] || B samples over [s, e]
/// || A samples over [e, e+n_ctx] || pooled end ctx.
template <typename Derived>
Vec<typename Derived::Scalar> bsp_sample(const Eigen::MatrixBase<Derived>& units,
                                         const Interval& interval, int context_points,
                                         int interior_points, int n_ctx) {
  require_nondegenerate(interval);
  ReprSpec spec{Bsp{context_points, interior_points}, n_ctx};
  Vec<typename Derived::Scalar> out(repr_output_dim(spec, units.cols()));
  Eigen::Index block = 0;
  const double s = interval.start;
  const double e = interval.end;
  if (n_ctx > 0) detail::put_block(out, block, pool_span(units, s - n_ctx, s));
  detail::put_samples(units, s - n_ctx, s, context_points, out, block);
  detail::put_samples(units, s, e, interior_points, out, block);
  detail::put_samples(units, e, e + n_ctx, context_points, out, block);
  if (n_ctx > 0) detail::put_block(out, block, pool_span(units, e, e + n_ctx));
  return out;
}

/// Dispatches on spec.variant.
template <typename Derived>
Vec<typename Derived::Scalar> extract(const Eigen::MatrixBase<Derived>& units,
                                      const Interval& interval, const ReprSpec& spec) {
  validate(spec);
  return std::visit(
      [&](const auto& v) -> Vec<typename Derived::Scalar> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GlobalPool>) {
          return kpart_pool(units, interval, 1, spec.n_ctx);
        } else if constexpr (std::is_same_v<T, KPartPool>) {
          return kpart_pool(units, interval, v.k, spec.n_ctx);
        } else if constexpr (std::is_same_v<T, Stpp>) {
          return stpp(units, interval, v.levels, spec.n_ctx);
        } else {
          return bsp_sample(units, interval, v.context_points, v.interior_points, spec.n_ctx);
        }
      },
      spec.variant);
}

struct FixedFeature {
  Eigen::VectorXf values;
  ReprSpec spec;
};

inline FixedFeature extract(const FeatureSequence& seq, const Interval& interval,
                            const ReprSpec& spec) {
  return {extract(seq.units, interval, spec), spec};
}

inline constexpr std::int64_t kDefaultHidden = 1000;

/// Trainable parameters of the two-layer head fed by `spec` features:
/// n_f*hidden + hidden + hidden*(C+1)*3 + (C+1)*3.
std::int64_t param_count(const ReprSpec& spec, std::int64_t dim, int num_classes,
                         std::int64_t hidden = kDefaultHidden);

struct ParamCountRow {
  ReprSpec spec;
  std::int64_t params = 0;
};

/// The eight representation settings of the parameter-count table.
std::vector<ReprSpec> reference_table_specs();

/// Aligned table: method, setting, input dim, #params (M, two decimals).
std::string format_param_table(const std::vector<ParamCountRow>& rows);

}  // namespace talkit
