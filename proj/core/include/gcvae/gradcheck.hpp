#pragma once

#include <functional>

#include "gcvae/tensor.hpp"

namespace gcvae {

/// Central-difference gradient of a scalar function:
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// max_i |a_i - b_i| / (|b_i| + floor). `b` is the reference.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace gcvae
