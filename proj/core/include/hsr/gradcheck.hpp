#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hsr/tensor.hpp"

// Central-difference gradient verification. Each case owns a scalar function
// of some tensors plus its analytic gradient; the harness perturbs every
// element and reports the worst relative disagreement with denominator
// max(|a|, |b|, 1e-8). Everything runs in double: finite differences are not
// trustworthy in single precision.

namespace hsr {

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct FdCase {
  std::string name;
  double tolerance = 1e-4;
  // evaluates the case for one seed; returns the max relative error
  std::function<double(std::uint64_t seed, double eps)> max_rel_error;
};

// `scalar` evaluates the objective at the current values of `inputs`;
// `analytic` returns gradients aligned with `inputs`.
double fd_max_rel_error(
    const std::vector<Tensor<double>*>& inputs,
    const std::function<double()>& scalar,
    const std::function<std::vector<Tensor<double>>()>& analytic, double eps);

GradCheckReport finite_difference_check(const FdCase& c, std::uint64_t seed,
                                        double eps = 1e-5);

// Every differentiable operator plus the three end-to-end tiny-network
// variants. inject_fault corrupts one conv weight gradient by 1.01 so the
// harness's failure path stays honest.
std::vector<FdCase> standard_cases(bool inject_fault = false);

}  // namespace hsr
