#ifndef CKMFLOW_SERIAL_REF_HPP
#define CKMFLOW_SERIAL_REF_HPP

#include <vector>

#include "ckmflow/net.hpp"
#include "ckmflow/tensor.hpp"

// Straight-line single-threaded reimplementation of the velocity-field
// forward pass, written independently of the kernel library: naive
// seven-loop convolutions with per-tap bounds checks and a sequential
// walk over the flat parameter vector. Used as the forward oracle in
// tests and as the serial side of the kernel benchmark.

namespace ckmflow::ref {

template <typename T>
Tensor<T> velocity_forward(const VelocityNetConfig& cfg, const std::vector<T>& theta,
                           const Tensor<T>& x_t, double t, const Tensor<T>& c);

extern template Tensor<float> velocity_forward<float>(const VelocityNetConfig&,
                                                      const std::vector<float>&,
                                                      const Tensor<float>&, double,
                                                      const Tensor<float>&);
extern template Tensor<double> velocity_forward<double>(const VelocityNetConfig&,
                                                        const std::vector<double>&,
                                                        const Tensor<double>&, double,
                                                        const Tensor<double>&);

}  // namespace ckmflow::ref

#endif
