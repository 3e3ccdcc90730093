#pragma once

// Internal dense kernels behind the autodiff ops. All loops have a fixed
// iteration order; parallel sections write disjoint slices and reduce in
// batch order, so results are independent of the thread count.

#include <cstddef>

namespace aircast::detail {

struct Conv2dDims {
  std::size_t batch, rows, cols, cin, kh, kw, cout;
};

// `accumulate` skips the bias/zero reset and adds onto the existing output.
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d, bool accumulate = false);
void conv2d_grad_input(const double* dy, const double* k, double* dx, const Conv2dDims& d);
void conv2d_grad_kernel(const double* x, const double* dy, double* dk, double* dbias,
                        const Conv2dDims& d);

struct Conv3dDims {
  std::size_t batch, time, rows, cols, cin, kt, kh, kw, cout;
};

void conv3d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv3dDims& d);
void conv3d_grad_input(const double* dy, const double* k, double* dx, const Conv3dDims& d);
void conv3d_grad_kernel(const double* x, const double* dy, double* dk, double* dbias,
                        const Conv3dDims& d);

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   std::size_t batch, std::size_t in, std::size_t out);
void dense_grad_input(const double* dy, const double* w, double* dx, std::size_t batch,
                      std::size_t in, std::size_t out);
void dense_grad_weight(const double* x, const double* dy, double* dw, double* db,
                       std::size_t batch, std::size_t in, std::size_t out);

}  // namespace aircast::detail
