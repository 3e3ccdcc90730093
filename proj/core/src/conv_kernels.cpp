#include "conv_kernels.hpp"

#include <algorithm>
#include <vector>

#include "aircast/parallel.hpp"

namespace aircast::detail {

namespace {

// Valid output range for one kernel offset under same padding: the input
// index i + off must stay inside [0, extent).
inline void valid_range(std::ptrdiff_t off, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
  hi = off > 0 ? extent - static_cast<std::size_t>(off) : extent;
}

// y[0..n) += sum over a 4-wide input-channel block; the unroll amortizes the
// y load/store over four fused multiply-adds per lane
inline void accum_block4(double* __restrict y, const double* __restrict x,
                         const double* __restrict k, std::size_t cin, std::size_t n) {
  std::size_t ci = 0;
  for (; ci + 4 <= cin; ci += 4) {
    const double a0 = x[ci], a1 = x[ci + 1], a2 = x[ci + 2], a3 = x[ci + 3];
    const double* __restrict k0 = k + ci * n;
    const double* __restrict k1 = k0 + n;
    const double* __restrict k2 = k1 + n;
    const double* __restrict k3 = k2 + n;
    for (std::size_t o = 0; o < n; ++o)
      y[o] += a0 * k0[o] + a1 * k1[o] + a2 * k2[o] + a3 * k3[o];
  }
  for (; ci < cin; ++ci) {
    const double a = x[ci];
    const double* __restrict kr = k + ci * n;
    for (std::size_t o = 0; o < n; ++o) y[o] += a * kr[o];
  }
}

// dk[ci][co] += x[ci] * dy[co]; the 4-wide block reuses each dy load
inline void outer_block4(double* __restrict dk, const double* __restrict x,
                         const double* __restrict dy, std::size_t cin, std::size_t cout) {
  std::size_t ci = 0;
  for (; ci + 4 <= cin; ci += 4) {
    const double a0 = x[ci], a1 = x[ci + 1], a2 = x[ci + 2], a3 = x[ci + 3];
    double* __restrict k0 = dk + ci * cout;
    double* __restrict k1 = k0 + cout;
    double* __restrict k2 = k1 + cout;
    double* __restrict k3 = k2 + cout;
    for (std::size_t o = 0; o < cout; ++o) {
      const double dv = dy[o];
      k0[o] += a0 * dv;
      k1[o] += a1 * dv;
      k2[o] += a2 * dv;
      k3[o] += a3 * dv;
    }
  }
  for (; ci < cin; ++ci) {
    const double a = x[ci];
    double* __restrict kr = dk + ci * cout;
    for (std::size_t o = 0; o < cout; ++o) kr[o] += a * dy[o];
  }
}

}  // namespace

void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d, bool accumulate) {
  const std::size_t plane = d.rows * d.cols;
  const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
  const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
  parallel_for(d.batch, [&](std::size_t b) {
    const double* xb = x + b * plane * d.cin;
    double* yb = y + b * plane * d.cout;
    if (!accumulate) {
      for (std::size_t p = 0; p < plane; ++p) {
        double* yp = yb + p * d.cout;
        if (bias)
          for (std::size_t co = 0; co < d.cout; ++co) yp[co] = bias[co];
        else
          for (std::size_t co = 0; co < d.cout; ++co) yp[co] = 0.0;
      }
    }
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
      std::size_t lo_y, hi_y;
      valid_range(oy_off, d.rows, lo_y, hi_y);
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
        std::size_t lo_x, hi_x;
        valid_range(ox_off, d.cols, lo_x, hi_x);
        if (lo_x >= hi_x) continue;
        const double* kk = k + (ky * d.kw + kx) * d.cin * d.cout;
        const std::size_t span = hi_x - lo_x;
        for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
          const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
          const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
          const double* xrow = xb + (iy * d.cols + ix0) * d.cin;
          double* yrow = yb + (oy * d.cols + lo_x) * d.cout;
          for (std::size_t p = 0; p < span; ++p)
            accum_block4(yrow + p * d.cout, xrow + p * d.cin, kk, d.cin, d.cout);
        }
      }
    }
  });
}

void conv2d_grad_input(const double* dy, const double* k, double* dx, const Conv2dDims& d) {
  const std::size_t plane = d.rows * d.cols;
  const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
  const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
  // Transposed taps (co major) so the inner accumulation is contiguous.
  std::vector<double> kt(d.kh * d.kw * d.cout * d.cin);
  for (std::size_t t = 0; t < d.kh * d.kw; ++t)
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t co = 0; co < d.cout; ++co)
        kt[t * d.cout * d.cin + co * d.cin + ci] = k[t * d.cin * d.cout + ci * d.cout + co];
  parallel_for(d.batch, [&](std::size_t b) {
    const double* dyb = dy + b * plane * d.cout;
    double* dxb = dx + b * plane * d.cin;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
      std::size_t lo_y, hi_y;
      valid_range(oy_off, d.rows, lo_y, hi_y);
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
        std::size_t lo_x, hi_x;
        valid_range(ox_off, d.cols, lo_x, hi_x);
        if (lo_x >= hi_x) continue;
        const double* kk = kt.data() + (ky * d.kw + kx) * d.cout * d.cin;
        const std::size_t span = hi_x - lo_x;
        for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
          const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
          const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
          const double* dyrow = dyb + (oy * d.cols + lo_x) * d.cout;
          double* dxrow = dxb + (iy * d.cols + ix0) * d.cin;
          for (std::size_t p = 0; p < span; ++p)
            accum_block4(dxrow + p * d.cin, dyrow + p * d.cout, kk, d.cout, d.cin);
        }
      }
    }
  });
}

void conv2d_grad_kernel(const double* x, const double* dy, double* dk, double* dbias,
                        const Conv2dDims& d) {
  const std::size_t plane = d.rows * d.cols;
  const std::size_t ksize = d.kh * d.kw * d.cin * d.cout;
  const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
  const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
  // Per-batch partials reduced in batch order: deterministic for any thread count.
  std::vector<double> partial(d.batch * ksize, 0.0);
  std::vector<double> partial_bias(dbias ? d.batch * d.cout : 0, 0.0);
  parallel_for(d.batch, [&](std::size_t b) {
    const double* xb = x + b * plane * d.cin;
    const double* dyb = dy + b * plane * d.cout;
    double* dkb = partial.data() + b * ksize;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
      std::size_t lo_y, hi_y;
      valid_range(oy_off, d.rows, lo_y, hi_y);
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
        std::size_t lo_x, hi_x;
        valid_range(ox_off, d.cols, lo_x, hi_x);
        if (lo_x >= hi_x) continue;
        double* kk = dkb + (ky * d.kw + kx) * d.cin * d.cout;
        const std::size_t span = hi_x - lo_x;
        for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
          const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
          const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
          const double* xrow = xb + (iy * d.cols + ix0) * d.cin;
          const double* dyrow = dyb + (oy * d.cols + lo_x) * d.cout;
          for (std::size_t p = 0; p < span; ++p)
            outer_block4(kk, xrow + p * d.cin, dyrow + p * d.cout, d.cin, d.cout);
        }
      }
    }
    if (dbias) {
      double* bb = partial_bias.data() + b * d.cout;
      for (std::size_t p = 0; p < plane; ++p) {
        const double* dyp = dyb + p * d.cout;
        for (std::size_t co = 0; co < d.cout; ++co) bb[co] += dyp[co];
      }
    }
  });
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* dkb = partial.data() + b * ksize;
    for (std::size_t i = 0; i < ksize; ++i) dk[i] += dkb[i];
    if (dbias) {
      const double* bb = partial_bias.data() + b * d.cout;
      for (std::size_t co = 0; co < d.cout; ++co) dbias[co] += bb[co];
    }
  }
}

void conv3d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv3dDims& d) {
  const std::size_t plane = d.rows * d.cols;
  const std::size_t frame_in = plane * d.cin;
  const std::size_t frame_out = plane * d.cout;
  const std::ptrdiff_t ct = static_cast<std::ptrdiff_t>(d.kt / 2);
  parallel_for(d.batch, [&](std::size_t b) {
    const double* xb = x + b * d.time * frame_in;
    double* yb = y + b * d.time * frame_out;
    for (std::size_t i = 0; i < d.time * plane; ++i) {
      double* yp = yb + i * d.cout;
      if (bias)
        for (std::size_t co = 0; co < d.cout; ++co) yp[co] = bias[co];
      else
        for (std::size_t co = 0; co < d.cout; ++co) yp[co] = 0.0;
    }
    for (std::size_t kt = 0; kt < d.kt; ++kt) {
      const std::ptrdiff_t ot_off = static_cast<std::ptrdiff_t>(kt) - ct;
      std::size_t lo_t, hi_t;
      valid_range(ot_off, d.time, lo_t, hi_t);
      const double* kslab = k + kt * d.kh * d.kw * d.cin * d.cout;
      for (std::size_t ot = lo_t; ot < hi_t; ++ot) {
        const std::size_t it = ot + static_cast<std::size_t>(ot_off);
        // accumulate one 2-D correlation into the existing output frame
        const double* xf = xb + it * frame_in;
        double* yf = yb + ot * frame_out;
        const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
        const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
          std::size_t lo_y, hi_y;
          valid_range(oy_off, d.rows, lo_y, hi_y);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
            std::size_t lo_x, hi_x;
            valid_range(ox_off, d.cols, lo_x, hi_x);
            if (lo_x >= hi_x) continue;
            const double* kk = kslab + (ky * d.kw + kx) * d.cin * d.cout;
            const std::size_t span = hi_x - lo_x;
            for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
              const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
              const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
              const double* xrow = xf + (iy * d.cols + ix0) * d.cin;
              double* yrow = yf + (oy * d.cols + lo_x) * d.cout;
              for (std::size_t p = 0; p < span; ++p)
                accum_block4(yrow + p * d.cout, xrow + p * d.cin, kk, d.cin, d.cout);
            }
          }
        }
      }
    }
  });
}

void conv3d_grad_input(const double* dy, const double* k, double* dx, const Conv3dDims& d) {
  const std::size_t plane = d.rows * d.cols;
  const std::size_t frame_in = plane * d.cin;
  const std::size_t frame_out = plane * d.cout;
  const std::ptrdiff_t ct = static_cast<std::ptrdiff_t>(d.kt / 2);
  std::vector<double> ktr(d.kt * d.kh * d.kw * d.cout * d.cin);
  for (std::size_t t = 0; t < d.kt * d.kh * d.kw; ++t)
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t co = 0; co < d.cout; ++co)
        ktr[t * d.cout * d.cin + co * d.cin + ci] = k[t * d.cin * d.cout + ci * d.cout + co];
  parallel_for(d.batch, [&](std::size_t b) {
    const double* dyb = dy + b * d.time * frame_out;
    double* dxb = dx + b * d.time * frame_in;
    const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
    const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
    for (std::size_t kt = 0; kt < d.kt; ++kt) {
      const std::ptrdiff_t ot_off = static_cast<std::ptrdiff_t>(kt) - ct;
      std::size_t lo_t, hi_t;
      valid_range(ot_off, d.time, lo_t, hi_t);
      for (std::size_t ot = lo_t; ot < hi_t; ++ot) {
        const std::size_t it = ot + static_cast<std::size_t>(ot_off);
        const double* dyf = dyb + ot * frame_out;
        double* dxf = dxb + it * frame_in;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
          std::size_t lo_y, hi_y;
          valid_range(oy_off, d.rows, lo_y, hi_y);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
            std::size_t lo_x, hi_x;
            valid_range(ox_off, d.cols, lo_x, hi_x);
            if (lo_x >= hi_x) continue;
            const double* kk =
                ktr.data() + ((kt * d.kh + ky) * d.kw + kx) * d.cout * d.cin;
            const std::size_t span = hi_x - lo_x;
            for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
              const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
              const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
              const double* dyrow = dyf + (oy * d.cols + lo_x) * d.cout;
              double* dxrow = dxf + (iy * d.cols + ix0) * d.cin;
              for (std::size_t p = 0; p < span; ++p)
                accum_block4(dxrow + p * d.cin, dyrow + p * d.cout, kk, d.cout, d.cin);
            }
          }
        }
      }
    }
  });
}

void conv3d_grad_kernel(const double* x, const double* dy, double* dk, double* dbias,
                        const Conv3dDims& d) {
  const std::size_t plane = d.rows * d.cols;
  const std::size_t frame_in = plane * d.cin;
  const std::size_t frame_out = plane * d.cout;
  const std::size_t ksize = d.kt * d.kh * d.kw * d.cin * d.cout;
  const std::ptrdiff_t ct = static_cast<std::ptrdiff_t>(d.kt / 2);
  std::vector<double> partial(d.batch * ksize, 0.0);
  std::vector<double> partial_bias(dbias ? d.batch * d.cout : 0, 0.0);
  parallel_for(d.batch, [&](std::size_t b) {
    const double* xb = x + b * d.time * frame_in;
    const double* dyb = dy + b * d.time * frame_out;
    double* dkb = partial.data() + b * ksize;
    const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(d.kh / 2);
    const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(d.kw / 2);
    for (std::size_t kt = 0; kt < d.kt; ++kt) {
      const std::ptrdiff_t ot_off = static_cast<std::ptrdiff_t>(kt) - ct;
      std::size_t lo_t, hi_t;
      valid_range(ot_off, d.time, lo_t, hi_t);
      for (std::size_t ot = lo_t; ot < hi_t; ++ot) {
        const std::size_t it = ot + static_cast<std::size_t>(ot_off);
        const double* xf = xb + it * frame_in;
        const double* dyf = dyb + ot * frame_out;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const std::ptrdiff_t oy_off = static_cast<std::ptrdiff_t>(ky) - cy;
          std::size_t lo_y, hi_y;
          valid_range(oy_off, d.rows, lo_y, hi_y);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::ptrdiff_t ox_off = static_cast<std::ptrdiff_t>(kx) - cx;
            std::size_t lo_x, hi_x;
            valid_range(ox_off, d.cols, lo_x, hi_x);
            if (lo_x >= hi_x) continue;
            double* kk = dkb + ((kt * d.kh + ky) * d.kw + kx) * d.cin * d.cout;
            const std::size_t span = hi_x - lo_x;
            for (std::size_t oy = lo_y; oy < hi_y; ++oy) {
              const std::size_t iy = oy + static_cast<std::size_t>(oy_off);
              const std::size_t ix0 = lo_x + static_cast<std::size_t>(ox_off);
              const double* xrow = xf + (iy * d.cols + ix0) * d.cin;
              const double* dyrow = dyf + (oy * d.cols + lo_x) * d.cout;
              for (std::size_t p = 0; p < span; ++p)
                outer_block4(kk, xrow + p * d.cin, dyrow + p * d.cout, d.cin, d.cout);
            }
          }
        }
      }
    }
    if (dbias) {
      double* bb = partial_bias.data() + b * d.cout;
      for (std::size_t i = 0; i < d.time * plane; ++i) {
        const double* dyp = dyb + i * d.cout;
        for (std::size_t co = 0; co < d.cout; ++co) bb[co] += dyp[co];
      }
    }
  });
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* dkb = partial.data() + b * ksize;
    for (std::size_t i = 0; i < ksize; ++i) dk[i] += dkb[i];
    if (dbias) {
      const double* bb = partial_bias.data() + b * d.cout;
      for (std::size_t co = 0; co < d.cout; ++co) dbias[co] += bb[co];
    }
  }
}

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   std::size_t batch, std::size_t in, std::size_t out) {
  parallel_for_chunks(batch, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      const double* xr = x + r * in;
      double* yr = y + r * out;
      if (b)
        for (std::size_t o = 0; o < out; ++o) yr[o] = b[o];
      else
        for (std::size_t o = 0; o < out; ++o) yr[o] = 0.0;
      accum_block4(yr, xr, w, in, out);
    }
  });
}

void dense_grad_input(const double* dy, const double* w, double* dx, std::size_t batch,
                      std::size_t in, std::size_t out) {
  parallel_for_chunks(batch, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      const double* dyr = dy + r * out;
      double* dxr = dx + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        const double* wr = w + i * out;
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
        dxr[i] += acc;
      }
    }
  });
}

void dense_grad_weight(const double* x, const double* dy, double* dw, double* db,
                       std::size_t batch, std::size_t in, std::size_t out) {
  // single-threaded: weight updates are small compared to the forward pass
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      double* wr = dw + i * out;
      for (std::size_t o = 0; o < out; ++o) wr[o] += a * dyr[o];
    }
    if (db)
      for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
  }
}

}  // namespace aircast::detail
