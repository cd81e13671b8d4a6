#include "tma/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tma/error.hpp"

namespace tma {
namespace {

void check_nonnegative(const Tensor& t) {
  if (t.empty()) fail(ErrorKind::InvalidInput, "cannot pool an empty tensor");
  bool any = false;
  for (double v : t.values()) {
    if (v < 0.0 || std::isnan(v))
      fail(ErrorKind::InvalidArgument, "pooling expects nonnegative activations");
    any = any || v > 0.0;
  }
  if (!any) fail(ErrorKind::UndefinedDirection, "all-zero activation tensor has no direction");
}

// Max over a region of one channel; returns flat plane index of the maximum.
int region_argmax(std::span<const double> plane, int width, const Region& r) {
  int best = r.y * width + r.x;
  for (int y = r.y; y < r.y + r.height; ++y)
    for (int x = r.x; x < r.x + r.width; ++x)
      if (plane[y * width + x] > plane[best]) best = y * width + x;
  return best;
}

std::vector<double> crow_spatial_sums(const Tensor& t) {
  std::vector<double> z(t.shape().plane(), 0.0);
  for (int c = 0; c < t.channels(); ++c) {
    const auto plane = t.channel(c);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += plane[i];
  }
  return z;
}

// Spatial weights (Z/|Z|_2)^(1/2) with Z clamped at kGemEpsilon.
std::vector<double> crow_spatial_weights(const std::vector<double>& z, double& norm) {
  std::vector<double> s(z.size());
  double total = 0.0;
  for (double v : z) total += std::max(v, kGemEpsilon) * std::max(v, kGemEpsilon);
  norm = std::sqrt(total);
  for (std::size_t i = 0; i < z.size(); ++i) s[i] = std::sqrt(std::max(z[i], kGemEpsilon) / norm);
  return s;
}

}  // namespace

PoolingKind PoolingKind::gem(double p) {
  if (!(p > 0.0)) fail(ErrorKind::InvalidArgument, "GeM exponent must be positive");
  return {PoolingType::GeM, p};
}

std::string PoolingKind::name() const {
  switch (type) {
    case PoolingType::MAC: return "MAC";
    case PoolingType::SPoC: return "SPoC";
    case PoolingType::GeM: {
      if (p == 3.0) return "GeM";
      std::string s = std::to_string(p);
      s.erase(s.find_last_not_of('0') + 1);
      if (s.back() == '.') s.pop_back();
      return "GeM(p=" + s + ")";
    }
    case PoolingType::RMAC: return "R-MAC";
    case PoolingType::CroW: return "CroW";
  }
  return "?";
}

PoolingKind PoolingKind::parse(const std::string& text) {
  std::string t;
  for (char ch : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (t == "mac") return mac();
  if (t == "spoc") return spoc();
  if (t == "gem") return gem();
  if (t == "rmac" || t == "r-mac") return rmac();
  if (t == "crow") return crow();
  if (t.rfind("gem(p=", 0) == 0 && t.back() == ')') {
    try {
      return gem(std::stod(t.substr(6, t.size() - 7)));
    } catch (const std::logic_error&) {
    }
  }
  fail(ErrorKind::Configuration, "unknown pooling '" + text + "'");
}

std::vector<Region> rmac_regions(int width, int height, int levels) {
  const double overlap = 0.4;
  const int steps[] = {2, 3, 4, 5, 6, 7};
  const int w = std::min(width, height);

  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 6; ++i) {
    const double b = static_cast<double>(std::max(width, height) - w) / (steps[i] - 1);
    const double err = std::abs((static_cast<double>(w) * w - w * b) / (static_cast<double>(w) * w) - overlap);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  const int extra_w = height < width ? best + 1 : 0;
  const int extra_h = height > width ? best + 1 : 0;

  std::vector<Region> regions{Region{0, 0, width, height}};
  for (int l = 1; l <= levels; ++l) {
    const int wl = static_cast<int>(std::floor(2.0 * w / (l + 1)));
    if (wl == 0) continue;
    const double wl2 = std::floor(wl / 2.0 - 1.0);
    auto centers = [&](int extent, int extra) {
      const double b = (l + extra == 1) ? 0.0 : static_cast<double>(extent - wl) / (l + extra - 1);
      std::vector<int> c;
      for (int k = 0; k < l + extra; ++k) c.push_back(static_cast<int>(std::floor(wl2 + k * b) - wl2));
      return c;
    };
    for (int cy : centers(height, extra_h))
      for (int cx : centers(width, extra_w)) regions.push_back(Region{cx, cy, wl, wl});
  }
  return regions;
}

std::vector<double> crow_channel_weights(const Tensor& t) {
  std::vector<double> q(t.channels(), 0.0);
  for (int c = 0; c < t.channels(); ++c) {
    const auto plane = t.channel(c);
    q[c] = static_cast<double>(std::count_if(plane.begin(), plane.end(),
                                             [](double v) { return v != 0.0; })) /
           static_cast<double>(plane.size());
  }
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  for (double& v : q) v = v > 0.0 ? std::log(total / v) : 0.0;
  return q;
}

std::vector<double> pool_raw(const Tensor& t, PoolingKind kind) {
  check_nonnegative(t);
  const int d = t.channels();
  std::vector<double> out(d, 0.0);
  switch (kind.type) {
    case PoolingType::MAC:
      for (int c = 0; c < d; ++c) {
        const auto plane = t.channel(c);
        out[c] = *std::max_element(plane.begin(), plane.end());
      }
      break;
    case PoolingType::SPoC:
      for (int c = 0; c < d; ++c) {
        const auto plane = t.channel(c);
        out[c] = std::accumulate(plane.begin(), plane.end(), 0.0);
      }
      break;
    case PoolingType::GeM:
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (double v : t.channel(c)) acc += std::pow(std::max(v, kGemEpsilon), kind.p);
        out[c] = std::pow(acc / static_cast<double>(t.shape().plane()), 1.0 / kind.p);
      }
      break;
    case PoolingType::RMAC:
      for (const Region& r : rmac_regions(t.width(), t.height())) {
        std::vector<double> v(d);
        double norm2 = 0.0;
        for (int c = 0; c < d; ++c) {
          const auto plane = t.channel(c);
          v[c] = plane[region_argmax(plane, t.width(), r)];
          norm2 += v[c] * v[c];
        }
        const double scale = 1.0 / (std::sqrt(norm2) + kRmacEpsilon);
        for (int c = 0; c < d; ++c) out[c] += v[c] * scale;
      }
      break;
    case PoolingType::CroW: {
      double norm = 0.0;
      const auto s = crow_spatial_weights(crow_spatial_sums(t), norm);
      const auto omega = crow_channel_weights(t);
      for (int c = 0; c < d; ++c) {
        const auto plane = t.channel(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < plane.size(); ++i) acc += s[i] * plane[i];
        out[c] = omega[c] * acc;
      }
      break;
    }
  }
  return out;
}

Tensor pool_raw_backward(const Tensor& t, PoolingKind kind, std::span<const double> g) {
  const int d = t.channels();
  if (static_cast<int>(g.size()) != d)
    fail(ErrorKind::InvalidArgument, "pooling gradient has wrong dimension");
  Tensor grad(t.shape());
  const double n = static_cast<double>(t.shape().plane());
  switch (kind.type) {
    case PoolingType::MAC:
      for (int c = 0; c < d; ++c) {
        const auto plane = t.channel(c);
        const auto it = std::max_element(plane.begin(), plane.end());
        grad.channel(c)[it - plane.begin()] = g[c];
      }
      break;
    case PoolingType::SPoC:
      for (int c = 0; c < d; ++c)
        for (double& v : grad.channel(c)) v = g[c];
      break;
    case PoolingType::GeM: {
      const auto f = pool_raw(t, kind);
      for (int c = 0; c < d; ++c) {
        const double coeff = g[c] * std::pow(f[c], 1.0 - kind.p) / n;
        const auto plane = t.channel(c);
        auto dst = grad.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i)
          dst[i] = plane[i] > kGemEpsilon ? coeff * std::pow(plane[i], kind.p - 1.0) : 0.0;
      }
      break;
    }
    case PoolingType::RMAC:
      for (const Region& r : rmac_regions(t.width(), t.height())) {
        std::vector<int> arg(d);
        std::vector<double> v(d);
        double norm2 = 0.0;
        for (int c = 0; c < d; ++c) {
          const auto plane = t.channel(c);
          arg[c] = region_argmax(plane, t.width(), r);
          v[c] = plane[arg[c]];
          norm2 += v[c] * v[c];
        }
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) continue;
        // u = v / (|v| + eps): du/dv = I/(|v|+eps) - v v^T / (|v| (|v|+eps)^2)
        const double denom = norm + kRmacEpsilon;
        double gv = 0.0;
        for (int c = 0; c < d; ++c) gv += g[c] * v[c];
        for (int c = 0; c < d; ++c) {
          const double dv = g[c] / denom - v[c] * gv / (norm * denom * denom);
          grad.channel(c)[arg[c]] += dv;
        }
      }
      break;
    case PoolingType::CroW: {
      const auto z = crow_spatial_sums(t);
      double norm = 0.0;
      const auto s = crow_spatial_weights(z, norm);
      const auto omega = crow_channel_weights(t);
      // a[i] = sum_k g_k omega_k X_k[i]
      std::vector<double> a(z.size(), 0.0);
      for (int c = 0; c < d; ++c) {
        const auto plane = t.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) a[i] += g[c] * omega[c] * plane[i];
      }
      // dS_i/dZ_j = (delta_ij / N - Z_i Z_j / N^3) / (2 S_i), Z clamped.
      double coupling = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i)
        coupling += a[i] * std::max(z[i], kGemEpsilon) / (2.0 * s[i]);
      std::vector<double> dz(z.size(), 0.0);
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] <= kGemEpsilon) continue;
        dz[i] = a[i] / (2.0 * s[i] * norm) - z[i] * coupling / (norm * norm * norm);
      }
      for (int c = 0; c < d; ++c) {
        auto dst = grad.channel(c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = g[c] * omega[c] * s[i] + dz[i];
      }
      break;
    }
  }
  return grad;
}

Descriptor pool(const Tensor& tensor, PoolingKind kind) {
  return Descriptor::normalized(pool_raw(tensor, kind));
}

std::vector<double> normalized_dot_gradient(std::span<const double> v,
                                            std::span<const double> direction) {
  double norm2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    norm2 += v[i] * v[i];
    dot += v[i] * direction[i];
  }
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) fail(ErrorKind::UndefinedDirection, "zero pooled vector");
  std::vector<double> g(v.size());
  const double cos = dot / norm;
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = (direction[i] - v[i] / norm * cos) / norm;
  return g;
}

}  // namespace tma
