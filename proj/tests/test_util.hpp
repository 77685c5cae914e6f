// Shared independent oracles for the test suites. These deliberately
// duplicate functionality with straightforward reference algorithms; they
// must never call the library code paths they are used to check.
#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace oracle {

// Reference splitmix64 stream, written from the published algorithm.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}
  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

// Naive i-j-k triple-loop product, scalar accumulator.
inline std::vector<double> naive_matmul(const std::vector<double>& a, size_t ar, size_t ac,
                                        const std::vector<double>& b, size_t bc) {
  std::vector<double> c(ar * bc, 0.0);
  for (size_t i = 0; i < ar; ++i)
    for (size_t j = 0; j < bc; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < ac; ++k) acc += a[i * ac + k] * b[k * bc + j];
      c[i * bc + j] = acc;
    }
  return c;
}

// Brute-force 3x3 median with mirror (no edge duplication) padding.
inline long reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = std::labs(i) % period;
  return i < n ? i : period - i;
}

inline std::vector<double> median_blur3(const std::vector<double>& img, long h, long w, long c) {
  std::vector<double> out(img.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (long ch = 0; ch < c; ++ch) {
        std::vector<double> v;
        v.reserve(9);
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx)
            v.push_back(img[(reflect(y + dy, h) * w + reflect(x + dx, w)) * c + ch]);
        std::sort(v.begin(), v.end());
        out[(y * w + x) * c + ch] = v[4];
      }
  return out;
}

// Reference Adam iterate on a scalar, straight from the update equations.
struct AdamRef {
  double m = 0.0, v = 0.0;
  long t = 0;
  double step(double theta, double grad, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8) {
    ++t;
    m = beta1 * m + (1 - beta1) * grad;
    v = beta2 * v + (1 - beta2) * grad * grad;
    const double mhat = m / (1 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(beta2, static_cast<double>(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Rule simulation of the reduce-on-plateau semantics: improvement beats
// best by > 1e-8; cooldown freezes the bad counter; reduction fires when
// bad exceeds patience.
struct PlateauRef {
  double best = -1e300;
  int bad = 0;
  int cool = 0;
  int patience = 2;
  int cooldown = 2;
  bool feed(double score) {
    const bool improved = score > best + 1e-8;
    if (improved) {
      best = score;
      bad = 0;
    }
    if (cool > 0)
      --cool;
    else if (!improved)
      ++bad;
    if (bad > patience) {
      bad = 0;
      cool = cooldown;
      return true;
    }
    return false;
  }
};

// Per-sample F2 via set arithmetic on std::vector<int>.
inline double f2_ref(std::vector<int> pred, std::vector<int> truth) {
  std::sort(pred.begin(), pred.end());
  std::sort(truth.begin(), truth.end());
  if (pred.empty() && truth.empty()) return 1.0;
  if (pred.empty() || truth.empty()) return 0.0;
  std::vector<int> inter;
  std::set_intersection(pred.begin(), pred.end(), truth.begin(), truth.end(),
                        std::back_inserter(inter));
  const double tp = static_cast<double>(inter.size());
  const double p = tp / static_cast<double>(pred.size());
  const double r = tp / static_cast<double>(truth.size());
  if (p == 0.0 && r == 0.0) return 0.0;
  return 5.0 * p * r / (4.0 * p + r);
}

// Spearman rank correlation; assumes no ties (curve points are generic).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i + 1);
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0.0;
  for (size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

// Unique scratch directory under the build tree.
inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("geoshift_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
