#ifndef SSMTL_TESTS_SUPPORT_HPP
#define SSMTL_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "ssmtl/ssmtl.hpp"

namespace ssmtl::fixtures {

inline AnnotationSet full_labels(int expression, double v, double a, unsigned au_bits) {
  AnnotationSet s;
  s.affect = AffectPoint{v, a};
  s.expression = expression;
  ActionUnits aus{};
  for (int u = 0; u < kNumActionUnits; ++u) aus[u] = (au_bits >> u) & 1u;
  s.action_units = aus;
  return s;
}

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (double& p : img.pixels) p = uniform(rng, 0.0, 1.0);
  return img;
}

/// Small split with random images and labels. `blank_every` > 0 strips all labels from every
/// blank_every-th sample; `unlabeled_every` > 0 strips only the expression label.
inline Split random_split(std::size_t n, int h, int w, std::uint64_t seed, std::size_t blank_every = 0,
                          std::size_t unlabeled_every = 0) {
  Rng rng(seed);
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    Sample smp;
    smp.image_ref = "s" + std::to_string(i) + ".pgm";
    smp.id = smp.image_ref;
    smp.annotations = full_labels(uniform_int(rng, 0, kNumExpressions - 1), uniform(rng, -0.9, 0.9),
                                  uniform(rng, -0.9, 0.9),
                                  static_cast<unsigned>(uniform_int(rng, 0, (1 << kNumActionUnits) - 1)));
    if (unlabeled_every && i % unlabeled_every == unlabeled_every - 1) smp.annotations.expression.reset();
    if (blank_every && i % blank_every == blank_every - 1) smp.annotations = {};
    s.dataset.samples.push_back(smp);
    s.images.push_back(random_image(h, w, rng));
  }
  return s;
}

inline double max_abs_diff(const Parameters& a, const Parameters& b) {
  std::vector<double> xa, xb;
  a.for_each_layer([&](auto, const Dense& d, auto) {
    xa.insert(xa.end(), d.weight.values().begin(), d.weight.values().end());
    xa.insert(xa.end(), d.bias.begin(), d.bias.end());
  });
  b.for_each_layer([&](auto, const Dense& d, auto) {
    xb.insert(xb.end(), d.weight.values().begin(), d.weight.values().end());
    xb.insert(xb.end(), d.bias.begin(), d.bias.end());
  });
  double m = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) m = std::max(m, std::abs(xa[i] - xb[i]));
  return m;
}

/// Pointers to every scalar of a parameter set, in visit order.
inline std::vector<double*> flat_view(Parameters& p) {
  std::vector<double*> out;
  p.for_each_layer([&](auto, Dense& d, auto) {
    for (double& v : d.weight.values()) out.push_back(&v);
    for (double& v : d.bias) out.push_back(&v);
  });
  return out;
}

/// Non-empty lines of a text.
inline std::vector<std::string> lines(std::string_view text) {
  std::vector<std::string> out;
  for (auto line : split(text, '\n'))
    if (!trim(line).empty()) out.emplace_back(line);
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ssmtl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ssmtl::fixtures

#endif  // SSMTL_TESTS_SUPPORT_HPP
