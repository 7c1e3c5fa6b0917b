#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace dtr {

// Philox4x32-10 counter-based generator. Output is a pure function of
// (key, counter), so any subject/fold/stage can address its own stream
// without sequencing through the others.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Labeled seed splitting (FNV-1a over the label mixed into the parent seed).
std::uint64_t split_seed(std::uint64_t seed, std::string_view label);
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

// Standard normal quantile function.
double normal_quantile(double p);
double normal_cdf(double x);
double normal_pdf(double x);

// Sequential draws from one addressed stream (key, stream id).
class RandomStream {
 public:
  RandomStream(std::uint64_t key, std::uint64_t stream);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  // Inverse-CDF standard normal.
  double normal();
  bool bernoulli(double p);

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
};

}  // namespace dtr
