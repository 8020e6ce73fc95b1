#include <stdexcept>
#include <algorithm>
#include <cmath>
#include <doctest.h>

#include "qfl/quantize.hpp"
#include "qfl/rng.hpp"

using namespace qfl::quant;

namespace {

// Independent double-precision model of the log quantizer: l = ln(x + eps),
// block scales stored as FP32, code = nearest of 256 levels.
uint8_t log_code_oracle(double x, float lo, float hi, double eps) {
  const double l = std::log(x + eps);
  const double r = static_cast<double>(hi) - static_cast<double>(lo);
  if (r <= 0.0) return 0;
  const double t = (l - static_cast<double>(lo)) * 255.0 / r;
  const long q = static_cast<long>(std::floor(t + 0.5));
  return static_cast<uint8_t>(std::clamp(q, 0L, 255L));
}

}  // namespace

TEST_CASE("linear quantization hand example") {
  const std::vector<float> x{0.0f, 0.5f, 1.0f};
  const auto qt = quantize_linear(x, 4);
  REQUIRE(qt.num_blocks() == 1);
  CHECK(qt.lo[0] == 0.0f);
  CHECK(qt.hi[0] == 1.0f);
  REQUIRE(qt.payload.size() == 4);
  CHECK(qt.payload[0] == 0);
  CHECK(qt.payload[1] == 127);  // floor(0.5 * 255) = floor(127.5)
  CHECK(qt.payload[2] == 255);
  CHECK(qt.payload[3] == 0);  // padding

  const auto back = dequantize_linear(qt);
  REQUIRE(back.size() == 3);
  CHECK(back[0] == 0.0f);
  CHECK(std::abs(back[1] - 127.0 / 255.0) < 1e-7);
  CHECK(back[2] == 1.0f);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(static_cast<double>(back[i]) - x[i]) <= 1.0 / 255.0);
  }
}

TEST_CASE("constant block dequantizes exactly") {
  const std::vector<float> x{2.75f, 2.75f, 2.75f};
  const auto qt = quantize_linear(x, 4);
  CHECK(qt.payload[0] == 0);
  CHECK(qt.payload[1] == 0);
  CHECK(qt.payload[2] == 0);
  const auto back = dequantize_linear(qt);
  for (float v : back) CHECK(v == 2.75f);
}

TEST_CASE("serialized block layout is B + 8 bytes plus the 20-byte header") {
  std::vector<float> x(64, 0.0f);
  qfl::nd::RngStream rng(42, 0);
  x = rng.gaussian_array(64, 0.0f, 1.0f);
  const auto qt = quantize_linear(x, 64);
  const auto bytes = to_bytes(qt);
  CHECK(bytes.size() == 92);  // 20 header + 64 payload + 8 metadata

  const auto report = memory_report(qt);
  CHECK(report.payload_bytes == 64);
  CHECK(report.metadata_bytes == 8);
  CHECK(report.padding_bytes == 0);
  CHECK(report.total_bytes == 72);
  CHECK(report.fp32_equivalent_bytes == 256);
  CHECK(report.compression_ratio == 256.0 / 72.0);
}

TEST_CASE("memory report with padding") {
  std::vector<float> x(65, 1.0f);
  const auto qt = quantize_linear(x, 64);
  CHECK(qt.num_blocks() == 2);
  const auto report = memory_report(qt);
  CHECK(report.payload_bytes == 128);
  CHECK(report.padding_bytes == 63);
  CHECK(report.metadata_bytes == 16);
  CHECK(report.total_bytes == 144);
}

TEST_CASE("linear quantizer input validation") {
  std::vector<float> x{1.0f};
  CHECK_THROWS_AS(quantize_linear(x, 0), std::invalid_argument);
  std::vector<float> bad{std::nanf("")};
  CHECK_THROWS_AS(quantize_linear(bad, 4), std::domain_error);
  const auto qt = quantize_linear(x, 4);
  CHECK_THROWS_AS(dequantize_log(qt), std::invalid_argument);
}

TEST_CASE("linear round-trip bound on random gaussian arrays") {
  qfl::nd::RngStream rng(42, 10);
  const uint32_t block_sizes[] = {1, 32, 64, 128};
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    const float mean = static_cast<float>(rng.gaussian(0.0, 1.0));
    const float stddev = static_cast<float>(0.1 + 2.0 * rng.next_unit());
    const auto x = rng.gaussian_array(n, mean, stddev);
    const uint32_t b = block_sizes[trial % 4];
    const auto qt = quantize_linear(x, b);
    const auto back = dequantize_linear(qt);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t blk = i / b;
      const double bound =
          (static_cast<double>(qt.hi[blk]) - static_cast<double>(qt.lo[blk])) / 255.0;
      CHECK(std::abs(static_cast<double>(back[i]) - static_cast<double>(x[i])) <= bound);
    }
  }
}

TEST_CASE("log quantization hand example") {
  const std::vector<float> x{1e-8f, 1e-4f, 1.0f};
  const auto qt = quantize_log(x, 4, 1e-8f);
  REQUIRE(qt.num_blocks() == 1);
  // Independent recomputation of the expected codes.
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(qt.payload[i] == log_code_oracle(x[i], qt.lo[0], qt.hi[0], 1e-8));
  }
  CHECK(qt.payload[0] == 0);
  CHECK(qt.payload[1] == 123);
  CHECK(qt.payload[2] == 255);
}

TEST_CASE("all-zero variance dequantizes to (almost exactly) zero") {
  const std::vector<float> x(100, 0.0f);
  const auto qt = quantize_log(x, 64, 1e-8f);
  CHECK(qt.num_blocks() == 2);
  for (uint8_t q : qt.payload) CHECK(q == 0);
  CHECK(qt.lo[0] == qt.hi[0]);
  const auto back = dequantize_log(qt);
  for (float v : back) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1e-9f);
  }
}

TEST_CASE("log quantizer input validation") {
  std::vector<float> neg{-1.0f};
  CHECK_THROWS_AS(quantize_log(neg, 4), std::domain_error);
  std::vector<float> zero{0.0f};
  CHECK_THROWS_AS(quantize_log(zero, 4, 0.0f), std::domain_error);
  CHECK_NOTHROW(quantize_log(zero, 4, 1e-8f));
  const auto qt = quantize_log(std::vector<float>{1.0f}, 4);
  CHECK_THROWS_AS(dequantize_linear(qt), std::invalid_argument);
}

TEST_CASE("log round-trip: singleton block is exact within FP32 rounding") {
  const std::vector<float> x{1e-6f};
  const auto qt = quantize_log(x, 1, 1e-8f);
  const auto back = dequantize_log(qt);
  CHECK(back[0] == doctest::Approx(1e-6f).epsilon(1e-6));
}

TEST_CASE("log round-trip relative error bound") {
  qfl::nd::RngStream rng(42, 11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    // Log-uniform over a random span inside [1e-9, 1e1].
    const double lo_exp = -9.0 + 8.0 * rng.next_unit();
    const double width = 0.5 + 9.0 * rng.next_unit();
    std::vector<float> x(n);
    for (auto& v : x) {
      v = static_cast<float>(std::pow(10.0, lo_exp + width * rng.next_unit()));
    }
    const auto qt = quantize_log(x, 64, 1e-8f);
    const auto back = dequantize_log(qt);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(back[i] >= 0.0f);
      if (x[i] < 1e-7f) continue;  // below 10 * epsilon the bound is not claimed
      const std::size_t blk = i / 64;
      const double range =
          static_cast<double>(qt.hi[blk]) - static_cast<double>(qt.lo[blk]);
      const double bound = std::exp(range / 255.0) - 1.0 + 1e-6;
      const double rel =
          std::abs(static_cast<double>(back[i]) - static_cast<double>(x[i])) /
          static_cast<double>(x[i]);
      CHECK(rel <= bound);
    }
  }
}

TEST_CASE("codes are monotone in the input within a block") {
  qfl::nd::RngStream rng(42, 12);
  auto x = rng.gaussian_array(64, 0.0f, 2.0f);
  std::sort(x.begin(), x.end());
  const auto qt = quantize_linear(x, 64);
  for (std::size_t i = 1; i < x.size(); ++i) CHECK(qt.payload[i] >= qt.payload[i - 1]);

  std::vector<float> pos(64);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = std::abs(x[i]) + 1e-6f;
  std::sort(pos.begin(), pos.end());
  const auto ql = quantize_log(pos, 64);
  for (std::size_t i = 1; i < pos.size(); ++i) CHECK(ql.payload[i] >= ql.payload[i - 1]);
}

TEST_CASE("re-quantization is idempotent") {
  qfl::nd::RngStream rng(42, 13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const auto x = rng.gaussian_array(n, static_cast<float>(rng.gaussian(0.0, 1.0)), 1.0f);
    const auto q1 = quantize_linear(x, 32);
    const auto q2 = quantize_linear(dequantize_linear(q1), 32);
    CHECK(q1.payload == q2.payload);
    CHECK(q1.lo == q2.lo);
    CHECK(q1.hi == q2.hi);

    std::vector<float> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = x[i] * x[i];
    const auto l1 = quantize_log(pos, 32);
    const auto l2 = quantize_log(dequantize_log(l1), 32);
    CHECK(l1.payload == l2.payload);
    CHECK(l1.lo == l2.lo);
    CHECK(l1.hi == l2.hi);
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  qfl::nd::RngStream rng(42, 14);
  const auto x = rng.gaussian_array(100, 0.0f, 1.0f);
  const auto qt = quantize_linear(x, 32);
  const auto bytes = to_bytes(qt);
  const auto qt2 = from_bytes(bytes);
  CHECK(qt2.payload == qt.payload);
  CHECK(qt2.lo == qt.lo);
  CHECK(qt2.hi == qt.hi);
  CHECK(qt2.block_size == qt.block_size);
  CHECK(qt2.original_len == qt.original_len);
  CHECK(qt2.mode == qt.mode);
  CHECK(dequantize(qt2) == dequantize(qt));

  std::vector<float> pos(100);
  for (std::size_t i = 0; i < 100; ++i) pos[i] = x[i] * x[i] + 1e-9f;
  const auto ql = quantize_log(pos, 32, 1e-8f);
  const auto ql2 = from_bytes(to_bytes(ql), 1e-8f);
  CHECK(ql2.payload == ql.payload);
  CHECK(dequantize(ql2) == dequantize(ql));
}

TEST_CASE("deserialization rejects malformed input") {
  const auto qt = quantize_linear(std::vector<float>{1.0f, 2.0f}, 2);
  auto bytes = to_bytes(qt);

  auto corrupted = bytes;
  corrupted[0] = 'X';
  CHECK_THROWS_AS(from_bytes(corrupted), std::runtime_error);

  corrupted = bytes;
  corrupted[4] = 99;
  CHECK_THROWS_AS(from_bytes(corrupted), std::runtime_error);

  corrupted = bytes;
  corrupted.pop_back();
  CHECK_THROWS_AS(from_bytes(corrupted), std::runtime_error);

  corrupted = bytes;
  corrupted[6] = 7;  // unknown mode
  CHECK_THROWS_AS(from_bytes(corrupted), std::runtime_error);

  CHECK_THROWS_AS(from_bytes(std::vector<uint8_t>(5, 0)), std::runtime_error);
}

TEST_CASE("large-tensor memory accounting matches the 2.25N rule") {
  std::vector<float> x(10'000'000, 0.0f);
  const auto qt = quantize_linear(x, 64);
  const auto report = memory_report(qt);
  CHECK(report.total_bytes == 11'250'000);  // one state; two states = 22.5 MB
  CHECK(report.fp32_equivalent_bytes == 40'000'000);
}

TEST_CASE("dynamic tree decode table matches the documented bit layout") {
  const auto& table = dynamic_tree_table();
  for (int c = 0; c < 256; ++c) {
    const bool neg = (c & 0x80) != 0;
    int e = 0;
    int bit = 6;
    while (bit >= 0 && ((c >> bit) & 1)) {
      ++e;
      --bit;
    }
    double expected;
    if (e == 7) {
      expected = 1e-7;
    } else {
      const int fbits = 6 - e;
      const uint32_t frac = static_cast<uint32_t>(c) & ((1u << fbits) - 1u);
      expected = std::pow(10.0, -e) * (fbits > 0 ? frac / static_cast<double>(1u << fbits) : 1.0);
    }
    if (neg) expected = -expected;
    CHECK(table[static_cast<std::size_t>(c)] == doctest::Approx(expected).epsilon(1e-7));
  }
}

TEST_CASE("dynamic tree handles zero and absmax") {
  const std::vector<float> zero{0.0f};
  const auto z = quantize_dynamic_tree(zero);
  CHECK(z.codes[0] == 0);
  CHECK(dequantize_dynamic_tree(z)[0] == 0.0f);

  const std::vector<float> zeros(8, 0.0f);
  const auto zz = quantize_dynamic_tree(zeros);
  CHECK(zz.absmax == 0.0f);
  for (uint8_t c : zz.codes) CHECK(c == 0);

  const std::vector<float> x{0.5f, 2.0f};
  const auto dt = quantize_dynamic_tree(x);
  const auto back = dequantize_dynamic_tree(dt);
  CHECK(std::abs(back[1] - 2.0f) / 2.0f <= 1.0f / 64.0f);  // absmax within 1/2^6
}

TEST_CASE("dynamic tree encode picks the nearest code") {
  const auto& table = dynamic_tree_table();
  qfl::nd::RngStream rng(42, 15);
  std::vector<float> x(256);
  for (auto& v : x) v = static_cast<float>(rng.gaussian(0.0, 0.3));
  const auto dt = quantize_dynamic_tree(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = x[i] / static_cast<double>(dt.absmax);
    double best = 1e300;
    for (int c = 0; c < 256; ++c) {
      best = std::min(best, std::abs(static_cast<double>(table[static_cast<std::size_t>(c)]) - y));
    }
    const double got = std::abs(static_cast<double>(table[dt.codes[i]]) - y);
    CHECK(got <= best + 1e-12);
  }
}

TEST_CASE("dynamic tree starves small magnitudes relative to log-space") {
  qfl::nd::RngStream rng(42, 16);
  const std::size_t n = 1000;
  std::vector<float> x(n);
  for (auto& v : x) {
    v = static_cast<float>(std::pow(10.0, -7.0 + 7.0 * rng.next_unit()));
  }
  const auto lt = quantize_log(x, 64);
  const auto lrec = dequantize_log(lt);
  const auto dt = quantize_dynamic_tree(x);
  const auto drec = dequantize_dynamic_tree(dt);
  double log_err = 0.0, tree_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    log_err += std::abs(lrec[i] - x[i]) / x[i];
    tree_err += std::abs(drec[i] - x[i]) / x[i];
  }
  CHECK(tree_err >= 10.0 * log_err);
}
