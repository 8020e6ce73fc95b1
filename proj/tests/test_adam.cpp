#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "qfl/adam.hpp"
#include "qfl/quantize.hpp"
#include "qfl/rng.hpp"

using namespace qfl;
using nd::DenseTensor;
using optim::AdamState;
using optim::Hyper;
using optim::Mode;

namespace {

struct Setup {
  std::vector<DenseTensor> params;
  std::vector<DenseTensor> grads;
  std::vector<nd::DenseTensor*> param_ptrs;
  std::vector<std::size_t> sizes;
};

Setup make_setup(std::size_t n, uint64_t seed, float grad_scale = 1.0f) {
  Setup s;
  nd::RngStream rng(seed, 200);
  s.params.emplace_back(std::vector<std::size_t>{n}, rng.gaussian_array(n, 0.0f, 1.0f));
  s.grads.emplace_back(std::vector<std::size_t>{n}, rng.gaussian_array(n, 0.0f, grad_scale));
  s.param_ptrs.push_back(&s.params[0]);
  s.sizes.push_back(n);
  return s;
}

}  // namespace

TEST_CASE("storage pairing per mode") {
  using optim::Storage;
  auto p = optim::storage_for(Mode::kFp32);
  CHECK(p.momentum == Storage::kFp32);
  CHECK(p.variance == Storage::kFp32);
  p = optim::storage_for(Mode::kQLocalAdam);
  CHECK(p.momentum == Storage::kLinearInt8);
  CHECK(p.variance == Storage::kLogInt8);
  p = optim::storage_for(Mode::kNaiveInt8);
  CHECK(p.momentum == Storage::kLinearInt8);
  CHECK(p.variance == Storage::kLinearInt8);
  p = optim::storage_for(Mode::kMomentumOnly);
  CHECK(p.momentum == Storage::kLinearInt8);
  CHECK(p.variance == Storage::kFp32);
  p = optim::storage_for(Mode::kVarianceOnly);
  CHECK(p.momentum == Storage::kFp32);
  CHECK(p.variance == Storage::kLogInt8);

  for (auto mode : {Mode::kFp32, Mode::kQLocalAdam, Mode::kNaiveInt8, Mode::kMomentumOnly,
                    Mode::kVarianceOnly}) {
    CHECK(optim::mode_from_name(optim::mode_name(mode)) == mode);
  }
  CHECK_THROWS_AS(optim::mode_from_name("int4"), std::invalid_argument);
}

TEST_CASE("fresh state is zero in every storage format") {
  for (auto mode : {Mode::kFp32, Mode::kQLocalAdam, Mode::kNaiveInt8, Mode::kMomentumOnly,
                    Mode::kVarianceOnly}) {
    std::vector<std::size_t> sizes{100};
    AdamState st(sizes, mode, Hyper{}, 64);
    CHECK(st.step_count() == 0);
    for (float v : st.momentum(0)) CHECK(std::abs(v) <= 1e-9f);
    for (float v : st.variance(0)) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1e-9f);
    }
  }
}

TEST_CASE("first step: bias correction cancels") {
  auto s = make_setup(64, 1);
  const auto theta0 = s.params[0].data;
  AdamState st(s.sizes, Mode::kFp32, Hyper{}, 64);
  st.step(s.param_ptrs, s.grads);
  CHECK(st.step_count() == 1);

  // m-hat == g and v-hat == g^2 exactly cancel, so the update is
  // -lr * g / (|g| + eps), i.e. close to -lr * sign(g).
  const Hyper h;
  for (std::size_t i = 0; i < 64; ++i) {
    const float g = s.grads[0].data[i];
    const double expected = -static_cast<double>(h.lr) * g / (std::abs(g) + h.eps);
    const double got = static_cast<double>(s.params[0].data[i]) - theta0[i];
    // The observed delta carries the rounding of theta0 - update (half an
    // ulp of theta0) on top of the update's own float noise.
    const double tol = 1e-5 * std::abs(expected) + 1.2e-7 * std::abs(theta0[i]) + 1e-10;
    CHECK(std::abs(got - expected) <= tol);
  }
}

TEST_CASE("zero gradients are a fixed point from zero state") {
  auto s = make_setup(32, 2);
  std::fill(s.grads[0].data.begin(), s.grads[0].data.end(), 0.0f);
  for (auto mode : {Mode::kFp32, Mode::kQLocalAdam, Mode::kNaiveInt8}) {
    auto params = s.params;
    std::vector<nd::DenseTensor*> ptrs{&params[0]};
    AdamState st(s.sizes, mode, Hyper{}, 64);
    for (int step = 0; step < 5; ++step) st.step(ptrs, s.grads);
    CHECK(params[0].data == s.params[0].data);
  }
}

TEST_CASE("first-step update is bit-identical between FP32 and quantized modes") {
  auto s = make_setup(200, 3);
  auto params_fp = s.params;
  auto params_q = s.params;
  std::vector<nd::DenseTensor*> fp_ptrs{&params_fp[0]};
  std::vector<nd::DenseTensor*> q_ptrs{&params_q[0]};
  AdamState fp(s.sizes, Mode::kFp32, Hyper{}, 64);
  AdamState q(s.sizes, Mode::kQLocalAdam, Hyper{}, 64);
  fp.step(fp_ptrs, s.grads);
  q.step(q_ptrs, s.grads);
  CHECK(std::memcmp(params_fp[0].data.data(), params_q[0].data.data(), 200 * sizeof(float)) == 0);
}

TEST_CASE("FP32 and quantized trajectories stay close under constant gradients") {
  auto s = make_setup(128, 4, 0.1f);
  auto params_fp = s.params;
  auto params_q = s.params;
  std::vector<nd::DenseTensor*> fp_ptrs{&params_fp[0]};
  std::vector<nd::DenseTensor*> q_ptrs{&params_q[0]};
  AdamState fp(s.sizes, Mode::kFp32, Hyper{}, 64);
  AdamState q(s.sizes, Mode::kQLocalAdam, Hyper{}, 64);
  for (int step = 0; step < 10; ++step) {
    fp.step(fp_ptrs, s.grads);
    q.step(q_ptrs, s.grads);
  }
  for (std::size_t i = 0; i < 128; ++i) {
    const double a = params_fp[0].data[i], b = params_q[0].data[i];
    CHECK(std::abs(a - b) <= 1e-3 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("one step of storage error stays within the quantizer bounds") {
  // Both paths start from the same dequantized state, so the only divergence
  // after one step is the re-quantization of m and v.
  const std::size_t n = 256;
  nd::RngStream rng(5, 0);
  const auto m0_raw = rng.gaussian_array(n, 0.0f, 0.05f);
  std::vector<float> v0_raw(n);
  for (auto& v : v0_raw) {
    const float g = static_cast<float>(rng.gaussian(0.0, 0.03));
    v = g * g;
  }
  const auto m0_q = quant::quantize_linear(m0_raw, 64);
  const auto v0_q = quant::quantize_log(v0_raw, 64, 1e-8f);
  const auto m0 = quant::dequantize_linear(m0_q);
  const auto v0 = quant::dequantize_log(v0_q);

  const Hyper h;
  nd::RngStream grng(5, 1);
  const auto g = grng.gaussian_array(n, 0.0f, 0.05f);

  // FP32 reference update from the shared starting state.
  std::vector<float> m_ref(n), v_ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    m_ref[i] = h.beta1 * m0[i] + (1.0f - h.beta1) * g[i];
    v_ref[i] = h.beta2 * v0[i] + (1.0f - h.beta2) * g[i] * g[i];
  }

  const auto m_stored_q = quant::quantize_linear(m_ref, 64);
  const auto v_stored_q = quant::quantize_log(v_ref, 64, 1e-8f);
  const auto m_stored = quant::dequantize_linear(m_stored_q);
  const auto v_stored = quant::dequantize_log(v_stored_q);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i / 64;
    const double m_bound =
        (static_cast<double>(m_stored_q.hi[b]) - m_stored_q.lo[b]) / 255.0 + 1e-9;
    CHECK(std::abs(m_stored[i] - m_ref[i]) <= m_bound);
    const double v_range = static_cast<double>(v_stored_q.hi[b]) - v_stored_q.lo[b];
    const double v_bound = std::exp(v_range / 255.0) - 1.0 + 1e-6;
    if (v_ref[i] >= 1e-7f) {
      CHECK(std::abs(v_stored[i] - v_ref[i]) / v_ref[i] <= v_bound);
    }
  }
}

TEST_CASE("update magnitude is capped by lr * |m-hat| / eps") {
  auto s = make_setup(64, 6, 3.0f);
  const auto theta0 = s.params[0].data;
  const Hyper h;
  AdamState st(s.sizes, Mode::kQLocalAdam, h, 64);
  st.step(s.param_ptrs, s.grads);
  const auto m = st.momentum(0);
  for (std::size_t i = 0; i < 64; ++i) {
    const double mhat = std::abs(static_cast<double>(s.grads[0].data[i]));  // step 1: m-hat = g
    const double delta = std::abs(static_cast<double>(s.params[0].data[i]) - theta0[i]);
    CHECK(delta <= static_cast<double>(h.lr) * (mhat + 1e-6) / h.eps);
  }
  for (float v : st.variance(0)) CHECK(v >= 0.0f);
}

TEST_CASE("gradient validation and step overflow") {
  auto s = make_setup(8, 7);
  AdamState st(s.sizes, Mode::kFp32, Hyper{}, 64);
  auto bad = s.grads;
  bad[0].data[3] = std::nanf("");
  CHECK_THROWS_AS(st.step(s.param_ptrs, bad), std::domain_error);

  // Patch the step counter in a checkpoint to just below the 2^31 limit.
  auto bytes = st.to_bytes();
  const uint64_t step = (uint64_t{1} << 31) - 1;
  for (int i = 0; i < 8; ++i) bytes[8 + i] = static_cast<uint8_t>((step >> (8 * i)) & 0xFF);
  AdamState near_limit = AdamState::from_bytes(bytes);
  CHECK(near_limit.step_count() == step);
  near_limit.step(s.param_ptrs, s.grads);  // reaches the limit
  CHECK_THROWS_AS(near_limit.step(s.param_ptrs, s.grads), std::runtime_error);
}

TEST_CASE("size mismatches are rejected") {
  auto s = make_setup(8, 8);
  std::vector<std::size_t> sizes{10};
  AdamState st(sizes, Mode::kFp32, Hyper{}, 64);
  CHECK_THROWS_AS(st.step(s.param_ptrs, s.grads), std::invalid_argument);
  CHECK_THROWS_AS(AdamState(sizes, Mode::kFp32, Hyper{}, 0), std::invalid_argument);
}

TEST_CASE("memory accounting per mode") {
  const std::vector<std::size_t> sizes{64};
  CHECK(AdamState(sizes, Mode::kQLocalAdam, Hyper{}, 64).memory_bytes().total_bytes == 144);
  CHECK(AdamState(sizes, Mode::kFp32, Hyper{}, 64).memory_bytes().total_bytes == 512);
  const auto momentum_only = AdamState(sizes, Mode::kMomentumOnly, Hyper{}, 64).memory_bytes();
  CHECK(momentum_only.total_bytes == 328);  // 72 quantized m + 256 fp32 v
  CHECK(AdamState(sizes, Mode::kVarianceOnly, Hyper{}, 64).memory_bytes().total_bytes == 328);
  CHECK(AdamState(sizes, Mode::kNaiveInt8, Hyper{}, 64).memory_bytes().total_bytes == 144);

  // Roughly 2.25 bytes per parameter across both states at B = 64.
  const std::vector<std::size_t> big{6'300'000};
  const auto report = AdamState(big, Mode::kQLocalAdam, Hyper{}, 64).memory_bytes();
  CHECK(std::abs(static_cast<double>(report.total_bytes) - 2.25 * 6.3e6) <
        0.001 * 2.25 * 6.3e6);
  CHECK(report.compression_ratio == doctest::Approx(3.5556).epsilon(0.01));
}

TEST_CASE("checkpoint round-trip preserves state and trajectory") {
  auto s = make_setup(150, 9);
  AdamState st(s.sizes, Mode::kQLocalAdam, Hyper{}, 32);
  auto params = s.params;
  std::vector<nd::DenseTensor*> ptrs{&params[0]};
  st.step(ptrs, s.grads);
  st.step(ptrs, s.grads);

  const auto bytes = st.to_bytes();
  AdamState restored = AdamState::from_bytes(bytes);
  CHECK(restored.step_count() == st.step_count());
  CHECK(restored.mode() == st.mode());
  CHECK(restored.block_size() == st.block_size());
  CHECK(restored.momentum(0) == st.momentum(0));
  CHECK(restored.variance(0) == st.variance(0));
  CHECK(restored.memory_bytes().total_bytes == st.memory_bytes().total_bytes);

  // Continuing from the restored state matches continuing the original.
  auto params2 = params;
  std::vector<nd::DenseTensor*> ptrs2{&params2[0]};
  st.step(ptrs, s.grads);
  restored.step(ptrs2, s.grads);
  CHECK(params.at(0).data == params2.at(0).data);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(AdamState::from_bytes(truncated), std::runtime_error);
}

TEST_CASE("naive linear storage collapses small variance values") {
  nd::RngStream rng(10, 0);
  const std::size_t n = 20000;
  std::vector<float> v(n);
  for (auto& x : v) {
    x = static_cast<float>(std::pow(10.0, -12.0 + 9.0 * rng.next_unit()));
  }
  const auto lin = quant::quantize_linear(v, 64);
  const auto lin_back = quant::dequantize_linear(lin);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(lin_back[i] - v[i]) / v[i] > 0.5) ++bad;
  }
  CHECK(static_cast<double>(bad) / n > 0.5);

  // Same array through the log path (zero guard below the data range).
  const auto lg = quant::quantize_log(v, 64, 1e-15f);
  const auto lg_back = quant::dequantize_log(lg);
  double mean_rel = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_rel += std::abs(lg_back[i] - v[i]) / v[i];
  CHECK(mean_rel / n < 0.03);
}

TEST_CASE("fedadam server oracle") {
  const Hyper h;
  std::vector<float> theta{1.0f, -2.0f, 0.5f};

  // All-zero deltas leave theta unchanged from a zero state.
  optim::ServerAdamState st{std::vector<float>(3, 0.0f), std::vector<float>(3, 0.0f)};
  auto theta_copy = theta;
  optim::fedadam_server_step(theta_copy, st, {{0, 0, 0}, {0, 0, 0}}, h);
  CHECK(theta_copy == theta);

  // Single client, first step: m = (1 - beta1) * delta.
  optim::ServerAdamState st2{std::vector<float>(3, 0.0f), std::vector<float>(3, 0.0f)};
  theta_copy = theta;
  const std::vector<float> delta{0.5f, -1.0f, 2.0f};
  optim::fedadam_server_step(theta_copy, st2, {delta}, h);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(st2.m[i] == doctest::Approx((1.0f - h.beta1) * delta[i]).epsilon(1e-6));
  }

  // Two opposite deltas cancel.
  optim::ServerAdamState st3{std::vector<float>(3, 0.0f), std::vector<float>(3, 0.0f)};
  theta_copy = theta;
  optim::fedadam_server_step(theta_copy, st3, {{1, 2, 3}, {-1, -2, -3}}, h);
  CHECK(theta_copy == theta);

  CHECK_THROWS_AS(optim::fedadam_server_step(theta_copy, st3, {}, h), std::invalid_argument);
  CHECK_THROWS_AS(optim::fedadam_server_step(theta_copy, st3, {{1.0f, 2.0f}}, h),
                  std::invalid_argument);
}
