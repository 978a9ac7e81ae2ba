// Copyright 2026 The zoserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <fstream>

#include <gtest/gtest.h>

#include "test_util.h"
#include "zoserve/adapter.h"
#include "zoserve/errors.h"

namespace zoserve {
namespace {

using testing::random_matrix;

LoraSlot random_slot(std::size_t m, std::size_t n, std::size_t k, std::uint64_t seed,
                     double scale = 1.0) {
  return LoraSlot{random_matrix(m, k, seed, 1), random_matrix(n, k, seed, 2), scale};
}

Matrix naive_dense(const LoraSlot& s) {
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) {
      long double acc = 0;
      for (std::size_t q = 0; q < s.rank(); ++q) acc += static_cast<long double>(s.a(i, q)) * s.b(j, q);
      out(i, j) = static_cast<double>(s.scale * acc);
    }
  return out;
}

TEST(ComposeProbe, EmptyStateReturnsBase) {
  const Matrix w = random_matrix(3, 5, 1);
  const Matrix out = compose_probe(w, AdapterEntry{});
  EXPECT_EQ(max_abs_diff(out, w), 0.0);
}

TEST(ComposeProbe, UnitCase) {
  AdapterEntry e;
  e.update_slots.push_back(LoraSlot{Matrix::from_rows({{1}, {0}}), Matrix::from_rows({{0}, {1}}), 1.0});
  const Matrix out = compose_probe(Matrix(2, 2), e);
  EXPECT_EQ(max_abs_diff(out, Matrix::from_rows({{0, 1}, {0, 0}})), 0.0);
}

TEST(ComposeProbe, SignFlipDiffersByTwoEpsilon) {
  const Matrix w = random_matrix(3, 3, 2);
  AdapterEntry e;
  e.update_slots.push_back(random_slot(3, 3, 1, 3, 0.7));
  e.perturb_slot = random_slot(3, 3, 1, 4);
  e.epsilon = 1e-3;
  e.perturb_sign = +1;
  const Matrix plus = compose_probe(w, e);
  e.perturb_sign = -1;
  const Matrix minus = compose_probe(w, e);
  const Matrix p = naive_dense(*e.perturb_slot);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(plus(i, j) - minus(i, j), 2e-3 * p(i, j), 1e-15);
}

TEST(ComposeProbe, ShapeMismatchThrows) {
  AdapterEntry e;
  e.update_slots.push_back(random_slot(3, 4, 1, 5));
  EXPECT_THROW(compose_probe(Matrix(3, 3), e), DimensionError);
}

TEST(ComposeProbe, IsPure) {
  const Matrix w = random_matrix(6, 6, 6);
  AdapterEntry e;
  e.update_slots.push_back(random_slot(6, 6, 2, 7));
  WriteScope writes;
  compose_probe(w, e);
  EXPECT_EQ(writes.count(), 0u);
}

TEST(ComposeProbe, SlotOrderInvariance) {
  const Matrix w = random_matrix(8, 6, 8);
  AdapterEntry e;
  for (int s = 0; s < 5; ++s) e.update_slots.push_back(random_slot(8, 6, 1 + s % 2, 10 + s, 0.3 * (s + 1)));
  const Matrix canonical = compose_probe(w, e);
  std::vector<int> perm{0, 1, 2, 3, 4};
  while (std::next_permutation(perm.begin(), perm.end())) {
    AdapterEntry p;
    for (int i : perm) p.update_slots.push_back(e.update_slots[i]);
    EXPECT_LE(frobenius_distance(compose_probe(w, p), canonical), 1e-12 * frobenius_norm(canonical));
  }
}

TEST(ComposeProbe, PerturbationAbsorption) {
  const Matrix w = random_matrix(4, 5, 9);
  for (int sign : {+1, -1}) {
    AdapterEntry e;
    e.update_slots.push_back(random_slot(4, 5, 2, 20));
    LoraSlot p = random_slot(4, 5, 1, 21);
    e.perturb_slot = p;
    e.perturb_sign = sign;
    e.epsilon = 1e-3;
    AdapterEntry as_slot;
    as_slot.update_slots = e.update_slots;
    p.scale = sign * 1e-3;
    as_slot.update_slots.push_back(p);
    EXPECT_EQ(max_abs_diff(compose_probe(w, e), compose_probe(w, as_slot)), 0.0);
  }
}

TEST(ComposeProbe, QuantizedBaseLeavesAdapterTermUntouched) {
  const Matrix w = random_matrix(6, 7, 30);
  AdapterEntry e;
  e.update_slots.push_back(random_slot(6, 7, 2, 31, 0.5));
  e.perturb_slot = random_slot(6, 7, 1, 32);
  e.perturb_sign = -1;
  e.epsilon = 1e-2;
  const QuantizedBase q = quantize_base(w);
  const Matrix dq = dequantize(q);
  const Matrix full = compose_probe(w, e);
  const Matrix quant = compose_probe(q, e);
  const Matrix delta = adapter_delta(e, 6, 7);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_EQ(full(i, j), w(i, j) + delta(i, j));
      EXPECT_EQ(quant(i, j), dq(i, j) + delta(i, j));
    }
}

TEST(MergeSlots, Singleton) {
  const LoraSlot s = random_slot(4, 3, 2, 40, 0.25);
  const LoraSlot m = merge_slots(std::vector<LoraSlot>{s});
  EXPECT_EQ(m.scale, 1.0);
  EXPECT_LE(max_abs_diff(dense(m), dense(s)), 1e-15);
}

TEST(MergeSlots, TwoRankOneIsDenseSum) {
  const LoraSlot a = random_slot(5, 4, 1, 41, 0.5);
  const LoraSlot b = random_slot(5, 4, 1, 42, -2.0);
  const LoraSlot m = merge_slots(std::vector<LoraSlot>{a, b});
  EXPECT_EQ(m.rank(), 2u);
  const Matrix da = naive_dense(a), db = naive_dense(b), dm = dense(m);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(dm(i, j), da(i, j) + db(i, j), 1e-15);
}

TEST(MergeSlots, Cancellation) {
  const LoraSlot a = random_slot(4, 4, 2, 43);
  LoraSlot neg = a;
  neg.scale = -1.0;
  const Matrix d = dense(merge_slots(std::vector<LoraSlot>{a, neg}));
  EXPECT_LE(frobenius_norm(d), 1e-15);
}

TEST(MergeSlots, EmptyIsZeroContribution) {
  const LoraSlot m = merge_slots(std::vector<LoraSlot>{});
  EXPECT_EQ(m.rank(), 0u);
  EXPECT_THROW(merge_slots(std::vector<LoraSlot>{random_slot(3, 3, 1, 1), random_slot(3, 4, 1, 2)}),
               DimensionError);
}

TEST(AccumulateOnU, ZeroCoefficient) {
  LoraSlot s = random_slot(4, 3, 1, 50);
  const Matrix before = s.a;
  accumulate_on_U(s, 0.5, 0.0, random_matrix(4, 1, 51));
  EXPECT_EQ(max_abs_diff(s.a, before), 0.0);
}

TEST(AccumulateOnU, DirectArithmetic) {
  LoraSlot s{Matrix::from_rows({{1}, {0}}), Matrix::from_rows({{1}, {1}}), 1.0};
  WriteScope writes;
  accumulate_on_U(s, 0.5, 2.0, Matrix::from_rows({{1}, {1}}));
  EXPECT_EQ(writes.count(), 2u);
  EXPECT_EQ(s.a(0, 0), 0.0);
  EXPECT_EQ(s.a(1, 0), -1.0);
  EXPECT_THROW(accumulate_on_U(s, 0.5, 2.0, Matrix(3, 1)), DimensionError);
}

TEST(AccumulateOnU, MatchesStepwiseMaterialization) {
  const std::size_t m = 6, n = 5, k = 2;
  LoraSlot s{random_matrix(m, k, 60), random_matrix(n, k, 61), 1.0};
  Matrix dense_w = naive_dense(s);
  const double eta = 0.01;
  for (int step = 0; step < 20; ++step) {
    const Matrix g = random_matrix(m, k, 62, static_cast<std::uint32_t>(step));
    const double c = 0.1 * (step - 7);
    accumulate_on_U(s, eta, c, g);
    // W <- W - eta c G B^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double gb = 0;
        for (std::size_t q = 0; q < k; ++q) gb += g(i, q) * s.b(j, q);
        dense_w(i, j) -= eta * c * gb;
      }
  }
  EXPECT_LE(max_abs_diff(dense(s), dense_w), 1e-12);
}

TEST(FoldWindow, ZeroSlotLeavesTarget) {
  Matrix w = random_matrix(4, 4, 70);
  const Matrix before = w;
  LoraSlot z = LoraSlot::zero(4, 4, 2);
  fold_window(z, w);
  EXPECT_EQ(max_abs_diff(w, before), 0.0);
}

TEST(FoldWindow, CommutesWithCompose) {
  Matrix w = random_matrix(4, 4, 71);
  AdapterEntry e;
  e.update_slots.push_back(random_slot(4, 4, 2, 72, 0.3));
  const Matrix composed = compose_probe(w, e);
  WriteScope writes;
  fold_window(e.update_slots[0], w);
  EXPECT_EQ(writes.count(), 16u);
  EXPECT_LE(max_abs_diff(compose_probe(w, AdapterEntry{}), composed), 1e-15);
  // Slot is reset, not removed.
  EXPECT_EQ(e.update_slots[0].rank(), 2u);
  EXPECT_EQ(frobenius_norm(dense(e.update_slots[0])), 0.0);
  EXPECT_LE(max_abs_diff(compose_probe(w, e), composed), 1e-15);
}

TEST(FoldWindow, SequentialEqualsMerged) {
  const Matrix w0 = random_matrix(5, 3, 73);
  LoraSlot s1 = random_slot(5, 3, 1, 74, 0.5), s2 = random_slot(5, 3, 2, 75, -1.5);
  LoraSlot merged = merge_slots(std::vector<LoraSlot>{s1, s2});
  Matrix a = w0, b = w0;
  fold_window(s1, a);
  fold_window(s2, a);
  fold_window(merged, b);
  EXPECT_LE(max_abs_diff(a, b), 1e-15);
  LoraSlot bad = random_slot(4, 3, 1, 76);
  EXPECT_THROW(fold_window(bad, a), DimensionError);
}

TEST(WriteAccounting, WindowLaw) {
  const std::size_t m = 12, n = 9, k = 3, nu = 7;
  Matrix w = random_matrix(m, n, 80);
  LoraSlot s{Matrix(m, k), random_matrix(n, k, 81), 1.0};
  WriteScope writes;
  for (std::size_t t = 0; t < nu; ++t) accumulate_on_U(s, 0.1, 1.0, random_matrix(m, k, 82, t));
  fold_window(s, w);
  EXPECT_EQ(writes.count(), nu * m * k + m * n);
}

TEST(QuantizeBase, ZeroMatrix) {
  const QuantizedBase q = quantize_base(Matrix(3, 3));
  EXPECT_EQ(q.scale, 1.0);
  for (auto v : q.values) EXPECT_EQ(v, 0);
  EXPECT_EQ(frobenius_norm(dequantize(q)), 0.0);
}

TEST(QuantizeBase, PlusMinusOne) {
  const Matrix w = Matrix::from_rows({{1, -1}, {-1, 1}});
  const Matrix d = dequantize(quantize_base(w));
  EXPECT_LE(max_abs_diff(d, w), 1.0 / 127);
}

TEST(QuantizeBase, ErrorBound) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix w = random_matrix(8, 8, 90 + seed);
    double mx = 0;
    for (double x : w.data()) mx = std::max(mx, std::abs(x));
    const QuantizedBase q = quantize_base(w);
    EXPECT_DOUBLE_EQ(q.scale, mx / 127);
    EXPECT_LE(max_abs_diff(dequantize(q), w), mx / 127 + 1e-12);
  }
}

TEST(PushUpdateSlot, MergesWhenOverCap) {
  Matrix w = random_matrix(8, 8, 100);
  const Matrix w0 = w;
  AdapterEntry e;
  Matrix want(8, 8);
  for (int i = 0; i < 5; ++i) {
    LoraSlot s = random_slot(8, 8, 1, 101 + i, 0.1 * (i + 1));
    axpy_outer(want, s.scale, s.a, s.b);
    push_update_slot(e, s, 4, w);
  }
  ASSERT_EQ(e.update_slots.size(), 1u);
  EXPECT_EQ(e.update_slots[0].rank(), 5u);
  EXPECT_EQ(max_abs_diff(w, w0), 0.0);
  EXPECT_LE(max_abs_diff(adapter_delta(e, 8, 8), want), 1e-14);
}

TEST(PushUpdateSlot, FoldsWhenTooWide) {
  Matrix w = random_matrix(3, 3, 110);
  const Matrix w0 = w;
  AdapterEntry e;
  Matrix want(3, 3);
  std::vector<LoraSlot> pushed;
  for (int i = 0; i < 3; ++i) {
    LoraSlot s = random_slot(3, 3, 2, 111 + i);
    axpy_outer(want, 1.0, s.a, s.b);
    pushed.push_back(s);
    push_update_slot(e, s, 2, w);
  }
  // Newest slot survives untouched; the rest went to the base.
  ASSERT_EQ(e.update_slots.size(), 1u);
  EXPECT_EQ(max_abs_diff(e.update_slots[0].a, pushed.back().a), 0.0);
  Matrix total = compose_probe(w, e);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(total(i, j), w0(i, j) + want(i, j), 1e-13);
}

TEST(AdapterState, SignAndEpsilonValidation) {
  ParameterSet ps = testing::single_matrix(Matrix(2, 2));
  AdapterState st(ps);
  EXPECT_THROW(st.set_perturb_sign(2), ConfigError);
  EXPECT_THROW(st.set_epsilon(-1.0), ConfigError);
  st.set_perturb_sign(-1);
  EXPECT_EQ(st.entry(0).perturb_sign, -1);
  st.clear_perturbation();
  EXPECT_EQ(st.perturb_sign(), 0);
  EXPECT_FALSE(st.entry(0).active());
}

TEST(AdapterState, SaveLoadRoundTrip) {
  ParameterSet ps;
  ps.add_matrix("a", random_matrix(4, 6, 120));
  const std::vector<std::string> parts{"q", "k"};
  ps.add_packed("qk", random_matrix(4, 8, 121), parts);
  ps.add_vector("g", std::vector<double>(6, 1.0));
  AdapterState st(ps);
  st.entry(0).update_slots.push_back(random_slot(4, 6, 2, 122, 0.5));
  st.entry(2).update_slots.push_back(random_slot(4, 4, 1, 123));
  st.entry(1).perturb_slot = random_slot(4, 4, 1, 124);
  st.set_epsilon(1e-3);
  st.set_perturb_sign(1);
  st.set_vector_direction(0, std::vector<double>{1, 2, 3, 4, 5, 6});
  const auto dir = testing::temp_dir("adapter");
  save_adapter(st, dir / "a.bin");
  const AdapterState back = load_adapter(dir / "a.bin");
  EXPECT_EQ(back.digest(), st.digest());
  EXPECT_TRUE(back == st);
  write_adapter_manifest(st, dir / "a.bin");
  std::ifstream in(dir / "a.bin.manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find(st.digest().hex()), std::string::npos);
}

TEST(AdapterState, LoadRejectsCorruptFile) {
  const auto dir = testing::temp_dir("adapter_bad");
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "not an adapter";
  }
  EXPECT_THROW(load_adapter(dir / "bad.bin"), InputError);
  EXPECT_THROW(load_adapter(dir / "missing.bin"), InputError);
}

}  // namespace
}  // namespace zoserve
