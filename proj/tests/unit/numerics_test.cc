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

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include <gtest/gtest.h>

#include "test_util.h"
#include "zoserve/digest.h"
#include "zoserve/errors.h"
#include "zoserve/matrix.h"
#include "zoserve/random.h"

namespace zoserve {
namespace {

// Known-answer vectors from the Random123 distribution (philox4x32, 10 rounds).
TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                              {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(SampleGaussian, SameKeyIsByteIdentical) {
  const StreamKey key{42, 7, 3, StreamRole::kU};
  const Matrix a = sample_gaussian(key, 5, 4);
  const Matrix b = sample_gaussian(key, 5, 4);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)));
}

TEST(SampleGaussian, CallOrderDoesNotMatter) {
  const StreamKey k1{1, 2, 3, StreamRole::kV};
  const StreamKey k2{1, 3, 3, StreamRole::kV};
  const Matrix a1 = sample_gaussian(k1, 3, 3);
  const Matrix b1 = sample_gaussian(k2, 3, 3);
  const Matrix b2 = sample_gaussian(k2, 3, 3);
  const Matrix a2 = sample_gaussian(k1, 3, 3);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(b1, b2);
}

TEST(SampleGaussian, RolesDiffer) {
  const Matrix u = sample_gaussian({42, 0, 1, StreamRole::kU}, 4, 4);
  const Matrix v = sample_gaussian({42, 0, 1, StreamRole::kV}, 4, 4);
  EXPECT_FALSE(u == v);
  EXPECT_GT(max_abs_diff(u, v), 0.0);
}

TEST(SampleGaussian, ZeroDimensionIsError) {
  EXPECT_THROW(sample_gaussian({1, 0, 0, StreamRole::kU}, 0, 3), DimensionError);
  EXPECT_THROW(sample_gaussian({1, 0, 0, StreamRole::kU}, 3, 0), DimensionError);
}

TEST(SampleGaussian, StepMustFit32Bits) {
  EXPECT_THROW(sample_gaussian({1, 1ull << 32, 0, StreamRole::kU}, 1, 1), ConfigError);
}

TEST(SampleGaussian, MomentsOverOneMillion) {
  const Matrix m = sample_gaussian({2024, 0, 0, StreamRole::kDenseZ}, 1000, 1000);
  double sum = 0.0;
  for (double x : m.data()) sum += x;
  const double mean = sum / static_cast<double>(m.size());
  double ss = 0.0;
  for (double x : m.data()) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(m.size());
  EXPECT_LE(std::abs(mean), 0.01);
  EXPECT_LE(std::abs(var - 1.0), 0.01);
  EXPECT_TRUE(m.all_finite());
}

TEST(SampleIndices, DistinctAndInRange) {
  const auto idx = sample_indices({5, 9, 0, StreamRole::kMinibatch}, 20, 16);
  ASSERT_EQ(idx.size(), 16u);
  std::unordered_set<std::size_t> seen(idx.begin(), idx.end());
  EXPECT_EQ(seen.size(), 16u);
  for (auto i : idx) EXPECT_LT(i, 20u);
  EXPECT_EQ(idx, sample_indices({5, 9, 0, StreamRole::kMinibatch}, 20, 16));
}

TEST(CounterStream, BelowIsRoughlyUniform) {
  CounterStream s({3, 0, 0, StreamRole::kTask});
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[s.below(6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Digest, EmptyInputIsOffsetBasis) {
  Fnv1a h;
  EXPECT_EQ(h.digest().value, 0xcbf29ce484222325ull);
  EXPECT_EQ(digest(Matrix()).value, 0xcbf29ce484222325ull);
  EXPECT_EQ(h.digest().hex(), "cbf29ce484222325");
}

TEST(Digest, KnownFnvVector) {
  // FNV-1a 64 of "a".
  Fnv1a h;
  h.update(std::string_view("a"));
  EXPECT_EQ(h.digest().value, 0xaf63dc4c8601ec8cull);
}

TEST(Digest, HexRoundTrip) {
  const Digest d{0x0123456789abcdefull};
  EXPECT_EQ(d.hex(), "0123456789abcdef");
  EXPECT_EQ(Digest::from_hex(d.hex()), d);
  EXPECT_FALSE(Digest::from_hex("xyz").has_value());
  EXPECT_FALSE(Digest::from_hex("0123456789ABCDEF0").has_value());
}

TEST(Digest, DeterministicAndSensitiveToLowBit) {
  Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(digest(m), digest(m));
  // Oracle: hash the little-endian bytes by hand.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double x : m.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
  EXPECT_EQ(digest(m).value, h);
  Matrix flipped = m;
  flipped(1, 0) = std::bit_cast<double>(std::bit_cast<std::uint64_t>(m(1, 0)) ^ 1ull);
  EXPECT_NE(digest(flipped), digest(m));
}

TEST(Digest, NoCollisionsOverTenThousand) {
  std::unordered_set<std::uint64_t> seen;
  for (std::uint32_t i = 0; i < 10000; ++i) {
    seen.insert(digest(sample_gaussian({77, i, 0, StreamRole::kU}, 2, 3)).value);
  }
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(AxpyOuter, AlphaZeroLeavesW) {
  Matrix w = testing::random_matrix(3, 4, 1);
  const Matrix before = w;
  axpy_outer(w, 0.0, testing::random_matrix(3, 2, 2), testing::random_matrix(4, 2, 3));
  EXPECT_EQ(w, before);
}

TEST(AxpyOuter, UnitOuterProduct) {
  Matrix w(2, 2);
  axpy_outer(w, 1.0, Matrix::from_rows({{1}, {0}}), Matrix::from_rows({{0}, {1}}));
  EXPECT_EQ(w, Matrix::from_rows({{0, 1}, {0, 0}}));
}

TEST(AxpyOuter, MatchesNaiveTripleLoopExactly) {
  Matrix w = testing::random_matrix(4, 3, 10);
  const Matrix u = testing::random_matrix(4, 2, 11);
  const Matrix v = testing::random_matrix(3, 2, 12);
  Matrix ref = w;
  const double alpha = -0.37;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k) s += u(i, k) * v(j, k);
      ref(i, j) += alpha * s;
    }
  }
  axpy_outer(w, alpha, u, v);
  EXPECT_EQ(max_abs_diff(w, ref), 0.0);
}

TEST(AxpyOuter, CountsMTimesNWrites) {
  Matrix w(5, 7);
  WriteScope scope;
  axpy_outer(w, 1.0, testing::random_matrix(5, 3, 1), testing::random_matrix(7, 3, 2));
  EXPECT_EQ(scope.count(), 35u);
}

TEST(AxpyOuter, ShapeMismatchIsError) {
  Matrix w(3, 3);
  EXPECT_THROW(axpy_outer(w, 1.0, Matrix(3, 2), Matrix(3, 1)), DimensionError);
  EXPECT_THROW(axpy_outer(w, 1.0, Matrix(2, 1), Matrix(3, 1)), DimensionError);
  EXPECT_THROW(axpy_outer(w, 1.0, Matrix(3, 1), Matrix(4, 1)), DimensionError);
}

TEST(AxpyOuter, WorksOnColumnBlocks) {
  Matrix packed(3, 6);
  const Matrix u = testing::random_matrix(3, 1, 4);
  const Matrix v = testing::random_matrix(2, 1, 5);
  axpy_outer(column_block(packed, 2, 2), 1.0, u, v);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double expect = (j == 2 || j == 3) ? u(i, 0) * v(j - 2, 0) : 0.0;
      EXPECT_EQ(packed(i, j), expect);
    }
  }
}

TEST(Matrix, FromRowsAndTranspose) {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.transposed(), Matrix::from_rows({{1, 4}, {2, 5}, {3, 6}}));
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(Matrix, OuterProductIsPure) {
  WriteScope scope;
  const Matrix p = outer_product(Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{3}, {4}}), 2.0);
  EXPECT_EQ(p, Matrix::from_rows({{6, 8}, {12, 16}}));
  EXPECT_EQ(scope.count(), 0u);
}

}  // namespace
}  // namespace zoserve
