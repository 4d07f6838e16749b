#include <gtest/gtest.h>

#include <vector>

#include "fteasd/chunking.hpp"
#include "fteasd/common.hpp"
#include "fteasd/tensor.hpp"

using namespace fteasd;

namespace {

Rng& rng() {
  static Rng r(448812905);
  return r;
}

Tensor random_spectrogram(long long F, long long T) {
  std::vector<double> v(static_cast<std::size_t>(F * T));
  for (auto& x : v) x = rng().uniform(-1.0, 1.0);
  return make_leaf({F, T}, std::move(v));
}

}  // namespace

TEST(ChunkPlan, ReferenceGeometry) {
  // 16 bins, 3 chunks, 50% overlap: chunk size 8, hop 4, starts {0, 4, 8}.
  ChunkSpec spec{3, 0.5, Axis::frequency};
  ChunkPlan p = spec.plan(16);
  EXPECT_EQ(p.chunk_extent, 8);
  EXPECT_EQ(p.hop, 4);
  EXPECT_EQ(p.padded_extent, 16);
}

TEST(ChunkPlan, SingleChunkIsWholeAxis) {
  for (double rho : {0.0, 0.3, 0.9}) {
    ChunkSpec spec{1, rho, Axis::time};
    ChunkPlan p = spec.plan(37);
    EXPECT_EQ(p.chunk_extent, 37);
    EXPECT_EQ(p.padded_extent, 37);
  }
}

TEST(ChunkPlan, ZeroOverlapPartitionsWhenDivisible) {
  ChunkSpec spec{4, 0.0, Axis::frequency};
  ChunkPlan p = spec.plan(16);
  EXPECT_EQ(p.chunk_extent, 4);
  EXPECT_EQ(p.hop, 4);
  EXPECT_EQ(p.padded_extent, 16);
}

TEST(ChunkPlan, RejectsBadParameters) {
  EXPECT_THROW((ChunkSpec{0, 0.5, Axis::frequency}.plan(16)), argument_error);
  EXPECT_THROW((ChunkSpec{3, 1.0, Axis::frequency}.plan(16)), argument_error);
  EXPECT_THROW((ChunkSpec{3, -0.1, Axis::frequency}.plan(16)), argument_error);
  EXPECT_THROW((ChunkSpec{8, 0.5, Axis::frequency}.plan(7)), argument_error);
  EXPECT_THROW((ChunkSpec{2, 0.5, Axis::channel}.plan(16)), argument_error);
}

TEST(ChunkAxis, FrequencyChunksCopyRows) {
  Tensor s = random_spectrogram(16, 5);
  ChunkSpec spec{3, 0.5, Axis::frequency};
  Tensor out = chunk_axis(s, spec);
  ASSERT_EQ(out->shape, (std::vector<long long>{3, 8, 5}));
  for (long long k = 0; k < 3; ++k)
    for (long long r = 0; r < 8; ++r)
      for (long long t = 0; t < 5; ++t) {
        double got = out->data[static_cast<std::size_t>((k * 8 + r) * 5 + t)];
        double want = s->data[static_cast<std::size_t>(((k * 4) + r) * 5 + t)];
        ASSERT_EQ(got, want) << "chunk " << k << " row " << r << " col " << t;
      }
}

TEST(ChunkAxis, TimeChunksCopyColumns) {
  Tensor s = random_spectrogram(4, 16);
  ChunkSpec spec{3, 0.5, Axis::time};
  Tensor out = chunk_axis(s, spec);
  ASSERT_EQ(out->shape, (std::vector<long long>{3, 4, 8}));
  for (long long k = 0; k < 3; ++k)
    for (long long f = 0; f < 4; ++f)
      for (long long c = 0; c < 8; ++c) {
        double got = out->data[static_cast<std::size_t>((k * 4 + f) * 8 + c)];
        double want = s->data[static_cast<std::size_t>(f * 16 + (k * 4 + c))];
        ASSERT_EQ(got, want);
      }
}

TEST(ChunkAxis, CoverageAndFidelityGrid) {
  // Every input element must land in at least one chunk, and every chunk cell
  // must either copy the matching input cell or be zero pad past the axis end.
  for (long long extent : {8LL, 9LL, 13LL, 16LL, 21LL, 29LL, 40LL}) {
    for (long long n : {1LL, 2LL, 3LL, 4LL, 5LL}) {
      if (extent < n) continue;
      for (double rho : {0.0, 0.25, 0.5, 0.75}) {
        Tensor s = random_spectrogram(extent, 3);
        ChunkSpec spec{n, rho, Axis::frequency};
        ChunkPlan p = spec.plan(extent);
        Tensor out = chunk_axis(s, spec);
        ASSERT_EQ(out->shape, (std::vector<long long>{n, p.chunk_extent, 3}));
        std::vector<int> covered(static_cast<std::size_t>(extent), 0);
        for (long long k = 0; k < n; ++k) {
          long long start = k * p.hop;
          for (long long r = 0; r < p.chunk_extent; ++r) {
            long long f = start + r;
            for (long long t = 0; t < 3; ++t) {
              double got = out->data[static_cast<std::size_t>((k * p.chunk_extent + r) * 3 + t)];
              if (f < extent) {
                ASSERT_EQ(got, s->data[static_cast<std::size_t>(f * 3 + t)])
                    << "extent " << extent << " n " << n << " rho " << rho << " chunk " << k
                    << " offset " << r;
              } else {
                ASSERT_EQ(got, 0.0) << "pad region must be zero";
              }
            }
            if (f < extent) covered[static_cast<std::size_t>(f)] = 1;
          }
        }
        for (long long f = 0; f < extent; ++f)
          ASSERT_TRUE(covered[static_cast<std::size_t>(f)])
              << "row " << f << " uncovered (extent " << extent << " n " << n << " rho " << rho
              << ")";
        ASSERT_GE(p.padded_extent, extent);
        ASSERT_EQ(p.padded_extent, (n - 1) * p.hop + p.chunk_extent);
      }
    }
  }
}

TEST(ChunkAxis, RejectsNonMatrixInput) {
  Tensor bad = make_leaf({2, 3, 4}, std::vector<double>(24, 0.0));
  EXPECT_THROW(chunk_axis(bad, ChunkSpec{2, 0.5, Axis::frequency}), shape_error);
}

TEST(Stacking, ChunkStacksFormBatch) {
  Tensor a = random_spectrogram(8, 4);
  Tensor b = random_spectrogram(8, 4);
  ChunkSpec spec{2, 0.5, Axis::frequency};
  Tensor ca = chunk_axis(a, spec);
  Tensor cb = chunk_axis(b, spec);
  Tensor batch = stack_chunked({ca, cb});
  ASSERT_EQ(batch->shape.size(), 4u);
  EXPECT_EQ(batch->shape[0], 2);
  EXPECT_EQ(batch->shape[1], ca->shape[0]);
  EXPECT_EQ(batch->shape[2], ca->shape[1]);
  EXPECT_EQ(batch->shape[3], ca->shape[2]);
  for (long long i = 0; i < ca->numel(); ++i) {
    ASSERT_EQ(batch->data[static_cast<std::size_t>(i)], ca->data[static_cast<std::size_t>(i)]);
    ASSERT_EQ(batch->data[static_cast<std::size_t>(ca->numel() + i)],
              cb->data[static_cast<std::size_t>(i)]);
  }
  Tensor mismatched = make_leaf({2, 5, 4}, std::vector<double>(40, 0.0));
  EXPECT_THROW(stack_chunked({ca, mismatched}), shape_error);
  EXPECT_THROW(stack_chunked({}), argument_error);
}

TEST(Stacking, RowsFormMatrix) {
  Tensor r0 = make_leaf({3}, {1.0, 2.0, 3.0});
  Tensor r1 = make_leaf({3}, {4.0, 5.0, 6.0});
  Tensor m = stack_rows({r0, r1});
  ASSERT_EQ(m->shape, (std::vector<long long>{2, 3}));
  EXPECT_EQ(m->data, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  Tensor bad = make_leaf({4}, std::vector<double>(4, 0.0));
  EXPECT_THROW(stack_rows({r0, bad}), shape_error);
}
