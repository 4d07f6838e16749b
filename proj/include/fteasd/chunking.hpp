#pragma once

// Overlapping chunk decomposition of a spectrogram along either the frequency
// or the time axis. The N chunks of one clip are stacked along the leading
// (channel) dimension so a downstream 2-D conv stack sees them jointly.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct ChunkPlan {
  long long n_chunks = 0;     // N
  long long chunk_extent = 0; // c: size of each chunk along the split axis
  long long hop = 0;          // h: start-to-start distance
  long long padded_extent = 0;  // extent after trailing zero pad, >= input extent
};

struct ChunkSpec {
  long long n_chunks = 4;
  double overlap = 0.5;  // rho in [0, 1)
  Axis axis = Axis::frequency;

  void validate() const {
    if (n_chunks < 1) throw argument_error("chunking: n_chunks must be at least 1");
    if (!(overlap >= 0.0 && overlap < 1.0))
      throw argument_error("chunking: overlap must lie in [0, 1)");
    if (axis == Axis::channel)
      throw argument_error("chunking: split axis must be frequency or time");
  }

  // Chunk geometry for a given axis extent. The nominal chunk size makes
  // N chunks with fractional overlap `overlap` span the whole extent; it is
  // then bumped if integer rounding of the hop would leave a trailing gap, so
  // every input element lands in at least one chunk.
  ChunkPlan plan(long long extent) const {
    validate();
    if (extent < n_chunks)
      throw argument_error("chunking: extent " + std::to_string(extent) +
                           " smaller than n_chunks " + std::to_string(n_chunks));
    ChunkPlan p;
    p.n_chunks = n_chunks;
    double denom = static_cast<double>(n_chunks) * (1.0 - overlap) + overlap;
    long long c = static_cast<long long>(
        std::ceil(static_cast<double>(extent) / denom - 1e-12));
    long long h = std::max<long long>(
        1, static_cast<long long>(std::floor(static_cast<double>(c) * (1.0 - overlap) + 1e-12)));
    c = std::max(c, extent - (n_chunks - 1) * h);
    p.chunk_extent = c;
    p.hop = h;
    p.padded_extent = std::max(extent, (n_chunks - 1) * h + c);
    return p;
  }
};

// Splits a [F, T] spectrogram into the chunk stack described by `spec`:
// frequency axis -> [N, c, T], time axis -> [N, F, c]. Regions of a chunk
// past the input extent are zero.
inline Tensor chunk_axis(const Tensor& spectrogram, const ChunkSpec& spec) {
  if (spectrogram->shape.size() != 2)
    throw shape_error("chunk_axis: expected a [F, T] spectrogram, got " +
                      shape_str(spectrogram->shape));
  long long F = spectrogram->shape[0];
  long long T = spectrogram->shape[1];
  long long extent = spec.axis == Axis::frequency ? F : T;
  ChunkPlan p = spec.plan(extent);
  const std::vector<double>& src = spectrogram->data;
  std::vector<double> out;
  std::vector<long long> shape;
  if (spec.axis == Axis::frequency) {
    shape = {p.n_chunks, p.chunk_extent, T};
    out.assign(static_cast<std::size_t>(p.n_chunks * p.chunk_extent * T), 0.0);
    for (long long k = 0; k < p.n_chunks; ++k) {
      long long start = k * p.hop;
      for (long long r = 0; r < p.chunk_extent; ++r) {
        long long f = start + r;
        if (f >= F) break;
        std::copy(src.begin() + f * T, src.begin() + (f + 1) * T,
                  out.begin() + (k * p.chunk_extent + r) * T);
      }
    }
  } else {
    shape = {p.n_chunks, F, p.chunk_extent};
    out.assign(static_cast<std::size_t>(p.n_chunks * F * p.chunk_extent), 0.0);
    for (long long k = 0; k < p.n_chunks; ++k) {
      long long start = k * p.hop;
      long long width = std::min(p.chunk_extent, T - start);
      for (long long f = 0; f < F; ++f)
        for (long long c = 0; c < width; ++c)
          out[static_cast<std::size_t>((k * F + f) * p.chunk_extent + c)] =
              src[static_cast<std::size_t>(f * T + start + c)];
    }
  }
  return make_leaf(shape, std::move(out));
}

// Stacks per-clip chunk tensors [N, A, B] into a batch [BATCH, N, A, B].
inline Tensor stack_chunked(const std::vector<Tensor>& clips) {
  if (clips.empty()) throw argument_error("stack_chunked: empty batch");
  const std::vector<long long>& s0 = clips[0]->shape;
  if (s0.size() != 3)
    throw shape_error("stack_chunked: expected [N, A, B] chunk stacks, got " + shape_str(s0));
  for (const Tensor& c : clips)
    if (c->shape != s0)
      throw shape_error("stack_chunked: mismatched chunk shapes " + shape_str(s0) + " vs " +
                        shape_str(c->shape));
  long long per = clips[0]->numel();
  std::vector<double> out(static_cast<std::size_t>(per * static_cast<long long>(clips.size())));
  for (std::size_t i = 0; i < clips.size(); ++i)
    std::copy(clips[i]->data.begin(), clips[i]->data.end(),
              out.begin() + static_cast<long long>(i) * per);
  return make_leaf({static_cast<long long>(clips.size()), s0[0], s0[1], s0[2]}, std::move(out));
}

// Stacks per-clip vectors [L] into a batch [BATCH, L].
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw argument_error("stack_rows: empty batch");
  const std::vector<long long>& s0 = rows[0]->shape;
  if (s0.size() != 1)
    throw shape_error("stack_rows: expected 1-D rows, got " + shape_str(s0));
  for (const Tensor& r : rows)
    if (r->shape != s0)
      throw shape_error("stack_rows: mismatched row lengths " + shape_str(s0) + " vs " +
                        shape_str(r->shape));
  long long per = s0[0];
  std::vector<double> out(static_cast<std::size_t>(per * static_cast<long long>(rows.size())));
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i]->data.begin(), rows[i]->data.end(),
              out.begin() + static_cast<long long>(i) * per);
  return make_leaf({static_cast<long long>(rows.size()), per}, std::move(out));
}

}  // namespace fteasd
