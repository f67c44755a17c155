#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace pobds {

// d-gene Boolean activity vector packed into a machine word. Gene g
// (0-based) occupies bit g, so the canonical integer encoding of a state is
// the word itself: state index i has the bit pattern of i with gene 0 as the
// least-significant bit. Every enumeration in the project uses this order.
class BooleanState {
public:
  static constexpr int kMaxDim = 64;

  BooleanState() = default;

  BooleanState(std::uint64_t word, int dim) : word_(word), dim_(dim) {
    if (dim < 1 || dim > kMaxDim)
      throw std::invalid_argument("BooleanState: dimension out of range");
    if (dim < 64 && (word >> dim) != 0)
      throw std::invalid_argument("BooleanState: bits set above dimension");
  }

  static BooleanState decode(std::uint64_t index, int dim) { return {index, dim}; }

  static BooleanState from_bits(std::span<const int> bits) {
    std::uint64_t w = 0;
    for (std::size_t g = 0; g < bits.size(); ++g) {
      if (bits[g] != 0 && bits[g] != 1)
        throw std::invalid_argument("BooleanState: bits must be 0 or 1");
      if (bits[g]) w |= std::uint64_t{1} << g;
    }
    return {w, static_cast<int>(bits.size())};
  }

  std::uint64_t encode() const { return word_; }
  int dim() const { return dim_; }

  bool bit(int gene) const { return (word_ >> gene) & 1u; }

  BooleanState operator^(const BooleanState& other) const {
    if (dim_ != other.dim_)
      throw std::invalid_argument("BooleanState: dimension mismatch in xor");
    return {word_ ^ other.word_, dim_};
  }

  int hamming_weight() const { return std::popcount(word_); }
  int hamming_distance(const BooleanState& other) const {
    if (dim_ != other.dim_)
      throw std::invalid_argument("BooleanState: dimension mismatch in distance");
    return std::popcount(word_ ^ other.word_);
  }

  std::vector<int> bits() const {
    std::vector<int> out(dim_);
    for (int g = 0; g < dim_; ++g) out[g] = bit(g) ? 1 : 0;
    return out;
  }

  bool operator==(const BooleanState& other) const = default;

private:
  std::uint64_t word_ = 0;
  int dim_ = 0;
};

// All 2^d states in canonical order; guarded to d <= 20 (memory).
inline std::vector<BooleanState> enumerate_states(int dim) {
  if (dim < 1 || dim > 20)
    throw std::invalid_argument("enumerate_states: dimension must be in [1, 20]");
  std::vector<BooleanState> states;
  states.reserve(std::size_t{1} << dim);
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << dim); ++i)
    states.emplace_back(i, dim);
  return states;
}

// Componentwise threshold at 1/2; the tie value 1/2 itself maps to 0
// (strict "> 1/2"). Entries must lie in [0, 1].
inline BooleanState binarize(std::span<const double> v) {
  std::uint64_t w = 0;
  for (std::size_t g = 0; g < v.size(); ++g) {
    if (!(v[g] >= 0.0 && v[g] <= 1.0))
      throw std::invalid_argument("binarize: entries must lie in [0, 1]");
    if (v[g] > 0.5) w |= std::uint64_t{1} << g;
  }
  return {w, static_cast<int>(v.size())};
}

struct MmseEstimate {
  BooleanState state;
  double mse = 0.0;
};

// Optimal Boolean estimate from a posterior mean vector z in [0,1]^d:
// state = binarize(z), conditional MSE = || min{z, 1-z} ||_1.
inline MmseEstimate mmse_from_mean(std::span<const double> mean) {
  MmseEstimate est{binarize(mean), 0.0};
  for (const double z : mean) est.mse += std::min(z, 1.0 - z);
  return est;
}

}  // namespace pobds
