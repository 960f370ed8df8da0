#pragma once

#include <cstddef>
#include <vector>

namespace flowstate {

/// Complex values stored as separate re/im planes.
struct ComplexVec {
  std::vector<double> re;
  std::vector<double> im;

  ComplexVec() = default;
  ComplexVec(std::vector<double> r, std::vector<double> i);
  explicit ComplexVec(std::size_t n) : re(n, 0.0), im(n, 0.0) {}

  std::size_t size() const { return re.size(); }
};

/// One step of the diagonal linear recurrence s_t = a (.) s_{t-1} + b.
struct ScanElement {
  ComplexVec a;  ///< diagonal transition
  ComplexVec b;  ///< additive term
};

/// Composition of two recurrence steps: apply `left` first, then `right`.
/// Result: (right.a .* left.a, right.a .* left.b + right.b).
ScanElement scan_op(const ScanElement& left, const ScanElement& right);

/// Inclusive scan of the recurrence with s_0 = 0; output k is the state s_{k+1}
/// after consuming elements 0..k. Work-efficient Blelloch tree over a
/// power-of-two padded buffer (padding = identity elements a=1, b=0), so the
/// reduction order for any prefix is independent of the total length.
std::vector<ComplexVec> parallel_scan(const std::vector<ScanElement>& elements);

/// out[t] = sum_{i<=t} x[i]; empty input gives empty output.
std::vector<double> cumulative_sum(const std::vector<double>& x);

/// Planar batched scan used by the encoder: constant per-step transition `a`
/// (length P), additive terms `b` as L x P row-major planes. Writes the states
/// into `s` (L x P planes). Same reduction tree as parallel_scan.
void diag_scan_planar(const std::vector<double>& a_re, const std::vector<double>& a_im,
                      const double* b_re, const double* b_im, long L, long P, double* s_re,
                      double* s_im);

/// General planar scan with per-step transitions (a and b both L x P planes).
void diag_scan_planar_general(const double* a_re, const double* a_im, const double* b_re,
                              const double* b_im, long L, long P, double* s_re, double* s_im);

}  // namespace flowstate
