#include "flowstate/scan.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace flowstate {

ComplexVec::ComplexVec(std::vector<double> r, std::vector<double> i)
    : re(std::move(r)), im(std::move(i)) {
  if (re.size() != im.size()) throw std::invalid_argument("ComplexVec: re/im length mismatch");
}

ScanElement scan_op(const ScanElement& left, const ScanElement& right) {
  const std::size_t n = left.a.size();
  if (left.b.size() != n || right.a.size() != n || right.b.size() != n) {
    throw std::invalid_argument("scan_op: element length mismatch");
  }
  ScanElement out;
  out.a = ComplexVec(n);
  out.b = ComplexVec(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double ra = right.a.re[p], ri = right.a.im[p];
    const double la = left.a.re[p], li = left.a.im[p];
    const double lbr = left.b.re[p], lbi = left.b.im[p];
    out.a.re[p] = ra * la - ri * li;
    out.a.im[p] = ra * li + ri * la;
    out.b.re[p] = (ra * lbr - ri * lbi) + right.b.re[p];
    out.b.im[p] = (ra * lbi + ri * lbr) + right.b.im[p];
  }
  return out;
}

namespace {

inline long next_pow2(long n) {
  long p = 1;
  while (p < n) p <<= 1;
  return p;
}

// dst (right slot) <- compose(left slot, dst): a = da.*la, b = da.*lb + db
inline void compose_rows(double* da_re, double* da_im, double* db_re, double* db_im,
                         const double* la_re, const double* la_im, const double* lb_re,
                         const double* lb_im, long P) {
  for (long p = 0; p < P; ++p) {
    const double ar = da_re[p], ai = da_im[p];
    const double nbr = (ar * lb_re[p] - ai * lb_im[p]) + db_re[p];
    const double nbi = (ar * lb_im[p] + ai * lb_re[p]) + db_im[p];
    const double nar = ar * la_re[p] - ai * la_im[p];
    const double nai = ar * la_im[p] + ai * la_re[p];
    da_re[p] = nar;
    da_im[p] = nai;
    db_re[p] = nbr;
    db_im[p] = nbi;
  }
}

}  // namespace

void diag_scan_planar_general(const double* a_re, const double* a_im, const double* b_re,
                              const double* b_im, long L, long P, double* s_re, double* s_im) {
  if (L == 0) return;
  const long n = next_pow2(L);
  const std::size_t plane = static_cast<std::size_t>(n) * P;

  // Work buffers, padded with identity elements (a=1, b=0).
  std::vector<double> wa_re(plane, 1.0), wa_im(plane, 0.0);
  std::vector<double> wb_re(plane, 0.0), wb_im(plane, 0.0);
  const std::size_t used = static_cast<std::size_t>(L) * P;
  std::memcpy(wa_re.data(), a_re, used * sizeof(double));
  std::memcpy(wa_im.data(), a_im, used * sizeof(double));
  std::memcpy(wb_re.data(), b_re, used * sizeof(double));
  std::memcpy(wb_im.data(), b_im, used * sizeof(double));

  auto row = [P](std::vector<double>& buf, long k) { return buf.data() + static_cast<std::size_t>(k) * P; };

  // Up-sweep: aligned block sums.
  for (long stride = 2; stride <= n; stride <<= 1) {
    for (long i = 0; i < n; i += stride) {
      const long l = i + stride / 2 - 1;
      const long r = i + stride - 1;
      compose_rows(row(wa_re, r), row(wa_im, r), row(wb_re, r), row(wb_im, r), row(wa_re, l),
                   row(wa_im, l), row(wb_re, l), row(wb_im, l), P);
    }
  }

  // Down-sweep: exclusive prefixes in composition order.
  {
    double* tr = row(wa_re, n - 1);
    double* ti = row(wa_im, n - 1);
    double* br = row(wb_re, n - 1);
    double* bi = row(wb_im, n - 1);
    for (long p = 0; p < P; ++p) {
      tr[p] = 1.0;
      ti[p] = 0.0;
      br[p] = 0.0;
      bi[p] = 0.0;
    }
  }
  std::vector<double> ta(P), ti(P), tb(P), tbi(P);
  for (long stride = n; stride >= 2; stride >>= 1) {
    for (long i = 0; i < n; i += stride) {
      const long l = i + stride / 2 - 1;
      const long r = i + stride - 1;
      // t := left subtree sum; left := parent prefix; right := parent prefix o t
      std::memcpy(ta.data(), row(wa_re, l), P * sizeof(double));
      std::memcpy(ti.data(), row(wa_im, l), P * sizeof(double));
      std::memcpy(tb.data(), row(wb_re, l), P * sizeof(double));
      std::memcpy(tbi.data(), row(wb_im, l), P * sizeof(double));
      std::memcpy(row(wa_re, l), row(wa_re, r), P * sizeof(double));
      std::memcpy(row(wa_im, l), row(wa_im, r), P * sizeof(double));
      std::memcpy(row(wb_re, l), row(wb_re, r), P * sizeof(double));
      std::memcpy(row(wb_im, l), row(wb_im, r), P * sizeof(double));
      // right slot currently holds the parent prefix; fold the left sum on top
      double* rr = row(wa_re, r);
      double* rimag = row(wa_im, r);
      double* rbr = row(wb_re, r);
      double* rbi = row(wb_im, r);
      for (long p = 0; p < P; ++p) {
        const double pa_r = rr[p], pa_i = rimag[p];
        const double nbr = (ta[p] * rbr[p] - ti[p] * rbi[p]);
        const double nbi2 = (ta[p] * rbi[p] + ti[p] * rbr[p]);
        // compose(prefix, t): a = t.a .* prefix.a, b = t.a .* prefix.b + t.b
        rbr[p] = nbr + tb[p];
        rbi[p] = nbi2 + tbi[p];
        rr[p] = ta[p] * pa_r - ti[p] * pa_i;
        rimag[p] = ta[p] * pa_i + ti[p] * pa_r;
      }
    }
  }

  // Inclusive states: s_k = a_k .* exclusive_b_k + b_k (s_0 = 0 drops the a-part).
  for (long k = 0; k < L; ++k) {
    const double* ea = a_re + static_cast<std::size_t>(k) * P;
    const double* ei = a_im + static_cast<std::size_t>(k) * P;
    const double* eb = b_re + static_cast<std::size_t>(k) * P;
    const double* ebi = b_im + static_cast<std::size_t>(k) * P;
    const double* xb = row(wb_re, k);
    const double* xbi = row(wb_im, k);
    double* or_ = s_re + static_cast<std::size_t>(k) * P;
    double* oi = s_im + static_cast<std::size_t>(k) * P;
    for (long p = 0; p < P; ++p) {
      or_[p] = (ea[p] * xb[p] - ei[p] * xbi[p]) + eb[p];
      oi[p] = (ea[p] * xbi[p] + ei[p] * xb[p]) + ebi[p];
    }
  }
}

void diag_scan_planar(const std::vector<double>& a_re, const std::vector<double>& a_im,
                      const double* b_re, const double* b_im, long L, long P, double* s_re,
                      double* s_im) {
  if (static_cast<long>(a_re.size()) != P || static_cast<long>(a_im.size()) != P) {
    throw std::invalid_argument("diag_scan_planar: transition length != P");
  }
  std::vector<double> ar(static_cast<std::size_t>(L) * P), ai(static_cast<std::size_t>(L) * P);
  for (long t = 0; t < L; ++t) {
    std::memcpy(ar.data() + static_cast<std::size_t>(t) * P, a_re.data(), P * sizeof(double));
    std::memcpy(ai.data() + static_cast<std::size_t>(t) * P, a_im.data(), P * sizeof(double));
  }
  diag_scan_planar_general(ar.data(), ai.data(), b_re, b_im, L, P, s_re, s_im);
}

std::vector<ComplexVec> parallel_scan(const std::vector<ScanElement>& elements) {
  const long L = static_cast<long>(elements.size());
  if (L == 0) return {};
  const long P = static_cast<long>(elements[0].a.size());
  for (const auto& e : elements) {
    if (static_cast<long>(e.a.size()) != P || static_cast<long>(e.b.size()) != P) {
      throw std::invalid_argument("parallel_scan: element length mismatch");
    }
  }
  std::vector<double> ar(static_cast<std::size_t>(L) * P), ai(ar.size()), br(ar.size()),
      bi(ar.size());
  for (long t = 0; t < L; ++t) {
    const auto& e = elements[static_cast<std::size_t>(t)];
    std::memcpy(ar.data() + static_cast<std::size_t>(t) * P, e.a.re.data(), P * sizeof(double));
    std::memcpy(ai.data() + static_cast<std::size_t>(t) * P, e.a.im.data(), P * sizeof(double));
    std::memcpy(br.data() + static_cast<std::size_t>(t) * P, e.b.re.data(), P * sizeof(double));
    std::memcpy(bi.data() + static_cast<std::size_t>(t) * P, e.b.im.data(), P * sizeof(double));
  }
  std::vector<double> sr(ar.size()), si(ar.size());
  diag_scan_planar_general(ar.data(), ai.data(), br.data(), bi.data(), L, P, sr.data(), si.data());

  std::vector<ComplexVec> out(static_cast<std::size_t>(L));
  for (long t = 0; t < L; ++t) {
    ComplexVec s(static_cast<std::size_t>(P));
    std::memcpy(s.re.data(), sr.data() + static_cast<std::size_t>(t) * P, P * sizeof(double));
    std::memcpy(s.im.data(), si.data() + static_cast<std::size_t>(t) * P, P * sizeof(double));
    out[static_cast<std::size_t>(t)] = std::move(s);
  }
  return out;
}

std::vector<double> cumulative_sum(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i];
    out[i] = acc;
  }
  return out;
}

}  // namespace flowstate
