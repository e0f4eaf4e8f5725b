//! Dense inner loops for batched network passes, with an AVX2 path selected at
//! runtime. Both paths multiply and add separately (no fused multiply-add), so
//! `panel` returns the same bits either way.

/// Appends `out[j][b] = init[j] + sum_k coefs[j][k] * src[k][b]` row by row,
/// accumulating in increasing `k` for every element. `coefs` is row-major
/// `n_out x n_in`; rows of `src` are `len` long and contiguous.
pub(crate) fn panel(out: &mut Vec<f64>, init: &[f64], coefs: &[f64], src: &[f64], len: usize) {
    let n_out = init.len();
    let n_in = coefs.len() / n_out;
    assert_eq!(coefs.len(), n_out * n_in);
    assert!(src.len() >= n_in * len);
    out.reserve(n_out * len);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 is available; shapes were checked above.
        unsafe { avx2::panel(out, init, coefs, src, len) };
        return;
    }
    for (&start, cj) in init.iter().zip(coefs.chunks_exact(n_in)) {
        for b in 0..len {
            let mut acc = start;
            for (k, &c) in cj.iter().enumerate() {
                acc += c * src[k * len + b];
            }
            out.push(acc);
        }
    }
}

/// `acc[k] += sum_b dz[b] * a[k][b]` for every row `k` of the feature-major
/// block `a` (rows `len` long).
pub(crate) fn outer_dots(acc: &mut [f64], dz: &[f64], a: &[f64], len: usize) {
    assert!(dz.len() >= len && a.len() >= acc.len() * len);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 is available; shapes were checked above.
        unsafe { avx2::outer_dots(acc, dz, a, len) };
        return;
    }
    for (k, g) in acc.iter_mut().enumerate() {
        let row = &a[k * len..(k + 1) * len];
        let mut s = [0.0f64; 4];
        let mut cd = dz[..len].chunks_exact(4);
        let mut cr = row.chunks_exact(4);
        for (x, y) in (&mut cd).zip(&mut cr) {
            for l in 0..4 {
                s[l] += x[l] * y[l];
            }
        }
        let tail: f64 = cd.remainder().iter().zip(cr.remainder()).map(|(x, y)| x * y).sum();
        *g += (s[0] + s[1]) + (s[2] + s[3]) + tail;
    }
}

/// Plain sum with four partial accumulators.
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut c = a.chunks_exact(4);
    for x in &mut c {
        for l in 0..4 {
            acc[l] += x[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + c.remainder().iter().sum::<f64>()
}

/// Replaces `dst` with LeakyReLU applied to `src`.
pub(crate) fn leaky_into(dst: &mut Vec<f64>, src: &[f64], slope: f64) {
    dst.clear();
    dst.resize(src.len(), 0.0);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 is available; lengths are equal.
        unsafe { avx2::scale_negative(dst.as_mut_ptr(), src.as_ptr(), src.as_ptr(), src.len(), slope) };
        return;
    }
    for (o, &v) in dst.iter_mut().zip(src) {
        *o = if v < 0.0 { v * slope } else { v };
    }
}

/// Multiplies `d` elementwise by the LeakyReLU derivative at `z`; the
/// derivative at exactly zero is taken to be 1.
pub(crate) fn leaky_grad(d: &mut [f64], z: &[f64], slope: f64) {
    assert_eq!(d.len(), z.len());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        let p = d.as_mut_ptr();
        // SAFETY: AVX2 is available; lengths are equal. Each element is read
        // before it is written, so updating in place is fine.
        unsafe { avx2::scale_negative(p, p, z.as_ptr(), d.len(), slope) };
        return;
    }
    for (g, &v) in d.iter_mut().zip(z) {
        if v < 0.0 {
            *g *= slope;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn panel(out: &mut Vec<f64>, init: &[f64], coefs: &[f64], src: &[f64], len: usize) {
        let n_in = coefs.len() / init.len();
        let full = len - len % 16;
        let s = src.as_ptr();
        for (&start, cj) in init.iter().zip(coefs.chunks_exact(n_in)) {
            let dst = out.as_mut_ptr().add(out.len());
            let mut b = 0;
            while b < full {
                let mut a0 = _mm256_set1_pd(start);
                let (mut a1, mut a2, mut a3) = (a0, a0, a0);
                for (k, &c) in cj.iter().enumerate() {
                    let cv = _mm256_set1_pd(c);
                    let p = s.add(k * len + b);
                    a0 = _mm256_add_pd(a0, _mm256_mul_pd(cv, _mm256_loadu_pd(p)));
                    a1 = _mm256_add_pd(a1, _mm256_mul_pd(cv, _mm256_loadu_pd(p.add(4))));
                    a2 = _mm256_add_pd(a2, _mm256_mul_pd(cv, _mm256_loadu_pd(p.add(8))));
                    a3 = _mm256_add_pd(a3, _mm256_mul_pd(cv, _mm256_loadu_pd(p.add(12))));
                }
                _mm256_storeu_pd(dst.add(b), a0);
                _mm256_storeu_pd(dst.add(b + 4), a1);
                _mm256_storeu_pd(dst.add(b + 8), a2);
                _mm256_storeu_pd(dst.add(b + 12), a3);
                b += 16;
            }
            for b in full..len {
                let mut acc = start;
                for (k, &c) in cj.iter().enumerate() {
                    acc += c * *s.add(k * len + b);
                }
                *dst.add(b) = acc;
            }
            out.set_len(out.len() + len);
        }
    }

    /// `dst[i] = if key[i] < 0 { src[i] * slope } else { src[i] }`.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn scale_negative(o: *mut f64, s: *const f64, k: *const f64, n: usize, slope: f64) {
        let full = n - n % 4;
        let sv = _mm256_set1_pd(slope);
        let zero = _mm256_setzero_pd();
        let mut i = 0;
        while i < full {
            let v = _mm256_loadu_pd(s.add(i));
            let neg = _mm256_cmp_pd::<_CMP_LT_OQ>(_mm256_loadu_pd(k.add(i)), zero);
            _mm256_storeu_pd(o.add(i), _mm256_blendv_pd(v, _mm256_mul_pd(v, sv), neg));
            i += 4;
        }
        for i in full..n {
            let v = *s.add(i);
            *o.add(i) = if *k.add(i) < 0.0 { v * slope } else { v };
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn outer_dots(acc: &mut [f64], dz: &[f64], a: &[f64], len: usize) {
        let mut k = 0;
        while k < acc.len() {
            let left = acc.len() - k;
            let row = a.as_ptr().add(k * len);
            let out = acc.as_mut_ptr().add(k);
            k += if left >= 4 {
                dots::<4>(out, dz.as_ptr(), row, len)
            } else if left >= 2 {
                dots::<2>(out, dz.as_ptr(), row, len)
            } else {
                dots::<1>(out, dz.as_ptr(), row, len)
            };
        }
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    unsafe fn dots<const K: usize>(out: *mut f64, dz: *const f64, rows: *const f64, len: usize) -> usize {
        let full = len - len % 8;
        let mut lo = [_mm256_setzero_pd(); K];
        let mut hi = [_mm256_setzero_pd(); K];
        let mut b = 0;
        while b < full {
            let d0 = _mm256_loadu_pd(dz.add(b));
            let d1 = _mm256_loadu_pd(dz.add(b + 4));
            for r in 0..K {
                let p = rows.add(r * len + b);
                lo[r] = _mm256_add_pd(lo[r], _mm256_mul_pd(d0, _mm256_loadu_pd(p)));
                hi[r] = _mm256_add_pd(hi[r], _mm256_mul_pd(d1, _mm256_loadu_pd(p.add(4))));
            }
            b += 8;
        }
        for r in 0..K {
            let mut lanes = [0.0f64; 4];
            _mm256_storeu_pd(lanes.as_mut_ptr(), _mm256_add_pd(lo[r], hi[r]));
            let mut tail = 0.0;
            for t in full..len {
                tail += *dz.add(t) * *rows.add(r * len + t);
            }
            *out.add(r) += (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail;
        }
        K
    }
}
