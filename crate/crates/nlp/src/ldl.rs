//! Symmetric indefinite factorization `P A Pᵀ = L D Lᵀ` with Bunch-Kaufman
//! partial pivoting.
//!
//! Interior-point steps need the inertia of the KKT matrix, which a plain LU
//! cannot provide. `D` is block diagonal with 1×1 and 2×2 blocks, so the
//! inertia follows from Sylvester's law by inspecting those blocks.

/// Number of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Dense symmetric matrix in column-major order; only the lower triangle is
/// read by the factorization.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to the lower-triangle slot of `(i, j)`, whichever order the
    /// indices come in.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.data[r + c * self.n] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.data[r + c * self.n]
    }

    pub fn set_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `out = A x` using the lower triangle as the symmetric source.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            let col = &self.data[j * n..(j + 1) * n];
            out[j] += col[j] * x[j];
            for i in j + 1..n {
                out[i] += col[i] * x[j];
                out[j] += col[i] * x[i];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.n;
        (0..n)
            .flat_map(|j| self.data[j * n + j..(j + 1) * n].iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    /// 1×1 block; the row was exchanged with the given index.
    One(usize),
    /// First row of a 2×2 block; the second row was exchanged with the index.
    TwoFirst(usize),
    TwoSecond(usize),
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    a: Vec<f64>,
    pivots: Vec<Pivot>,
    inertia: Inertia,
}

const BK_ALPHA: f64 = 0.640_388_203_202_208; // (1 + sqrt(17)) / 8

impl LdlFactor {
    /// Factorizes `matrix` in place. `zero_tol` is the magnitude below which a
    /// pivot block eigenvalue is counted as zero.
    pub fn factor(matrix: SymMatrix, zero_tol: f64) -> Self {
        let n = matrix.n;
        let mut a = matrix.data;
        let mut pivots = vec![Pivot::One(0); n];
        let idx = |i: usize, j: usize| i + j * n;

        let mut k = 0;
        while k < n {
            let absakk = a[idx(k, k)].abs();
            let (imax, colmax) = if k + 1 < n {
                let col = &a[idx(k + 1, k)..idx(n, k)];
                let (off, m) = col
                    .iter()
                    .enumerate()
                    .fold((0, 0.0_f64), |(bi, bm), (i, v)| if v.abs() > bm { (i, v.abs()) } else { (bi, bm) });
                (k + 1 + off, m)
            } else {
                (k, 0.0)
            };

            let mut kstep = 1;
            let kp;
            if absakk.max(colmax) == 0.0 {
                // Exactly zero column: nothing to eliminate.
                pivots[k] = Pivot::One(k);
                k += 1;
                continue;
            } else if absakk >= BK_ALPHA * colmax {
                kp = k;
            } else {
                let mut rowmax = 0.0_f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[idx(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[idx(i, imax)].abs());
                }
                if absakk >= BK_ALPHA * colmax * (colmax / rowmax) {
                    kp = k;
                } else if a[idx(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    kstep = 2;
                }
            }

            let kk = k + kstep - 1;
            if kp != kk {
                for i in kp + 1..n {
                    a.swap(idx(i, kk), idx(i, kp));
                }
                for j in kk + 1..kp {
                    a.swap(idx(j, kk), idx(kp, j));
                }
                a.swap(idx(kk, kk), idx(kp, kp));
                if kstep == 2 {
                    a.swap(idx(k + 1, k), idx(kp, k));
                }
            }

            if kstep == 1 {
                let d = a[idx(k, k)];
                let dinv = 1.0 / d;
                for j in k + 1..n {
                    let f = a[idx(j, k)] * dinv;
                    if f != 0.0 {
                        let (head, tail) = a.split_at_mut(idx(0, j));
                        let colk = &head[idx(j, k)..idx(n, k)];
                        let colj = &mut tail[j..n];
                        for (t, s) in colj.iter_mut().zip(colk) {
                            *t -= s * f;
                        }
                    }
                }
                for i in k + 1..n {
                    a[idx(i, k)] *= dinv;
                }
                pivots[k] = Pivot::One(kp);
            } else {
                let d21 = a[idx(k + 1, k)];
                let d11 = a[idx(k + 1, k + 1)] / d21;
                let d22 = a[idx(k, k)] / d21;
                let t = 1.0 / (d11 * d22 - 1.0);
                let d21 = t / d21;
                for j in k + 2..n {
                    let wk = d21 * (d11 * a[idx(j, k)] - a[idx(j, k + 1)]);
                    let wkp1 = d21 * (d22 * a[idx(j, k + 1)] - a[idx(j, k)]);
                    for i in j..n {
                        a[idx(i, j)] -= a[idx(i, k)] * wk + a[idx(i, k + 1)] * wkp1;
                    }
                    a[idx(j, k)] = wk;
                    a[idx(j, k + 1)] = wkp1;
                }
                pivots[k] = Pivot::TwoFirst(kp);
                pivots[k + 1] = Pivot::TwoSecond(kp);
            }
            k += kstep;
        }

        let mut inertia = Inertia::default();
        let mut k = 0;
        while k < n {
            match pivots[k] {
                Pivot::One(_) => {
                    let d = a[idx(k, k)];
                    if d.abs() <= zero_tol {
                        inertia.zero += 1;
                    } else if d > 0.0 {
                        inertia.positive += 1;
                    } else {
                        inertia.negative += 1;
                    }
                    k += 1;
                }
                _ => {
                    let (p, q, r) = (a[idx(k, k)], a[idx(k + 1, k)], a[idx(k + 1, k + 1)]);
                    let mean = 0.5 * (p + r);
                    let rad = (0.25 * (p - r).powi(2) + q * q).sqrt();
                    for ev in [mean + rad, mean - rad] {
                        if ev.abs() <= zero_tol {
                            inertia.zero += 1;
                        } else if ev > 0.0 {
                            inertia.positive += 1;
                        } else {
                            inertia.negative += 1;
                        }
                    }
                    k += 2;
                }
            }
        }

        Self {
            n,
            a,
            pivots,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place. Meaningless if the inertia reports zeros.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let a = &self.a;
        let idx = |i: usize, j: usize| i + j * n;

        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::One(kp) => {
                    if kp != k {
                        b.swap(k, kp);
                    }
                    let bk = b[k];
                    for i in k + 1..n {
                        b[i] -= a[idx(i, k)] * bk;
                    }
                    b[k] = bk / a[idx(k, k)];
                    k += 1;
                }
                Pivot::TwoFirst(kp) => {
                    if kp != k + 1 {
                        b.swap(k + 1, kp);
                    }
                    let (b0, b1) = (b[k], b[k + 1]);
                    for i in k + 2..n {
                        b[i] -= a[idx(i, k)] * b0 + a[idx(i, k + 1)] * b1;
                    }
                    let akm1k = a[idx(k + 1, k)];
                    let akm1 = a[idx(k, k)] / akm1k;
                    let ak = a[idx(k + 1, k + 1)] / akm1k;
                    let denom = akm1 * ak - 1.0;
                    let bkm1 = b0 / akm1k;
                    let bk = b1 / akm1k;
                    b[k] = (ak * bkm1 - bk) / denom;
                    b[k + 1] = (akm1 * bk - bkm1) / denom;
                    k += 2;
                }
                Pivot::TwoSecond(_) => unreachable!("2x2 block visited from its second row"),
            }
        }

        let mut k = n;
        while k > 0 {
            let kk = k - 1;
            match self.pivots[kk] {
                Pivot::One(kp) => {
                    let mut s = 0.0;
                    for i in kk + 1..n {
                        s += a[idx(i, kk)] * b[i];
                    }
                    b[kk] -= s;
                    if kp != kk {
                        b.swap(kk, kp);
                    }
                    k -= 1;
                }
                Pivot::TwoSecond(kp) => {
                    let first = kk - 1;
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for i in kk + 1..n {
                        s1 += a[idx(i, kk)] * b[i];
                        s0 += a[idx(i, first)] * b[i];
                    }
                    b[kk] -= s1;
                    b[first] -= s0;
                    if kp != kk {
                        b.swap(kk, kp);
                    }
                    k -= 2;
                }
                Pivot::TwoFirst(_) => unreachable!("2x2 block visited from its first row"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> (SymMatrix, DMatrix<f64>) {
        let mut s = SymMatrix::zeros(n);
        let mut d = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                s.add(i, j, v);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        (s, d)
    }

    #[test]
    fn solves_and_counts_inertia_on_random_indefinite_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 5, 17, 40] {
            for _ in 0..10 {
                let (s, d) = random_sym(n, &mut rng);
                let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f = LdlFactor::factor(s, 1e-13);
                let mut x = b.clone();
                f.solve_in_place(&mut x);
                let r = &d * DVector::from_vec(x) - DVector::from_vec(b);
                assert!(r.amax() < 1e-8, "residual {} at n={n}", r.amax());

                let eig = SymmetricEigen::new(d.clone());
                let pos = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
                let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
                assert_eq!(f.inertia(), Inertia { positive: pos, negative: neg, zero: 0 });
            }
        }
    }

    #[test]
    fn kkt_saddle_point_inertia() {
        // [[I, a], [aᵀ, 0]] has inertia (n, 1, 0).
        let mut s = SymMatrix::zeros(3);
        s.add(0, 0, 1.0);
        s.add(1, 1, 1.0);
        s.add(2, 0, 1.0);
        s.add(2, 1, 1.0);
        let f = LdlFactor::factor(s, 1e-14);
        assert_eq!(f.inertia(), Inertia { positive: 2, negative: 1, zero: 0 });
        let mut rhs = [0.0, 0.0, 1.0];
        f.solve_in_place(&mut rhs);
        assert!((rhs[0] - 0.5).abs() < 1e-14 && (rhs[1] - 0.5).abs() < 1e-14);
        assert!((rhs[2] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reports_zero() {
        let mut s = SymMatrix::zeros(2);
        s.add(0, 0, 1.0);
        s.add(1, 0, 1.0);
        s.add(1, 1, 1.0);
        let f = LdlFactor::factor(s, 1e-12);
        assert_eq!(f.inertia().zero, 1);
    }
}
