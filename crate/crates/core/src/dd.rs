//! Double-double arithmetic and a Householder QR built on it, for the basis
//! computations whose Fourier matrices reach condition numbers near 1e18.

use std::ops::{Add, AddAssign, Div, DivAssign, Mul, Neg, Sub, SubAssign};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return dd(0.0);
        }
        // One Newton step on the f64 root.
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let r = ((self.hi - p) - e + self.lo) / (2.0 * x);
        Self::renorm(x, r)
    }
}

pub(crate) fn dd(v: f64) -> Dd {
    Dd { hi: v, lo: 0.0 }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * dd(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * dd(q2);
        let q3 = r.hi / o.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + dd(q3)
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, o: f64) -> Dd {
        self + dd(o)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, o: f64) -> Dd {
        self - dd(o)
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, o: f64) -> Dd {
        self * dd(o)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl SubAssign for Dd {
    fn sub_assign(&mut self, o: Dd) {
        *self = *self - o;
    }
}

impl DivAssign for Dd {
    fn div_assign(&mut self, o: Dd) {
        *self = *self / o;
    }
}

pub(crate) fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(dd(0.0), |acc, (x, y)| acc + *x * *y)
}

/// Thin Householder QR of an `m x n` matrix with `m >= n`.
pub(crate) struct Qr {
    m: usize,
    n: usize,
    /// Reflector for column `k`, acting on rows `k..m`; empty for a zero column.
    v: Vec<Vec<Dd>>,
    /// Row-major `n x n` upper-triangular factor.
    r: Vec<Dd>,
}

impl Qr {
    pub fn new(m: usize, n: usize, entry: impl Fn(usize, usize) -> f64) -> Self {
        assert!(m >= n, "QR needs at least as many rows as columns");
        let mut a: Vec<Vec<Dd>> = (0..n).map(|j| (0..m).map(|i| dd(entry(i, j))).collect()).collect();
        let mut v = Vec::with_capacity(n);
        for k in 0..n {
            let norm = a[k][k..].iter().fold(dd(0.0), |s, x| s + *x * *x).sqrt();
            if norm.hi() == 0.0 {
                v.push(Vec::new());
                continue;
            }
            let alpha = if a[k][k].hi() >= 0.0 { -norm } else { norm };
            let mut vk: Vec<Dd> = a[k][k..].to_vec();
            vk[0] -= alpha;
            let vnorm2 = vk.iter().fold(dd(0.0), |s, x| s + *x * *x);
            for col in a.iter_mut().skip(k) {
                let f = dot(&vk, &col[k..]) * 2.0 / vnorm2;
                for (x, vi) in col[k..].iter_mut().zip(&vk) {
                    *x -= f * *vi;
                }
            }
            let scale = vnorm2.sqrt();
            for x in vk.iter_mut() {
                *x /= scale;
            }
            v.push(vk);
        }
        let mut r = vec![dd(0.0); n * n];
        for j in 0..n {
            for i in 0..=j {
                r[i * n + j] = a[j][i];
            }
        }
        Self { m, n, v, r }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self, i: usize, j: usize) -> Dd {
        self.r[i * self.n + j]
    }

    fn reflect(&self, k: usize, b: &mut [Dd]) {
        let vk = &self.v[k];
        if vk.is_empty() {
            return;
        }
        let f = dot(vk, &b[k..]) * 2.0;
        for (x, vi) in b[k..].iter_mut().zip(vk) {
            *x -= f * *vi;
        }
    }

    /// `b <- Q^T b` with the full orthogonal factor.
    pub fn apply_qt(&self, b: &mut [Dd]) {
        debug_assert_eq!(b.len(), self.m);
        for k in 0..self.n {
            self.reflect(k, b);
        }
    }

    pub fn apply_q(&self, b: &mut [Dd]) {
        debug_assert_eq!(b.len(), self.m);
        for k in (0..self.n).rev() {
            self.reflect(k, b);
        }
    }

    /// The `n` orthonormal columns of the thin factor, each of length `m`.
    pub fn thin_q(&self) -> Vec<Vec<Dd>> {
        (0..self.n)
            .map(|j| {
                let mut e = vec![dd(0.0); self.m];
                e[j] = dd(1.0);
                self.apply_q(&mut e);
                e
            })
            .collect()
    }

    /// Solves `R x = rhs[..n]`.
    pub fn solve_r(&self, rhs: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        let mut x = vec![dd(0.0); n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in i + 1..n {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r(i, i);
        }
        x
    }

    /// `argmin_x |A x - b|`.
    pub fn least_squares(&self, b: &[f64]) -> Vec<Dd> {
        let mut y: Vec<Dd> = b.iter().map(|&v| dd(v)).collect();
        self.apply_qt(&mut y);
        self.solve_r(&y)
    }

    /// `|R|_F |R^-1|_F`, an upper bound on the 2-norm condition number of
    /// `A` within a factor `n`; infinite when a diagonal entry vanishes.
    pub fn condition(&self) -> f64 {
        let n = self.n;
        if (0..n).any(|i| self.r(i, i).hi() == 0.0) {
            return f64::INFINITY;
        }
        let norm = self.r.iter().map(|x| x.hi() * x.hi()).sum::<f64>().sqrt();
        let mut inv2 = 0.0;
        for j in 0..n {
            let mut e = vec![dd(0.0); n];
            e[j] = dd(1.0);
            inv2 += self.solve_r(&e).iter().map(|x| x.hi() * x.hi()).sum::<f64>();
        }
        norm * inv2.sqrt()
    }

    /// Number of diagonal entries of `R` above `rel_tol` times the largest.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let diag: Vec<f64> = (0..self.n).map(|i| self.r(i, i).hi().abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        diag.iter().filter(|&&d| d > rel_tol * max).count()
    }

    #[cfg(test)]
    /// `sum_k ln |R_kk|`, the log of `|det A|` for a square matrix.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|i| self.r(i, i).hi().abs().ln()).sum()
    }
}
