//! Sub-path decomposition `Q = C P` over a basis-path matrix and lossy path
//! compression `Q ~ C' P'` onto a subset of basis paths.
//!
//! Matrices follow one convention throughout: a waypoint matrix has one row
//! per coordinate and one column per waypoint; a basis matrix has one row per
//! basis path.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dd::{dd, dot, Dd, Qr};
use crate::error::{Error, Result};

/// Largest condition number accepted for a decomposition or a fit. The
/// factorizations run in double-double arithmetic (unit roundoff 2^-104), so
/// this bounds the coefficient error at about 1e-4 relative.
pub const MAX_CONDITION: f64 = 2e27;

/// Relative size below which a diagonal entry of the triangular factor
/// counts as zero when computing a rank.
const RANK_TOL: f64 = 1e-26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Fourier,
    ShiftedSine,
    Custom,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Fourier => "fourier",
            BasisKind::ShiftedSine => "shifted-sine",
            BasisKind::Custom => "custom",
        })
    }
}

/// Square `(L+1) x (L+1)` basis-path matrix; row `l` is basis path `p_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    entries: DMatrix<f64>,
    kind: BasisKind,
}

impl BasisMatrix {
    pub fn custom(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "basis matrix must be square with L >= 1, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("basis matrix has non-finite entries".into()));
        }
        Ok(Self {
            entries,
            kind: BasisKind::Custom,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// `L`, one less than the number of basis paths.
    pub fn l(&self) -> usize {
        self.entries.nrows() - 1
    }

    fn qr(&self) -> Qr {
        columns_qr(&self.entries)
    }

    /// Frobenius-norm condition estimate of the stored matrix.
    pub fn condition_number(&self) -> f64 {
        self.qr().condition()
    }

    pub fn rank(&self) -> usize {
        self.qr().rank(RANK_TOL)
    }

    /// Rows at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> DMatrix<f64> {
        self.entries.select_rows(indices)
    }
}

/// QR of `rows^T`, whose columns are the basis paths.
fn columns_qr(rows: &DMatrix<f64>) -> Qr {
    Qr::new(rows.ncols(), rows.nrows(), |i, j| rows[(j, i)])
}

/// `sin(pi num / den)` with the argument reduced exactly to `[0, pi/2]`,
/// so equal angles give bit-identical values.
fn sin_pi_frac(num: i64, den: i64) -> f64 {
    let mut n = num.rem_euclid(2 * den);
    let mut sign = 1.0;
    if n >= den {
        n -= den;
        sign = -1.0;
    }
    if 2 * n > den {
        n = den - n;
    }
    if 2 * n == den {
        return sign;
    }
    sign * (std::f64::consts::PI * n as f64 / den as f64).sin()
}

/// Fourier basis paths: row 0 all ones, row `l >= 1` is
/// `sin(pi * l * k / (2L))` for `k = 0..=L`.
pub fn fourier_basis(l: usize) -> Result<BasisMatrix> {
    if l < 1 {
        return Err(Error::InvalidInput("Fourier basis needs L >= 1".into()));
    }
    let entries = DMatrix::from_fn(l + 1, l + 1, |row, col| {
        if row == 0 {
            1.0
        } else {
            sin_pi_frac((row * col) as i64, 2 * l as i64)
        }
    });
    Ok(BasisMatrix {
        entries,
        kind: BasisKind::Fourier,
    })
}

/// Shifted-sine basis paths: row `l` is `sin(2 pi (k - l) / L)` on
/// `k in [0, b1(l)] u [l, b2(l)]` and zero elsewhere, with
/// `b1 = max(0, l - L/2 - 1)` and `b2 = min(L/2 + l, L)`.
///
/// The last row repeats row 0, so the full matrix is singular; only proper
/// subsets of rows are usable for compression.
pub fn shifted_sine_basis(l: usize) -> Result<BasisMatrix> {
    if l < 2 || l % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "shifted-sine basis needs an even L >= 2, got {l}"
        )));
    }
    let half = l / 2;
    let entries = DMatrix::from_fn(l + 1, l + 1, |row, col| {
        let b1 = row.saturating_sub(half + 1);
        let b2 = (half + row).min(l);
        if col <= b1 || (row..=b2).contains(&col) {
            sin_pi_frac(2 * (col as i64 - row as i64), l as i64)
        } else {
            0.0
        }
    });
    Ok(BasisMatrix {
        entries,
        kind: BasisKind::ShiftedSine,
    })
}

/// Path coefficients, one row per coordinate and one column per basis path,
/// held in double-double precision so that ill-conditioned bases still
/// reproduce their waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCoeffs {
    nrows: usize,
    ncols: usize,
    data: Vec<Dd>,
}

impl PathCoeffs {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            data: (0..m.nrows())
                .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| dd(m[(r, c)]))
                .collect(),
        }
    }

    fn from_rows(rows: Vec<Vec<Dd>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        Self {
            nrows,
            ncols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    fn at(&self, r: usize, c: usize) -> Dd {
        self.data[r * self.ncols + c]
    }

    /// Coefficient rounded to `f64`.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.at(r, c).hi()
    }

    /// Unevaluated sum `hi + lo` of a coefficient.
    pub fn hi_lo(&self, r: usize, c: usize) -> (f64, f64) {
        let v = self.at(r, c);
        (v.hi(), v.lo())
    }

    /// Coefficients rounded to `f64`.
    pub fn entries(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.get(r, c))
    }

    pub fn select_columns(&self, indices: &[usize]) -> Self {
        Self::from_rows(
            (0..self.nrows)
                .map(|r| indices.iter().map(|&c| self.at(r, c)).collect())
                .collect(),
        )
    }
}

/// `C = Q P^-1` for a full-rank basis.
pub fn decompose(q: &DMatrix<f64>, basis: &BasisMatrix) -> Result<PathCoeffs> {
    let p = basis.entries();
    if q.ncols() != p.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "waypoint matrix has {} columns, basis has {} paths",
            q.ncols(),
            p.nrows()
        )));
    }
    let qr = basis.qr();
    let cond = qr.condition();
    if !(cond < MAX_CONDITION) {
        return Err(Error::Decomposition {
            kind: basis.kind().to_string(),
            l: basis.l(),
            cond,
        });
    }
    // C P = Q  <=>  P^T C^T = Q^T
    Ok(solve_rows(&qr, q))
}

fn solve_rows(qr: &Qr, q: &DMatrix<f64>) -> PathCoeffs {
    PathCoeffs::from_rows(
        (0..q.nrows())
            .map(|d| qr.least_squares(&q.row(d).iter().copied().collect::<Vec<_>>()))
            .collect(),
    )
}

/// Superposition `C P` of basis rows, accumulated in double-double.
pub fn reconstruct(coeffs: &PathCoeffs, basis_rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if coeffs.ncols() != basis_rows.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients per coordinate for {} basis rows",
            coeffs.ncols(),
            basis_rows.nrows()
        )));
    }
    Ok(DMatrix::from_fn(coeffs.nrows(), basis_rows.ncols(), |d, i| {
        (0..coeffs.ncols())
            .fold(dd(0.0), |s, c| s + coeffs.at(d, c) * basis_rows[(c, i)])
            .hi()
    }))
}

/// Which basis paths a compression keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Rows `0..K`, the lowest path frequencies.
    Lowest,
    /// Rows `L+1-K..=L`, the highest path frequencies.
    Highest,
    /// Rows `0..K` of a basis without a frequency order.
    FirstK,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Lowest => "lowest",
            Selection::Highest => "highest",
            Selection::FirstK => "first-k",
        })
    }
}

/// How compressed coefficients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Least squares onto the kept rows.
    #[default]
    LeastSquares,
    /// Keep the matching entries of the full decomposition.
    Truncate,
}

pub fn select_indices(l: usize, k: usize, selection: Selection) -> Result<Vec<usize>> {
    if k == 0 || k > l + 1 {
        return Err(Error::InvalidInput(format!("K = {k} must lie in 1..={}", l + 1)));
    }
    Ok(match selection {
        Selection::Lowest | Selection::FirstK => (0..k).collect(),
        Selection::Highest => (l + 1 - k..=l).collect(),
    })
}

/// Compressed path `Q ~ C' P'` over `K` selected basis paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBasis {
    /// `K x (L+1)` selected basis rows.
    pub rows: DMatrix<f64>,
    pub selected_indices: Vec<usize>,
    /// One row per coordinate, `K` columns.
    pub coeffs: PathCoeffs,
}

impl CompressedBasis {
    pub fn k(&self) -> usize {
        self.rows.nrows()
    }

    /// `K / (L+1)`.
    pub fn rho_comp(&self) -> f64 {
        self.rows.nrows() as f64 / self.rows.ncols() as f64
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        reconstruct(&self.coeffs, &self.rows).expect("coefficients match the kept rows")
    }
}

/// Compresses `q` onto `k` basis paths with least-squares coefficients.
pub fn compress(
    q: &DMatrix<f64>,
    basis: &BasisMatrix,
    k: usize,
    selection: Selection,
) -> Result<CompressedBasis> {
    compress_with(q, basis, k, selection, FitMode::LeastSquares)
}

pub fn compress_with(
    q: &DMatrix<f64>,
    basis: &BasisMatrix,
    k: usize,
    selection: Selection,
    mode: FitMode,
) -> Result<CompressedBasis> {
    if q.ncols() != basis.l() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "waypoint matrix has {} columns, basis has {} paths",
            q.ncols(),
            basis.l() + 1
        )));
    }
    let selected_indices = select_indices(basis.l(), k, selection)?;
    let rows = basis.select(&selected_indices);
    let coeffs = match mode {
        FitMode::LeastSquares => least_squares_fit(q, &rows)?,
        FitMode::Truncate => decompose(q, basis)?.select_columns(&selected_indices),
    };
    Ok(CompressedBasis {
        rows,
        selected_indices,
        coeffs,
    })
}

fn row_qr(rows: &DMatrix<f64>) -> Result<Qr> {
    if rows.nrows() == 0 || rows.nrows() > rows.ncols() {
        return Err(Error::Compression(format!(
            "{} basis rows cannot be independent over {} waypoints",
            rows.nrows(),
            rows.ncols()
        )));
    }
    let qr = columns_qr(rows);
    let cond = qr.condition();
    if !(cond < MAX_CONDITION) {
        return Err(Error::Compression(format!(
            "the {} selected basis rows are rank deficient (condition number {cond:e})",
            rows.nrows()
        )));
    }
    Ok(qr)
}

/// `argmin_C |C rows - q|_F`.
pub fn least_squares_fit(q: &DMatrix<f64>, rows: &DMatrix<f64>) -> Result<PathCoeffs> {
    if q.ncols() != rows.ncols() {
        return Err(Error::DimensionMismatch("waypoint and basis columns differ".into()));
    }
    Ok(solve_rows(&row_qr(rows)?, q))
}

/// `(L+1) x K` orthonormal columns spanning the selected basis rows.
pub fn orthonormal_span(rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = row_qr(rows)?.thin_q();
    Ok(DMatrix::from_fn(rows.ncols(), rows.nrows(), |i, j| q[j][i].hi()))
}

/// Least-squares fit whose first and last columns reproduce `start` and
/// `end` exactly (one entry per coordinate row of `q`).
pub fn fit_with_endpoints(
    q: &DMatrix<f64>,
    rows: &DMatrix<f64>,
    start: &[f64],
    end: &[f64],
) -> Result<PathCoeffs> {
    if q.ncols() != rows.ncols() || start.len() != q.nrows() || end.len() != q.nrows() {
        return Err(Error::DimensionMismatch("endpoint fit shapes disagree".into()));
    }
    let qr = row_qr(rows)?;
    let k = qr.n();
    let last = rows.ncols() - 1;
    // In the orthonormal coordinates y of the span, waypoint i is u_i . y
    // and the fit is min |y - y0| subject to the endpoint rows.
    let basis = qr.thin_q();
    let u = |i: usize| -> Vec<Dd> { basis.iter().map(|col| col[i]).collect() };
    let mut constraints: Vec<(Vec<Dd>, bool)> = Vec::new();
    let u0 = u(0);
    let n0 = dot(&u0, &u0).hi();
    if n0 > 1e-24 {
        constraints.push((u0, true));
    }
    let ul = u(last);
    let nl = dot(&ul, &ul).hi();
    let independent = match constraints.first() {
        Some((c, _)) => {
            let proj = dot(c, &ul) / dd(n0);
            let resid: Vec<Dd> = ul.iter().zip(c).map(|(a, b)| *a - proj * *b).collect();
            dot(&resid, &resid).hi() > 1e-18 * nl
        }
        None => true,
    };
    if nl > 1e-24 && independent {
        constraints.push((ul, false));
    }

    let m = constraints.len();
    let gram: Vec<Vec<Dd>> = constraints
        .iter()
        .map(|(a, _)| constraints.iter().map(|(b, _)| dot(a, b)).collect())
        .collect();
    let mut out = Vec::with_capacity(q.nrows());
    for d in 0..q.nrows() {
        let mut y: Vec<Dd> = q.row(d).iter().map(|&v| dd(v)).collect();
        qr.apply_qt(&mut y);
        y.truncate(k);
        let resid: Vec<Dd> = constraints
            .iter()
            .map(|(c, is_start)| dot(c, &y) - if *is_start { start[d] } else { end[d] })
            .collect();
        let lambda = match m {
            0 => vec![],
            1 => vec![resid[0] / gram[0][0]],
            _ => {
                let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
                vec![
                    (gram[1][1] * resid[0] - gram[0][1] * resid[1]) / det,
                    (gram[0][0] * resid[1] - gram[1][0] * resid[0]) / det,
                ]
            }
        };
        for ((c, _), lam) in constraints.iter().zip(&lambda) {
            for (yi, ci) in y.iter_mut().zip(c) {
                *yi -= *lam * *ci;
            }
        }
        out.push(qr.solve_r(&y));
    }
    let out = PathCoeffs::from_rows(out);

    let fitted = reconstruct(&out, rows)?;
    for d in 0..q.nrows() {
        for (col, target) in [(0, start[d]), (last, end[d])] {
            let got = fitted[(d, col)];
            if (got - target).abs() > 1e-9 * (1.0 + target.abs()) {
                return Err(Error::Compression(format!(
                    "selected basis rows cannot pin waypoint {col} to {target} (best {got})"
                )));
            }
        }
    }
    Ok(out)
}

/// `|q - approx|_F / |q|_F`, or the absolute error when `q` is zero.
pub fn relative_error(q: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    let err = (q - approx).norm();
    let norm = q.norm();
    if norm > 0.0 {
        err / norm
    } else {
        err
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sign_changes(row: &[f64]) -> usize {
        let signs: Vec<bool> = row
            .iter()
            .filter(|v| v.abs() > 1e-9)
            .map(|v| *v > 0.0)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// `ln |det P|` of the exact Fourier matrix. Row `l` is
    /// `sin(t) U_{l-1}(cos t)`, so the determinant factors into the sines,
    /// the Chebyshev leading coefficients and a Vandermonde product.
    fn fourier_log_det(l: usize) -> f64 {
        let theta: Vec<f64> = (1..=l).map(|k| PI * k as f64 / (2.0 * l as f64)).collect();
        let mut s: f64 = theta.iter().map(|t| t.sin().ln()).sum();
        s += (l * (l - 1) / 2) as f64 * 2f64.ln();
        for i in 0..l {
            for j in i + 1..l {
                s += (theta[i].cos() - theta[j].cos()).abs().ln();
            }
        }
        s
    }

    #[test]
    fn fourier_rows() {
        let b = fourier_basis(2).unwrap();
        let row1: Vec<f64> = b.entries().row(1).iter().copied().collect();
        assert_eq!(row1[0], 0.0);
        assert!((row1[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(row1[2], 1.0);

        let b = fourier_basis(24).unwrap();
        assert!(b.entries().row(0).iter().all(|&v| v == 1.0));
        assert!((1..=24).all(|l| b.entries()[(l, 0)] == 0.0));
        for row in 1..=24 {
            for col in 0..=24 {
                let direct = (PI * (row * col) as f64 / 48.0).sin();
                assert!((b.entries()[(row, col)] - direct).abs() < 1e-14);
            }
        }
        let changes: Vec<usize> = (0..=24)
            .map(|l| sign_changes(&b.entries().row(l).iter().copied().collect::<Vec<_>>()))
            .collect();
        assert!(changes.windows(2).all(|w| w[0] <= w[1]), "{changes:?}");
        assert!(changes[24] > changes[1]);
    }

    #[test]
    fn fourier_full_rank() {
        for l in 1..=64 {
            let b = fourier_basis(l).unwrap();
            assert_eq!(b.rank(), l + 1, "L = {l}");
            assert!(b.condition_number() < MAX_CONDITION, "L = {l}");
            assert!(fourier_log_det(l).is_finite(), "L = {l}");
        }
        // Below L = 14 rounding the entries barely moves the determinant.
        for l in 1..=13 {
            let got = columns_qr(fourier_basis(l).unwrap().entries()).log_abs_det();
            let want = fourier_log_det(l);
            assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()), "L = {l}: {got} vs {want}");
        }
        assert!(fourier_basis(0).is_err());
    }

    #[test]
    fn shifted_sine_rows() {
        let b = shifted_sine_basis(4).unwrap();
        let row0: Vec<f64> = b.entries().row(0).iter().copied().collect();
        let expected = [0.0, 1.0, 0.0, 0.0, 0.0];
        for (a, e) in row0.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "{row0:?}");
        }
        assert!(shifted_sine_basis(5).is_err());
        assert!(shifted_sine_basis(0).is_err());

        // Row l+1 on [l+1, b2(l+1)] is row l on [l, b2(l)] moved by one.
        let l = 24;
        let b = shifted_sine_basis(l).unwrap();
        let p = b.entries();
        for row in 0..l {
            let b2 = (l / 2 + row).min(l);
            for col in row..b2 {
                assert_eq!(p[(row + 1, col + 1)], p[(row, col)]);
            }
        }
        assert_eq!(p.row(l), p.row(0));
    }

    #[test]
    fn shifted_sine_full_matrix_is_singular() {
        for l in [4, 8, 24] {
            let b = shifted_sine_basis(l).unwrap();
            assert_eq!(b.rank(), l, "L = {l}");
            let q = DMatrix::from_element(2, l + 1, 1.0);
            match decompose(&q, &b) {
                Err(Error::Decomposition { kind, l: got, .. }) => {
                    assert_eq!(kind, "shifted-sine");
                    assert_eq!(got, l);
                }
                other => panic!("{other:?}"),
            }
            // Dropping the repeated row leaves an independent set.
            let rows = b.select(&(0..l).collect::<Vec<_>>());
            assert!(least_squares_fit(&q, &rows).is_ok());
            assert!(least_squares_fit(&q, b.entries()).is_err());
        }
    }

    #[test]
    fn decompose_trivial_cases() {
        let b = fourier_basis(6).unwrap();
        let zero = DMatrix::zeros(3, 7);
        assert_eq!(decompose(&zero, &b).unwrap().entries(), DMatrix::zeros(3, 7));

        let q = DMatrix::from_fn(3, 7, |r, c| (r * 7 + c) as f64);
        let id = BasisMatrix::custom(DMatrix::identity(7, 7)).unwrap();
        assert_eq!(decompose(&q, &id).unwrap().entries(), q);
        assert!(decompose(&q, &fourier_basis(5).unwrap()).is_err());

        let single = PathCoeffs::from_matrix(&DMatrix::from_row_slice(1, 1, &[2.0]));
        assert!(reconstruct(&single, &b.select(&[0])).is_ok());
        assert!(reconstruct(&single, &b.select(&[0, 1])).is_err());
        assert!(BasisMatrix::custom(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn round_trip_on_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for l in [8, 24, 40, 64] {
            let b = fourier_basis(l).unwrap();
            for _ in 0..10 {
                let q = DMatrix::from_fn(3, l + 1, |_, _| rng.random_range(-500.0..500.0));
                let c = decompose(&q, &b).unwrap();
                let back = reconstruct(&c, b.entries()).unwrap();
                assert!(relative_error(&q, &back) < 1e-12, "L = {l}");
            }
        }
    }

    #[test]
    fn coefficients_keep_their_low_part() {
        let b = fourier_basis(24).unwrap();
        let q = DMatrix::from_fn(2, 25, |r, c| (c as f64 * 0.3 + r as f64).cos() * 80.0);
        let c = decompose(&q, &b).unwrap();
        assert!((0..25).any(|k| c.hi_lo(0, k).1 != 0.0));
        // Dropping the low parts loses the round trip at this conditioning.
        let rounded = PathCoeffs::from_matrix(&c.entries());
        let exact = relative_error(&q, &reconstruct(&c, b.entries()).unwrap());
        let lossy = relative_error(&q, &reconstruct(&rounded, b.entries()).unwrap());
        assert!(exact < 1e-14 && exact <= lossy, "{exact} vs {lossy}");
    }

    #[test]
    fn k_equals_one_is_constant() {
        let b = fourier_basis(10).unwrap();
        let q = DMatrix::from_fn(2, 11, |r, c| (r + c) as f64);
        let comp = compress(&q, &b, 1, Selection::Lowest).unwrap();
        let rec = comp.reconstruct();
        for d in 0..2 {
            let mean = q.row(d).mean();
            assert!(rec.row(d).iter().all(|v| (v - mean).abs() < 1e-12));
        }
    }

    #[test]
    fn full_k_is_exact() {
        let b = fourier_basis(24).unwrap();
        let q = DMatrix::from_fn(3, 25, |r, c| ((r + 1) as f64 * c as f64 * 0.37).sin() * 40.0);
        let comp = compress(&q, &b, 25, Selection::Lowest).unwrap();
        assert!(relative_error(&q, &comp.reconstruct()) < 1e-8);
        assert_eq!(comp.rho_comp(), 1.0);
        let trunc = compress_with(&q, &b, 25, Selection::Lowest, FitMode::Truncate).unwrap();
        assert!(relative_error(&q, &trunc.reconstruct()) < 1e-8);
        let five = compress(&q, &b, 5, Selection::Lowest).unwrap();
        assert!((five.rho_comp() - 0.2).abs() < 1e-15);
        assert_eq!(five.selected_indices, vec![0, 1, 2, 3, 4]);
        let high = compress(&q, &b, 3, Selection::Highest).unwrap();
        assert_eq!(high.selected_indices, vec![22, 23, 24]);
        assert!(compress(&q, &b, 0, Selection::Lowest).is_err());
        assert!(compress(&q, &b, 26, Selection::Lowest).is_err());
    }

    #[test]
    fn least_squares_beats_truncation() {
        let b = fourier_basis(24).unwrap();
        let q = DMatrix::from_fn(2, 25, |r, c| {
            let th = 2.0 * PI * c as f64 / 24.0;
            if r == 0 { 50.0 + 40.0 * th.cos() } else { 50.0 + 40.0 * th.sin() }
        });
        let ls = compress(&q, &b, 8, Selection::Lowest).unwrap();
        let tr = compress_with(&q, &b, 8, Selection::Lowest, FitMode::Truncate).unwrap();
        assert!(relative_error(&q, &ls.reconstruct()) <= relative_error(&q, &tr.reconstruct()));
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        // Well-conditioned rows, where the normal equations are accurate.
        let b = fourier_basis(16).unwrap();
        let rows = b.select(&[0, 1, 2, 3]);
        let q = DMatrix::from_fn(2, 17, |r, c| (c as f64 * 0.5 + r as f64).sin() * 20.0 + 3.0);
        let c = least_squares_fit(&q, &rows).unwrap().entries();
        let gram = &rows * rows.transpose();
        let normal = gram.lu().solve(&(&rows * q.transpose())).unwrap().transpose();
        assert!((c - normal).norm() < 1e-9);
    }

    #[test]
    fn orthonormal_span_covers_rows() {
        let b = fourier_basis(20).unwrap();
        let rows = b.select(&(0..21).collect::<Vec<_>>());
        let u = orthonormal_span(&rows).unwrap();
        assert!((u.transpose() * &u - DMatrix::identity(21, 21)).norm() < 1e-14);
        let low = b.select(&[0, 1, 2]);
        let u = orthonormal_span(&low).unwrap();
        let proj = &u * (u.transpose() * low.transpose());
        assert!((proj - low.transpose()).norm() < 1e-12);
        assert!(orthonormal_span(shifted_sine_basis(8).unwrap().entries()).is_err());
    }

    #[test]
    fn endpoint_pinning() {
        let b = fourier_basis(16).unwrap();
        let q = DMatrix::from_fn(2, 17, |r, c| (c as f64 * 0.4 + r as f64).sin() * 30.0 + 10.0);
        let rows = b.select(&(0..6).collect::<Vec<_>>());
        let c = fit_with_endpoints(&q, &rows, &[1.0, -2.0], &[3.0, 4.0]).unwrap();
        let rec = reconstruct(&c, &rows).unwrap();
        assert!((rec[(0, 0)] - 1.0).abs() < 1e-9 && (rec[(1, 0)] + 2.0).abs() < 1e-9);
        assert!((rec[(0, 16)] - 3.0).abs() < 1e-9 && (rec[(1, 16)] - 4.0).abs() < 1e-9);

        // A single DC row can only pin equal endpoints.
        let dc = b.select(&[0]);
        assert!(fit_with_endpoints(&q, &dc, &[1.0, 1.0], &[1.0, 1.0]).is_ok());
        assert!(fit_with_endpoints(&q, &dc, &[1.0, 1.0], &[2.0, 1.0]).is_err());
        // High-frequency rows vanish at the first waypoint.
        let hf = b.select(&[14, 15, 16]);
        assert!(fit_with_endpoints(&q, &hf, &[0.0, 0.0], &[5.0, 5.0]).is_ok());
        assert!(fit_with_endpoints(&q, &hf, &[1.0, 0.0], &[5.0, 5.0]).is_err());
        // With every row, pinning leaves the interior untouched.
        let all = b.entries().clone();
        let mut pinned = q.clone();
        pinned[(0, 0)] = 1.0;
        pinned[(1, 16)] = -7.0;
        let c = fit_with_endpoints(&q, &all, &[1.0, pinned[(1, 0)]], &[pinned[(0, 16)], -7.0]).unwrap();
        assert!(relative_error(&pinned, &reconstruct(&c, &all).unwrap()) < 1e-12);
    }
}
