//! Batch kernels for arrays of small d x d matrices (d <= 3).
//!
//! Every other module stores per-vertex or per-element matrices as a
//! [`MatBatch`]: `n` rows, each row the `d*d` entries of one matrix in
//! column-major order `[M11, ..., Md1, ..., M1d, ..., Mdd]`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmallMatError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("singular matrix at row {row} (det = {det:e})")]
    Singular { row: usize, det: f64 },
    #[error("matrix at row {row} is not symmetric (|a - a^T| = {dev:e})")]
    NotSymmetric { row: usize, dev: f64 },
    #[error("matrix at row {row} is not positive definite (lambda_min = {lambda_min:e})")]
    NotSpd { row: usize, lambda_min: f64 },
    #[error("eigenvalue ceiling must be positive, got {0}")]
    InvalidCeiling(f64),
    #[error("batch dimension must be 1, 2 or 3, got {0}")]
    BadDim(usize),
}

/// An array of `n` matrices of size `d x d`, one per row, column-major
/// within the row.
#[derive(Debug, Clone, PartialEq)]
pub struct MatBatch {
    data: Vec<f64>,
    d: usize,
    n: usize,
}

impl MatBatch {
    pub fn new(d: usize, n: usize, data: Vec<f64>) -> Result<Self, SmallMatError> {
        if !(1..=3).contains(&d) {
            return Err(SmallMatError::BadDim(d));
        }
        if data.len() != n * d * d {
            return Err(SmallMatError::DimMismatch(format!(
                "expected {} entries for {} matrices of size {}x{}, got {}",
                n * d * d,
                n,
                d,
                d,
                data.len()
            )));
        }
        Ok(Self { data, d, n })
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Self { data: vec![0.0; n * d * d], d, n }
    }

    /// Batch of identity matrices.
    pub fn identity(d: usize, n: usize) -> Self {
        let mut b = Self::zeros(d, n);
        for i in 0..n {
            for k in 0..d {
                b.data[i * d * d + k * d + k] = 1.0;
            }
        }
        b
    }

    /// Batch holding `n` copies of one matrix given in column-major order.
    pub fn splat(d: usize, n: usize, m: &[f64]) -> Self {
        assert_eq!(m.len(), d * d);
        let mut data = Vec::with_capacity(n * d * d);
        for _ in 0..n {
            data.extend_from_slice(m);
        }
        Self { data, d, n }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.data[i * dd..(i + 1) * dd]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let dd = self.d * self.d;
        &mut self.data[i * dd..(i + 1) * dd]
    }

    /// Entry (r, c) of matrix i.
    #[inline]
    pub fn get(&self, i: usize, r: usize, c: usize) -> f64 {
        self.data[i * self.d * self.d + c * self.d + r]
    }

    #[inline]
    pub fn set(&mut self, i: usize, r: usize, c: usize, v: f64) {
        self.data[i * self.d * self.d + c * self.d + r] = v;
    }

    fn check_match(&self, other: &MatBatch) -> Result<(), SmallMatError> {
        if self.d != other.d || self.n != other.n {
            return Err(SmallMatError::DimMismatch(format!(
                "({}x{} batch of {}) vs ({}x{} batch of {})",
                self.d, self.d, self.n, other.d, other.d, other.n
            )));
        }
        Ok(())
    }
}

/// Rowwise product a_i * b_i.
pub fn batch_mult(a: &MatBatch, b: &MatBatch) -> Result<MatBatch, SmallMatError> {
    a.check_match(b)?;
    let d = a.d;
    let mut out = MatBatch::zeros(d, a.n);
    for i in 0..a.n {
        for c in 0..d {
            for r in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += a.get(i, r, k) * b.get(i, k, c);
                }
                out.set(i, r, c, s);
            }
        }
    }
    Ok(out)
}

/// Rowwise transpose.
pub fn batch_transpose(a: &MatBatch) -> MatBatch {
    let d = a.d;
    let mut out = MatBatch::zeros(d, a.n);
    for i in 0..a.n {
        for c in 0..d {
            for r in 0..d {
                out.set(i, r, c, a.get(i, c, r));
            }
        }
    }
    out
}

/// Determinant of a single d x d matrix stored column-major.
pub fn det_one(d: usize, m: &[f64]) -> f64 {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            // columns: [0..3), [3..6), [6..9)
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[3] * (m[1] * m[8] - m[2] * m[7])
                + m[6] * (m[1] * m[5] - m[2] * m[4])
        }
        _ => unreachable!(),
    }
}

/// Inverse of a single d x d matrix (cofactor formulas); `out` column-major.
/// Returns the determinant.
pub fn inv_one(d: usize, m: &[f64], out: &mut [f64]) -> f64 {
    let det = det_one(d, m);
    match d {
        1 => out[0] = 1.0 / m[0],
        2 => {
            let inv = 1.0 / det;
            out[0] = m[3] * inv;
            out[1] = -m[1] * inv;
            out[2] = -m[2] * inv;
            out[3] = m[0] * inv;
        }
        3 => {
            let inv = 1.0 / det;
            // adjugate: entry (r,c) of inverse = cofactor(c,r) / det
            out[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
            out[1] = -(m[1] * m[8] - m[2] * m[7]) * inv;
            out[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
            out[3] = -(m[3] * m[8] - m[5] * m[6]) * inv;
            out[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
            out[5] = -(m[0] * m[5] - m[2] * m[3]) * inv;
            out[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
            out[7] = -(m[0] * m[7] - m[1] * m[6]) * inv;
            out[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
        }
        _ => unreachable!(),
    }
    det
}

/// Rowwise determinants.
pub fn batch_det(a: &MatBatch) -> Vec<f64> {
    (0..a.n).map(|i| det_one(a.d, a.row(i))).collect()
}

/// Rowwise inverses. Fails on the first singular row.
pub fn batch_inv(a: &MatBatch) -> Result<MatBatch, SmallMatError> {
    let d = a.d;
    let mut out = MatBatch::zeros(d, a.n);
    let dd = d * d;
    for i in 0..a.n {
        let m = a.row(i);
        // scale: magnitude of the largest entry, for a relative singularity test
        let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1e-300);
        let det = det_one(d, m);
        if det.abs() <= 1e-14 * scale.powi(d as i32) {
            return Err(SmallMatError::Singular { row: i, det });
        }
        inv_one(d, m, &mut out.data[i * dd..(i + 1) * dd]);
    }
    Ok(out)
}

fn sym_check(a: &MatBatch) -> Result<(), SmallMatError> {
    for i in 0..a.n {
        let scale = a.row(i).iter().fold(1.0f64, |acc, &v| acc.max(v.abs()));
        for r in 0..a.d {
            for c in (r + 1)..a.d {
                let dev = (a.get(i, r, c) - a.get(i, c, r)).abs();
                if dev > 1e-12 * scale {
                    return Err(SmallMatError::NotSymmetric { row: i, dev });
                }
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of one symmetric d x d matrix. Eigenvalues ascending,
/// eigenvectors the columns of `q` (column-major).
pub fn sym_eig_one(d: usize, m: &[f64], lambda: &mut [f64], q: &mut [f64]) {
    match d {
        1 => {
            lambda[0] = m[0];
            q[0] = 1.0;
        }
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let tr2 = 0.5 * (a + c);
            let disc = (0.5 * (a - c)).hypot(b);
            lambda[0] = tr2 - disc;
            lambda[1] = tr2 + disc;
            if disc <= 1e-300 + 1e-15 * tr2.abs() {
                // already (numerically) a multiple of the identity
                q.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            } else {
                // eigenvector for lambda[0]: pick the larger of the two candidates
                let (v0, v1) = if (a - lambda[0]).abs() > (c - lambda[0]).abs() {
                    (-b, a - lambda[0])
                } else {
                    (c - lambda[0], -b)
                };
                let nrm = v0.hypot(v1);
                let (e0, e1) = if nrm > 0.0 { (v0 / nrm, v1 / nrm) } else { (1.0, 0.0) };
                q[0] = e0;
                q[1] = e1;
                // column 1: orthogonal complement, eigenvector of lambda[1]
                q[2] = -e1;
                q[3] = e0;
            }
        }
        3 => jacobi3(m, lambda, q),
        _ => unreachable!(),
    }
}

/// Cyclic Jacobi rotations for a symmetric 3 x 3 matrix.
fn jacobi3(m: &[f64], lambda: &mut [f64], q: &mut [f64]) {
    let mut a = [
        [m[0], 0.5 * (m[3] + m[1]), 0.5 * (m[6] + m[2])],
        [0.5 * (m[3] + m[1]), m[4], 0.5 * (m[7] + m[5])],
        [0.5 * (m[6] + m[2]), 0.5 * (m[7] + m[5]), m[8]],
    ];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a.iter().flatten().fold(1e-300f64, |acc, &x| acc.max(x.abs()));
    for _sweep in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= 1e-15 * scale {
            break;
        }
        for (p, r) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apr = a[p][r];
            if apr.abs() <= 1e-30 * scale {
                continue;
            }
            let theta = (a[r][r] - a[p][p]) / (2.0 * apr);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akr = a[k][r];
                a[k][p] = c * akp - s * akr;
                a[k][r] = s * akp + c * akr;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let ark = a[r][k];
                a[p][k] = c * apk - s * ark;
                a[r][k] = s * apk + c * ark;
            }
            for k in 0..3 {
                let vkp = v[k][p];
                let vkr = v[k][r];
                v[k][p] = c * vkp - s * vkr;
                v[k][r] = s * vkp + c * vkr;
            }
        }
    }
    // sort eigenvalues ascending, permute columns of v accordingly
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    for (out_c, &in_c) in order.iter().enumerate() {
        lambda[out_c] = a[in_c][in_c];
        for r in 0..3 {
            q[out_c * 3 + r] = v[r][in_c];
        }
    }
}

/// Rowwise symmetric eigendecomposition: a_i = Q_i diag(lambda_i) Q_i^T with
/// eigenvalues ascending and orthonormal Q_i.
pub fn sym_eig(a: &MatBatch) -> Result<(Vec<f64>, MatBatch), SmallMatError> {
    sym_check(a)?;
    let d = a.d;
    let mut lambdas = vec![0.0; a.n * d];
    let mut q = MatBatch::zeros(d, a.n);
    let dd = d * d;
    for i in 0..a.n {
        let (lam, qm) = (&mut lambdas[i * d..(i + 1) * d], &mut q.data[i * dd..(i + 1) * dd]);
        sym_eig_one(d, a.row(i), lam, qm);
    }
    Ok((lambdas, q))
}

/// Recompose Q diag(lambda) Q^T into `out` (column-major).
pub fn recompose_one(d: usize, lambda: &[f64], q: &[f64], out: &mut [f64]) {
    for c in 0..d {
        for r in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += q[k * d + r] * lambda[k] * q[k * d + c];
            }
            out[c * d + r] = s;
        }
    }
}

/// Caps the eigenvalues of each SPD matrix at `beta`, preserving eigenvectors.
/// Rows whose largest eigenvalue is already <= beta are returned unchanged.
pub fn eig_ceiling(m: &MatBatch, beta: f64) -> Result<MatBatch, SmallMatError> {
    if beta <= 0.0 {
        return Err(SmallMatError::InvalidCeiling(beta));
    }
    let d = m.d;
    let (lambdas, q) = sym_eig(m)?;
    for i in 0..m.n {
        let lmin = lambdas[i * d];
        if lmin <= 0.0 {
            return Err(SmallMatError::NotSpd { row: i, lambda_min: lmin });
        }
    }
    let mut out = m.clone();
    let dd = d * d;
    for i in 0..m.n {
        let lam = &lambdas[i * d..(i + 1) * d];
        if lam[d - 1] <= beta {
            continue;
        }
        let capped: Vec<f64> = lam.iter().map(|&l| l.min(beta)).collect();
        recompose_one(d, &capped, q.row(i), &mut out.data[i * dd..(i + 1) * dd]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from_rows(d: usize, rows: &[&[f64]]) -> MatBatch {
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(r);
        }
        MatBatch::new(d, rows.len(), data).unwrap()
    }

    #[test]
    fn det_of_identity_batch_is_one() {
        let a = MatBatch::identity(3, 5);
        for v in batch_det(&a) {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn inv_of_diagonal() {
        let a = batch_from_rows(2, &[&[2.0, 0.0, 0.0, 4.0]]);
        let inv = batch_inv(&a).unwrap();
        assert_eq!(inv.row(0), &[0.5, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn mult_by_inverse_is_identity() {
        // oracle: direct 2x2 cofactor inverse
        let mut rows = Vec::new();
        let mut state = 123456789u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            loop {
                let m = [rng() * 4.0, rng() * 4.0, rng() * 4.0, rng() * 4.0];
                if det_one(2, &m).abs() > 0.2 {
                    rows.push(m);
                    break;
                }
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let a = batch_from_rows(2, &refs);
        let prod = batch_mult(&a, &batch_inv(&a).unwrap()).unwrap();
        let id = MatBatch::identity(2, a.len());
        for i in 0..a.len() {
            for k in 0..4 {
                assert!((prod.row(i)[k] - id.row(i)[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inv_of_inv_is_original() {
        let a = batch_from_rows(3, &[&[2.0, 0.3, 0.1, 0.3, 3.0, -0.2, 0.1, -0.2, 1.5]]);
        let b = batch_inv(&batch_inv(&a).unwrap()).unwrap();
        for k in 0..9 {
            assert!((a.row(0)[k] - b.row(0)[k]).abs() < 1e-10 * a.row(0)[k].abs().max(1.0));
        }
    }

    #[test]
    fn det_is_multiplicative() {
        let a = batch_from_rows(3, &[&[1.0, 2.0, 0.5, -1.0, 1.0, 0.0, 0.3, 0.2, 2.0]]);
        let b = batch_from_rows(3, &[&[2.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0, 1.0]]);
        let dab = batch_det(&batch_mult(&a, &b).unwrap())[0];
        let da = batch_det(&a)[0];
        let db = batch_det(&b)[0];
        assert!((dab - da * db).abs() < 1e-10 * dab.abs().max(1.0));
    }

    #[test]
    fn singular_inv_reports_row() {
        let a = batch_from_rows(2, &[&[1.0, 0.0, 0.0, 1.0], &[1.0, 2.0, 2.0, 4.0]]);
        match batch_inv(&a) {
            Err(SmallMatError::Singular { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn transpose_involution() {
        let a = batch_from_rows(3, &[&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]]);
        assert_eq!(batch_transpose(&batch_transpose(&a)), a);
        assert_eq!(batch_transpose(&a).get(0, 0, 1), a.get(0, 1, 0));
    }

    #[test]
    fn sym_eig_diagonal() {
        let a = batch_from_rows(2, &[&[3.0, 0.0, 0.0, 1.0]]);
        let (lam, q) = sym_eig(&a).unwrap();
        assert!((lam[0] - 1.0).abs() < 1e-14);
        assert!((lam[1] - 3.0).abs() < 1e-14);
        // columns orthonormal
        let qt_q = batch_mult(&batch_transpose(&q), &q).unwrap();
        for (k, want) in [(0, 1.0), (1, 0.0), (2, 0.0), (3, 1.0)] {
            assert!((qt_q.row(0)[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_eig_2x2_hand_oracle() {
        // [[2,1],[1,2]]: characteristic polynomial (2-l)^2 - 1 => l = 1, 3
        let a = batch_from_rows(2, &[&[2.0, 1.0, 1.0, 2.0]]);
        let (lam, _) = sym_eig(&a).unwrap();
        assert!((lam[0] - 1.0).abs() < 1e-12);
        assert!((lam[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_identity_batch() {
        let a = MatBatch::identity(3, 4);
        let (lam, q) = sym_eig(&a).unwrap();
        for v in lam {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let qt_q = batch_mult(&batch_transpose(&q), &q).unwrap();
        let id = MatBatch::identity(3, 4);
        for i in 0..4 {
            for k in 0..9 {
                assert!((qt_q.row(i)[k] - id.row(i)[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sym_eig_reconstructs_3x3() {
        let a = batch_from_rows(3, &[&[4.0, 1.0, 0.5, 1.0, 3.0, -0.7, 0.5, -0.7, 2.0]]);
        let (lam, q) = sym_eig(&a).unwrap();
        assert!(lam[0] <= lam[1] && lam[1] <= lam[2]);
        let mut rec = [0.0; 9];
        recompose_one(3, &lam, q.row(0), &mut rec);
        for k in 0..9 {
            assert!((rec[k] - a.row(0)[k]).abs() < 1e-10 * 4.0);
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = batch_from_rows(2, &[&[1.0, 0.5, 0.0, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(SmallMatError::NotSymmetric { .. })));
    }

    #[test]
    fn ceiling_diagonal_case() {
        let a = batch_from_rows(2, &[&[1.0, 0.0, 0.0, 10.0]]);
        let out = eig_ceiling(&a, 5.0).unwrap();
        assert!((out.get(0, 0, 0) - 1.0).abs() < 1e-12);
        assert!((out.get(0, 1, 1) - 5.0).abs() < 1e-12);
        assert!(out.get(0, 0, 1).abs() < 1e-12);
    }

    #[test]
    fn ceiling_below_beta_unchanged() {
        let a = MatBatch::identity(2, 3);
        let out = eig_ceiling(&a, 5.0).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn ceiling_caps_random_spd_and_preserves_eigenvectors() {
        // oracle: sym_eig before/after
        let a = batch_from_rows(3, &[&[6.0, 1.0, 0.2, 1.0, 5.0, -0.4, 0.2, -0.4, 0.5]]);
        let beta = 2.0;
        let (lam_in, q_in) = sym_eig(&a).unwrap();
        let out = eig_ceiling(&a, beta).unwrap();
        let (lam_out, _) = sym_eig(&out).unwrap();
        for k in 0..3 {
            assert!(lam_out[k] <= beta + 1e-10);
            assert!((lam_out[k] - lam_in[k].min(beta)).abs() < 1e-9);
        }
        assert!(lam_out[0] > 0.0);
        // eigenvectors preserved: out commutes with the recomposition from q_in
        let mut rec = [0.0; 9];
        let capped: Vec<f64> = lam_in.iter().map(|&l| l.min(beta)).collect();
        recompose_one(3, &capped, q_in.row(0), &mut rec);
        for k in 0..9 {
            assert!((rec[k] - out.row(0)[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn ceiling_is_idempotent() {
        let a = batch_from_rows(2, &[&[4.0, 1.0, 1.0, 4.0]]);
        let once = eig_ceiling(&a, 3.0).unwrap();
        let twice = eig_ceiling(&once, 3.0).unwrap();
        for k in 0..4 {
            assert!((once.row(0)[k] - twice.row(0)[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn ceiling_rejects_bad_beta_and_non_spd() {
        let a = MatBatch::identity(2, 1);
        assert!(matches!(eig_ceiling(&a, 0.0), Err(SmallMatError::InvalidCeiling(_))));
        let b = batch_from_rows(2, &[&[1.0, 0.0, 0.0, -1.0]]);
        assert!(matches!(eig_ceiling(&b, 1.0), Err(SmallMatError::NotSpd { .. })));
    }
}
