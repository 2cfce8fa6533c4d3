//! Small dense linear-algebra helpers shared by the Gram-matrix code paths.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GmmError, Result};

/// `X Xᵀ` for a row-major data matrix `X` (n×p), symmetrized.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x * x.transpose();
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky solve handle for a symmetric positive-definite matrix.
///
/// If the plain factorization fails, a single jitter of `1e-12 · trace / n`
/// is added to the diagonal and the factorization retried; the amount is kept
/// in [`SpdSolver::jitter`].
#[derive(Clone, Debug)]
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdSolver {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n != m.ncols() {
            return Err(GmmError::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::SingularGram("matrix has non-finite entries".into()));
        }
        let trace = m.trace();
        if let Some(chol) = Cholesky::new(m.clone()) {
            if chol_is_sound(&chol) {
                return Ok(SpdSolver { chol, jitter: 0.0 });
            }
        }
        let jitter = 1e-12 * trace.abs() / n as f64;
        if jitter > 0.0 {
            let mut shifted = m;
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                if chol_is_sound(&chol) {
                    return Ok(SpdSolver { chol, jitter });
                }
            }
        }
        Err(GmmError::SingularGram(format!(
            "{n}x{n} matrix is not positive definite"
        )))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `aᵀ M⁻¹ b`.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&self.solve(b))
    }
}

// nalgebra accepts tiny positive pivots produced by cancellation; reject
// factorizations whose diagonal collapses relative to its largest entry.
fn chol_is_sound(chol: &Cholesky<f64, Dyn>) -> bool {
    let l = chol.l_dirty();
    let diag = l.diagonal();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    max.is_finite() && min > 1e-150 && min / max > 1e-8
}

/// Solve `m a = b` with one step of iterative refinement against `m`.
///
/// When the factorization needed jitter, the answer is only accepted if the
/// unperturbed residual is below `1e-6 · ‖b‖∞`; otherwise `m` is treated as
/// singular. Returns the solution and the jitter used.
pub fn solve_refined(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let solver = SpdSolver::new(m.clone())?;
    let mut a = solver.solve(b);
    let r = b - m * &a;
    a += solver.solve(&r);
    if solver.jitter() > 0.0 {
        let res = inf_norm(&(b - m * &a));
        if !(res <= 1e-6 * inf_norm(b)) {
            return Err(GmmError::SingularGram(format!(
                "residual {res:e} after jitter {:e}",
                solver.jitter()
            )));
        }
    }
    Ok((a, solver.jitter()))
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = SpdSolver::new(m.clone()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = s.solve(&b);
        assert!((&m * &x - &b).amax() < 1e-14);
        assert_eq!(s.jitter(), 0.0);
    }

    #[test]
    fn rank_deficient_matrix_needs_jitter() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        match SpdSolver::new(gram(&x)) {
            Ok(s) => assert!(s.jitter() > 0.0),
            Err(e) => assert!(matches!(e, GmmError::SingularGram(_))),
        }
        assert!(SpdSolver::new(DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn refined_solve_rejects_inconsistent_singular_system() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        assert!(matches!(solve_refined(&gram(&x), &b), Err(GmmError::SingularGram(_))));
    }

    #[test]
    fn gram_is_symmetric() {
        let x = DMatrix::from_fn(4, 7, |i, j| ((i * 7 + j) as f64).sin());
        let g = gram(&x);
        assert_eq!(g, g.transpose());
    }
}
