//! Game algebraic Riccati equation
//! `AᵀΣ + ΣA − Σ(B(GᵀG)⁻¹Bᵀ − γ⁻²DDᵀ)Σ + Q = 0`, solved through the matrix
//! sign function of the associated Hamiltonian.

use nalgebra::DMatrix;

use crate::error::{ModelError, ModelResult};

const MAX_ITER: usize = 200;
const SIGN_TOL: f64 = 1e-13;

/// Residual of the GARE at `sigma`.
pub fn gare_residual(
    a: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> DMatrix<f64> {
    a.transpose() * sigma + sigma * a - sigma * r * sigma + q
}

/// Quadratic weight `B(GᵀG)⁻¹Bᵀ − γ⁻²DDᵀ`.
pub fn quadratic_weight(
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    g: &DMatrix<f64>,
    gamma: f64,
) -> ModelResult<DMatrix<f64>> {
    let gtg = g.transpose() * g;
    let inv = gtg
        .try_inverse()
        .ok_or_else(|| ModelError::NoSolution("GᵀG is singular".into()))?;
    Ok(b * inv * b.transpose() - d * d.transpose() / (gamma * gamma))
}

/// Stabilizing (minimal nonnegative-definite) solution of the GARE.
pub fn gare_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    gamma: f64,
) -> ModelResult<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) || b.nrows() != n || d.nrows() != n || g.ncols() != b.ncols() {
        return Err(ModelError::Dimension("inconsistent GARE matrix shapes".into()));
    }
    if !(gamma > 0.0) {
        return Err(ModelError::NoSolution("gamma must be positive".into()));
    }
    let r = quadratic_weight(b, d, g, gamma)?;

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&r));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(h)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));

    let sigma = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| ModelError::NoSolution(e.to_string()))?;
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let res = gare_residual(a, &r, q, &sigma).norm();
    let scale = 1.0 + q.norm();
    if !res.is_finite() || res > 1e-8 * scale {
        return Err(ModelError::NoSolution(format!(
            "no stabilizing solution (residual {res:e}); gamma may be below the optimum"
        )));
    }
    Ok(sigma)
}

/// Newton iteration `W ← (cW + (cW)⁻¹)/2` with determinant scaling.
fn matrix_sign(mut w: DMatrix<f64>) -> ModelResult<DMatrix<f64>> {
    let dim = w.nrows() as f64;
    for _ in 0..MAX_ITER {
        let inv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| ModelError::NoSolution("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let det = w.determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&w * c + inv / c) * 0.5;
        let delta = (&next - &w).norm() / next.norm();
        w = next;
        if !delta.is_finite() {
            break;
        }
        if delta < SIGN_TOL {
            return Ok(w);
        }
    }
    let check = (&w * &w - DMatrix::identity(w.nrows(), w.ncols())).norm();
    if check < 1e-8 {
        Ok(w)
    } else {
        Err(ModelError::NoSolution(
            "sign iteration did not converge; Hamiltonian has imaginary-axis eigenvalues".into(),
        ))
    }
}
