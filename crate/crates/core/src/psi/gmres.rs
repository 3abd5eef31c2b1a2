//! Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

use super::{LinearOperator, PsiError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Target relative residual `‖Mx - b‖ / ‖b‖`.
    pub tol: f64,
    /// Krylov dimension before restart.
    pub restart: usize,
    /// Cap on total Arnoldi steps.
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 30,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual, recomputed from `x`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual<Op: LinearOperator + ?Sized>(op: &Op, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    op.apply(x, r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    norm(r)
}

/// Solves `M x = b` from `x₀ = 0`.
pub fn gmres_solve<Op: LinearOperator + ?Sized>(
    op: &Op,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<GmresOutcome, PsiError> {
    let n = op.dim();
    if b.len() != n {
        return Err(PsiError::InvalidArgument(format!(
            "right-hand side has {} entries for dimension {n}",
            b.len()
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::NonFinite("GMRES right-hand side"));
    }
    if opts.restart == 0 || !(opts.tol > 0.0) {
        return Err(PsiError::InvalidArgument(
            "restart must be >= 1 and tol > 0".into(),
        ));
    }
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = opts.tol * bnorm;
    let m = opts.restart.min(n.max(1));
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut total = 0usize;

    loop {
        let beta = residual(op, &x, b, &mut r);
        if beta <= target {
            return Ok(GmresOutcome {
                x,
                iterations: total,
                residual: beta / bnorm,
            });
        }
        if total >= opts.max_iter {
            return Err(PsiError::NoConvergence {
                iterations: total,
                residual: beta / bnorm,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // h[j] is column j of the Hessenberg matrix, rotated in place.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut breakdown = false;

        for j in 0..m {
            total += 1;
            op.apply(&basis[j], &mut w);
            let w_norm = norm(&w);
            let mut col = vec![0.0; j + 2];
            for _pass in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hij = dot(&w, q);
                    col[i] += hij;
                    w.iter_mut().zip(q).for_each(|(w, q)| *w -= hij * q);
                }
            }
            let h_next = norm(&w);
            col[j + 1] = h_next;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (col[j], col[j + 1]);
            let d = a.hypot(bb);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (a / d, bb / d) };
            col[j] = d;
            col[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            cs.push((c, s));
            h.push(col);

            if h_next <= 1e-14 * w_norm.max(f64::MIN_POSITIVE) {
                breakdown = true;
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
            if g[j + 1].abs() <= target || total >= opts.max_iter {
                break;
            }
        }

        // Back substitution on the rotated upper-triangular system.
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= h[l][i] * yl;
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (q, yi) in basis.iter().zip(&y) {
            x.iter_mut().zip(q).for_each(|(x, q)| *x += yi * q);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PsiError::NonFinite("GMRES iterate"));
        }

        if breakdown {
            let res = residual(op, &x, b, &mut r);
            if res <= target {
                return Ok(GmresOutcome {
                    x,
                    iterations: total,
                    residual: res / bnorm,
                });
            }
            return Err(PsiError::Breakdown {
                iteration: total,
                residual: res / bnorm,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::DenseOperator;

    fn solve(op: &DenseOperator, b: &[f64]) -> Result<GmresOutcome, PsiError> {
        gmres_solve(op, b, &GmresOptions::default())
    }

    #[test]
    fn identity_system() {
        let out = solve(&DenseOperator::diagonal(&[1.0, 1.0]), &[3.0, 4.0]).unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-14 && (out.x[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_system() {
        let out = solve(&DenseOperator::diagonal(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
        assert!(out.residual <= 1e-10);
    }

    #[test]
    fn singular_system_fails() {
        let err = solve(&DenseOperator::diagonal(&[1.0, 0.0]), &[1.0, 1.0]).unwrap_err();
        assert!(
            matches!(err, PsiError::Breakdown { .. } | PsiError::NoConvergence { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn zero_rhs() {
        let out = solve(&DenseOperator::diagonal(&[2.0, 3.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn nonsymmetric_with_restarts() {
        // Upper bidiagonal, well conditioned; restart 2 forces several cycles.
        let n = 12;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 3.0 + i as f64 * 0.1;
            if i + 1 < n {
                a[i][i + 1] = -1.0;
            }
        }
        let op = DenseOperator(a);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let out = gmres_solve(
            &op,
            &b,
            &GmresOptions {
                tol: 1e-12,
                restart: 2,
                max_iter: 500,
            },
        )
        .unwrap();
        let mut r = vec![0.0; n];
        op.apply(&out.x, &mut r);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let n = 20;
        let op = DenseOperator::diagonal(&(1..=n).map(|i| i as f64).collect::<Vec<_>>());
        let b = vec![1.0; n];
        let err = gmres_solve(
            &op,
            &b,
            &GmresOptions {
                tol: 1e-12,
                restart: 3,
                max_iter: 3,
            },
        )
        .unwrap_err();
        assert!(matches!(err, PsiError::NoConvergence { iterations: 3, .. }));
    }
}
