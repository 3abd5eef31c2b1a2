use super::{LinearOperator, PsiError};

const MAX_TERMS: usize = 60;

/// `e^{tM} v` by truncated Taylor series over `s = ⌈t‖M‖₁⌉` unit-norm substeps.
///
/// Each substep sums terms until two consecutive terms fall below
/// `max(tol / s, ε)` relative to the partial sum.
pub fn expm_action<Op: LinearOperator + ?Sized>(
    op: &Op,
    t: f64,
    v: &[f64],
    tol: f64,
) -> Result<Vec<f64>, PsiError> {
    let n = op.dim();
    if v.len() != n {
        return Err(PsiError::InvalidArgument(format!(
            "vector has {} entries for operator of dimension {n}",
            v.len()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(PsiError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    if !(tol > 0.0) {
        return Err(PsiError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::NonFinite("expm input"));
    }
    if t == 0.0 {
        return Ok(v.to_vec());
    }
    let norm = op.norm1_bound() * t;
    if !norm.is_finite() {
        return Err(PsiError::NonFinite("operator norm"));
    }
    let steps = norm.ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let eta = (tol / steps as f64).max(f64::EPSILON);

    let mut f = v.to_vec();
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        term.copy_from_slice(&f);
        let mut prev_norm = inf_norm(&term);
        let mut converged = false;
        for k in 1..=MAX_TERMS {
            op.apply(&term, &mut next);
            let c = h / k as f64;
            next.iter_mut().for_each(|x| *x *= c);
            std::mem::swap(&mut term, &mut next);
            f.iter_mut().zip(&term).for_each(|(f, t)| *f += t);
            let tn = inf_norm(&term);
            if tn + prev_norm <= eta * inf_norm(&f) {
                converged = true;
                break;
            }
            prev_norm = tn;
        }
        if !converged {
            return Err(PsiError::ToleranceNotReached { terms: MAX_TERMS });
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(PsiError::NonFinite("expm result"));
        }
    }
    Ok(f)
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
