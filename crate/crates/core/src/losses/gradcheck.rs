//! Finite-difference validation of analytic gradients.

use super::LossError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Scheme {
    /// (f(x+ε) − f(x−ε)) / 2ε
    #[default]
    Central,
    /// (f(x+ε) − f(x)) / ε
    Forward,
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// max_i |a_i − n_i| / max(|a_i|, |n_i|, 1e-8)
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub numeric: Vec<f64>,
}

/// Numerical gradient of `f` at `x`.
pub fn finite_difference<F>(mut f: F, x: &[f64], eps: f64, scheme: Scheme) -> Result<Vec<f64>, LossError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let base = match scheme {
        Scheme::Forward => {
            let v = f(x);
            if !v.is_finite() {
                return Err(LossError::NonFiniteLoss { index: usize::MAX });
            }
            v
        }
        Scheme::Central => 0.0,
    };
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        let g = match scheme {
            Scheme::Central => {
                probe[i] = x[i] - eps;
                let minus = f(&probe);
                if !minus.is_finite() {
                    return Err(LossError::NonFiniteLoss { index: i });
                }
                (plus - minus) / (2.0 * eps)
            }
            Scheme::Forward => (plus - base) / eps,
        };
        if !plus.is_finite() {
            return Err(LossError::NonFiniteLoss { index: i });
        }
        probe[i] = x[i];
        out.push(g);
    }
    Ok(out)
}

/// Compares `analytic` with the finite-difference gradient of `f` at `x`.
pub fn grad_check<F>(f: F, analytic: &[f64], x: &[f64], eps: f64, scheme: Scheme) -> Result<GradCheck, LossError>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != x.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} analytic entries for {} inputs",
            analytic.len(),
            x.len()
        )));
    }
    let numeric = finite_difference(f, x, eps, scheme)?;
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        numeric,
    })
}
