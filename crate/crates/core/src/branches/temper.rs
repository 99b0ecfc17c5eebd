use crate::error::{Error, Result};

/// `(α, β)` with `α e^{−nε} ≤ ψ_n ≤ β e^{nε}` for `n = 1..=N` in floating
/// point, `α ≤ 1 ≤ β`.
pub fn temper_sequence(psi: &[f64], eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Precondition(format!("ε must be positive, got {eps}")));
    }
    if let Some((i, v)) = psi.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Precondition(format!("ψ_{} = {v} is not a positive real", i + 1)));
    }
    let growth = |n: usize| (n as f64 * eps).exp();
    let mut alpha = psi.iter().enumerate().map(|(i, &v)| v * growth(i + 1)).fold(1.0, f64::min);
    let mut beta = psi.iter().enumerate().map(|(i, &v)| v / growth(i + 1)).fold(1.0, f64::max);
    // rounding can break the inequalities by an ulp; step outward until exact
    for (i, &v) in psi.iter().enumerate() {
        let g = growth(i + 1);
        while alpha / g > v {
            alpha = alpha.next_down();
        }
        while v > beta * g {
            beta = beta.next_up();
        }
    }
    Ok((alpha, beta))
}
