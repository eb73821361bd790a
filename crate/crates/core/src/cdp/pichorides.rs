//! The Pichorides inequality and the choice of the round width `t`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `1 - 1/t - z/t^2 + z^2/t^4`, the factor multiplying `g_i` in one round.
pub fn round_factor(t: f64, z: Complex64) -> Complex64 {
    1.0 - 1.0 / t - z / (t * t) + z * z / (t * t * t * t)
}

/// `|1 - 1/t - z/t^2 + z^2/t^4| + (t + 2P)^{1/2} / (4 t^{3/2})` with
/// `z = P + iQ`, without any domain check. Negative `t + 2P` is clamped to 0.
pub fn pichorides_expr(t: f64, p: f64, q: f64) -> f64 {
    let z = Complex64::new(p, q);
    round_factor(t, z).norm() + (t + 2.0 * p).max(0.0).sqrt() / (4.0 * t.powf(1.5))
}

/// True when `(P, Q)` satisfies `t + 2P >= 0` and `P^2 + Q^2 <= t^4 / 4`.
pub fn in_domain(t: f64, p: f64, q: f64) -> bool {
    t + 2.0 * p >= 0.0 && p * p + q * q <= t.powi(4) / 4.0
}

/// Left side of the Pichorides inequality; at most 1 on its domain.
pub fn pichorides_lhs(t: f64, p: f64, q: f64) -> Result<f64> {
    if !(t >= 100.0) {
        return Err(Error::Domain(format!("t = {t} is below 100")));
    }
    if !in_domain(t, p, q) {
        return Err(Error::Domain(format!(
            "(P, Q) = ({p}, {q}) violates t + 2P >= 0 or P^2 + Q^2 <= t^4/4 at t = {t}"
        )));
    }
    Ok(pichorides_expr(t, p, q))
}

/// `max(1, floor(ln R / (10 ln ln R)))`, falling back to 1 when `R <= e^e`.
pub fn choose_t(r: u64) -> usize {
    if r < 2 {
        return 1;
    }
    choose_t_from_ln((r as f64).ln())
}

/// [`choose_t`] for a label count given by its natural logarithm.
pub fn choose_t_from_ln(ln_r: f64) -> usize {
    if !(ln_r > std::f64::consts::E) {
        return 1;
    }
    let v = (ln_r / (10.0 * ln_r.ln())).floor();
    if v >= 1.0 {
        v as usize
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lhs_examples() {
        assert!((pichorides_lhs(100.0, 0.0, 0.0).unwrap() - 0.9925).abs() < 1e-15);
        assert!((pichorides_lhs(100.0, -50.0, 0.0).unwrap() - 0.995025).abs() < 1e-15);
    }

    #[test]
    fn lhs_rejects_outside_domain() {
        assert!(matches!(pichorides_lhs(99.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(pichorides_lhs(100.0, -51.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(pichorides_lhs(100.0, 0.0, 5001.0), Err(Error::Domain(_))));
    }

    #[test]
    fn choose_t_examples() {
        assert_eq!(choose_t(1_000_000), 1);
        assert_eq!(choose_t(2), 1);
        assert_eq!(choose_t(1), 1);
        assert_eq!(choose_t_from_ln(100.0), 2);
        assert_eq!(choose_t(u64::MAX), 1);
    }

    proptest! {
        #[test]
        fn lhs_at_most_one(t in 100.0f64..1e4, a in 0.0f64..1.0, b in -1.0f64..1.0) {
            // P in [-t/2, t^2/2], Q within the disk.
            let p = -t / 2.0 + a * (t * t / 2.0 + t / 2.0);
            let qmax = (t.powi(4) / 4.0 - p * p).max(0.0).sqrt();
            let q = b * qmax;
            prop_assert!(pichorides_lhs(t, p, q).unwrap() <= 1.0 + 1e-12);
        }
    }
}
