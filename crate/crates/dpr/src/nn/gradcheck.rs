//! Central finite differences over a [`ParamSet`].
//!
//! Used by tests as the independent oracle for every analytic gradient in the
//! crate; it only ever calls the provided loss closure, never the tape.

use super::params::ParamSet;

/// Central-difference gradient of `loss` with respect to every parameter
/// scalar. `eps` is scaled by `max(1, |theta|)` per coordinate.
pub fn finite_diff(params: &mut ParamSet, loss: impl Fn(&ParamSet) -> f64, eps: f64) -> Vec<f64> {
    let n = params.len();
    let mut grads = vec![0.0; n];
    for i in 0..n {
        let orig = params.values()[i];
        let h = eps * orig.abs().max(1.0);
        params.values_mut()[i] = orig + h;
        let up = loss(params);
        params.values_mut()[i] = orig - h;
        let down = loss(params);
        params.values_mut()[i] = orig;
        grads[i] = (up - down) / (2.0 * h);
    }
    grads
}

/// Largest relative error between two gradient vectors. Entries that agree
/// within 1e-8 absolutely are treated as exact: central differences bottom
/// out around 1e-10 of noise, so tighter disagreements on near-zero
/// gradients carry no signal.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff < 1e-8 {
                0.0
            } else {
                diff / a.abs().max(n.abs()).max(1e-6)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut p = ParamSet::new();
        p.vector("x", 4, Init::Normal(1.0), &mut rng);
        // loss = sum x_i^2, gradient = 2x
        let g = finite_diff(&mut p, |p| p.values().iter().map(|v| v * v).sum(), 1e-6);
        for (gi, xi) in g.iter().zip(p.values()) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn max_rel_error_flags_mismatch() {
        assert!(max_rel_error(&[1.0, 2.0], &[1.0, 2.0]) < 1e-12);
        assert!(max_rel_error(&[1.0, 2.0], &[1.0, 2.5]) > 0.1);
    }
}
