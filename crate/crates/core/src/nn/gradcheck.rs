/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Compares the analytic gradient returned by `f` at `params` with central
/// differences of step `h`. The error for each coordinate is
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], h: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(
        analytic.len(),
        params.len(),
        "gradient length must match parameter count"
    );
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
    };
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let (up, _) = f(&probe);
        probe[i] = params[i] - h;
        let (down, _) = f(&probe);
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        if err > report.max_relative_error || err.is_nan() {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
            };
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let f = |p: &[f64]| {
            let v = p
                .iter()
                .enumerate()
                .map(|(i, x)| (i + 1) as f64 * x * x)
                .sum();
            let g = p
                .iter()
                .enumerate()
                .map(|(i, x)| 2.0 * (i + 1) as f64 * x)
                .collect();
            (v, g)
        };
        let r = grad_check(f, &[0.3, -1.7, 4.0, 0.0], 1e-5);
        assert!(r.max_relative_error < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |p: &[f64]| (p[0] * p[0], vec![p[0]]);
        let r = grad_check(f, &[2.0], 1e-5);
        assert!(r.max_relative_error > 0.4);
    }
}
