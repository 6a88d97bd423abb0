//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the scalar function it is handed, so it
//! stays independent of the hand-written backward passes it audits.

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Parameters actually compared.
    pub param_count: usize,
    /// Parameters skipped because a ±ε probe crossed a non-differentiable point.
    pub skipped: usize,
    /// Index of the worst parameter, if any were compared.
    pub worst_index: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub epsilon: f64,
    /// Denominator floor; keeps gradients that are zero up to rounding from
    /// producing huge relative errors.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    pub fn relative_error(&self, analytic: f64, numeric: f64) -> f64 {
        let denom = analytic.abs().max(numeric.abs()).max(self.floor);
        (analytic - numeric).abs() / denom
    }

    /// Compares `analytic[i]` with `(f(θ + εeᵢ) − f(θ − εeᵢ)) / 2ε` for every i.
    pub fn check(&self, theta: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradCheckReport {
        self.check_piecewise(theta, analytic, |t| (f(t), ()))
    }

    /// Like [`GradCheck::check`] for piecewise-smooth functions. `f` also
    /// returns a region tag (ReLU masks, pooling winners); a coordinate whose
    /// probes land in a different region than θ is skipped.
    pub fn check_piecewise<R: PartialEq>(
        &self,
        theta: &mut [f64],
        analytic: &[f64],
        mut f: impl FnMut(&[f64]) -> (f64, R),
    ) -> GradCheckReport {
        assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
        let (_, base_region) = f(theta);
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            param_count: 0,
            skipped: 0,
            worst_index: None,
        };
        for i in 0..theta.len() {
            let original = theta[i];
            theta[i] = original + self.epsilon;
            let (plus, plus_region) = f(theta);
            theta[i] = original - self.epsilon;
            let (minus, minus_region) = f(theta);
            theta[i] = original;

            if plus_region != base_region || minus_region != base_region {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * self.epsilon);
            let err = self.relative_error(analytic[i], numeric);
            report.param_count += 1;
            if report.worst_index.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = Some(i);
            }
        }
        report
    }
}
