//! Sign-agreement learning-rate schedule.
//!
//! Each parameter keeps its own rate and an exponential average of its past
//! steps. After every step the average is refreshed first; the rate is then
//! multiplied by `ζ` when the refreshed average and the current step point
//! in opposite directions, and left alone otherwise. Rates never grow.

/// Update one parameter's `(eta, avg)` pair with the step `delta`.
#[inline]
pub fn lr_update(eta: &mut f64, avg: &mut f64, delta: f64, alpha: f64, zeta: f64) {
    *avg = alpha * delta + (1.0 - alpha) * *avg;
    if *avg * delta < 0.0 {
        *eta *= zeta;
    }
}

/// Per-parameter learning rates and step averages.
#[derive(Clone, Debug, PartialEq)]
pub struct LrState {
    pub eta: Vec<f64>,
    pub delta_avg: Vec<f64>,
}

impl LrState {
    pub fn new(len: usize, eta0: f64) -> Self {
        LrState {
            eta: vec![eta0; len],
            delta_avg: vec![0.0; len],
        }
    }

    /// Resets the listed parameters to `eta0` with a zero average.
    pub fn reset(&mut self, indices: &[usize], eta0: f64) {
        for &i in indices {
            self.eta[i] = eta0;
            self.delta_avg[i] = 0.0;
        }
    }

    /// Applies [`lr_update`] to the listed parameters.
    pub fn update(&mut self, indices: &[usize], deltas: &[f64], alpha: f64, zeta: f64) {
        for &i in indices {
            lr_update(
                &mut self.eta[i],
                &mut self.delta_avg[i],
                deltas[i],
                alpha,
                zeta,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn agreement_keeps_rate() {
        let (mut eta, mut avg) = (0.5, 1.0);
        lr_update(&mut eta, &mut avg, 1.0, 0.7, 0.9);
        assert_eq!(eta, 0.5);
        assert_abs_diff_eq!(avg, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn average_is_refreshed_before_the_sign_test() {
        let (mut eta, mut avg) = (0.5, 1.0);
        lr_update(&mut eta, &mut avg, -1.0, 0.7, 0.9);
        assert_abs_diff_eq!(avg, -0.4, epsilon = 1e-15);
        assert_eq!(eta, 0.5);
    }

    #[test]
    fn disagreement_decays_rate() {
        let (mut eta, mut avg) = (0.5, 1.0);
        lr_update(&mut eta, &mut avg, -0.1, 0.7, 0.9);
        assert_abs_diff_eq!(avg, 0.23, epsilon = 1e-15);
        assert_abs_diff_eq!(eta, 0.45, epsilon = 1e-15);
    }

    #[test]
    fn zero_step_leaves_rate() {
        let (mut eta, mut avg) = (0.5, -3.0);
        lr_update(&mut eta, &mut avg, 0.0, 0.7, 0.9);
        assert_eq!(eta, 0.5);
    }

    #[test]
    fn reset_touches_only_listed_entries() {
        let mut s = LrState::new(4, 1.0);
        s.eta = vec![0.1, 0.2, 0.3, 0.4];
        s.delta_avg = vec![1.0; 4];
        s.reset(&[1, 3], 0.01);
        assert_eq!(s.eta, vec![0.1, 0.01, 0.3, 0.01]);
        assert_eq!(s.delta_avg, vec![1.0, 0.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn rates_never_increase(steps in proptest::collection::vec(-10.0f64..10.0, 1..200),
                                alpha in 0.01f64..0.99, zeta in 0.01f64..0.99) {
            let mut s = LrState::new(1, 1e-3);
            let idx = [0usize];
            let mut prev = s.eta[0];
            for d in steps {
                s.update(&idx, &[d], alpha, zeta);
                prop_assert!(s.eta[0] <= prev);
                prop_assert!(s.eta[0] > 0.0);
                prev = s.eta[0];
            }
        }
    }
}
