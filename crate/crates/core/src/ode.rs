//! Adaptive Dormand-Prince 5(4) stepper with 4th-order dense output.
//!
//! The pair is explicit and well suited to the smooth dynamics between
//! switchings; the continuous extension is what the event machinery
//! bisects to localize switching-function zeros.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerances and caps of the extremal-flow propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Bound on `|Phi|` at reported switching events.
    pub event_tol_phi: f64,
    /// Width to which the event bracket is bisected.
    pub event_tol_time: f64,
    /// Cap on the number of switchings per concatenated trajectory.
    pub max_switchings: usize,
    /// Safety cap on accepted steps per arc.
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            max_step: 0.05,
            event_tol_phi: 1e-12,
            event_tol_time: 1e-13,
            max_switchings: 64,
            max_steps: 4_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let all_pos = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.event_tol_phi > 0.0
            && self.event_tol_time > 0.0;
        if !all_pos {
            return Err(Error::InvalidInput(
                "integrator tolerances and max_step must be positive".into(),
            ));
        }
        if self.max_switchings < 1 {
            return Err(Error::InvalidInput("max_switchings must be at least 1".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights coincide with the last stage row (FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Weights of the extra interpolation polynomial term.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - 1e-14 * self.h.abs() && t <= self.t1() + 1e-14 * self.h.abs()
    }

    /// Evaluates the 4th-order interpolant at `t` inside `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; N];
        for i in 0..N {
            let c = &self.cont;
            y[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        y
    }
}

/// Raw outcome of a trial step: 5th-order solution, embedded error, stages.
pub struct TrialStep<const N: usize> {
    pub y5: [f64; N],
    pub err: [f64; N],
    pub stages: [[f64; N]; 7],
}

/// Evaluates one Dormand-Prince trial step of size `h` from `(t, y)`.
///
/// `k1` may be supplied from the previous step (FSAL); otherwise it is
/// computed here.
pub fn trial_step<const N: usize>(
    f: &mut dyn FnMut(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
    k1: Option<[f64; N]>,
) -> TrialStep<N> {
    let mut k = [[0.0; N]; 7];
    k[0] = k1.unwrap_or_else(|| f(t, y));
    for i in 1..7 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(i) {
            let a = A[i][j];
            if a != 0.0 {
                for n in 0..N {
                    yi[n] += h * a * kj[n];
                }
            }
        }
        k[i] = f(t + C[i] * h, &yi);
    }
    let mut y5 = *y;
    let mut err = [0.0; N];
    for i in 0..7 {
        for n in 0..N {
            y5[n] += h * B5[i] * k[i][n];
            err[n] += h * (B5[i] - B4[i]) * k[i][n];
        }
    }
    TrialStep { y5, err, stages: k }
}

/// Builds the dense-output coefficients for an accepted step.
pub fn dense_from_trial<const N: usize>(
    t: f64,
    y: &[f64; N],
    h: f64,
    trial: &TrialStep<N>,
    y1: &[f64; N],
) -> DenseStep<N> {
    let mut cont = [[0.0; N]; 5];
    for n in 0..N {
        let ydiff = y1[n] - y[n];
        let bspl = h * trial.stages[0][n] - ydiff;
        cont[0][n] = y[n];
        cont[1][n] = ydiff;
        cont[2][n] = bspl;
        cont[3][n] = ydiff - h * trial.stages[6][n] - bspl;
        let mut acc = 0.0;
        for i in 0..7 {
            acc += D[i] * trial.stages[i][n];
        }
        cont[4][n] = h * acc;
    }
    DenseStep { t0: t, h, y0: *y, y1: *y1, cont }
}

/// RMS of the componentwise error over the supplied weights.
pub fn error_norm<const N: usize>(err: &[f64; N], w: &[f64; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let e = err[i] / w[i];
        s += e * e;
    }
    (s / N as f64).sqrt()
}

/// Step-size controller for the accept/reject loop.
pub fn next_step_size(h: f64, err_norm: f64, h_max: f64) -> f64 {
    const SAFETY: f64 = 0.9;
    let scale = if err_norm == 0.0 {
        5.0
    } else {
        (SAFETY * err_norm.powf(-0.2)).clamp(0.2, 5.0)
    };
    (h * scale).min(h_max)
}

/// Signal returned by the per-step observer of [`propagate`].
pub enum StepFlow {
    Continue,
    /// Stop the propagation; the caller has extracted what it needs.
    Stop,
}

/// Adaptive propagation of `y' = f(t, y)` from `t0` to `t_end` (`t_end >
/// t0`), invoking `on_step` after every accepted step.
///
/// `weights(y, w)` fills the componentwise error weights; `post_accept` may
/// project the accepted state (sphere renormalization). Returns the final
/// `(t, y)` reached, which is `t_end` unless the observer stopped early.
#[allow(clippy::too_many_arguments)]
pub fn propagate<const N: usize>(
    f: &mut dyn FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    h_init: f64,
    settings: &IntegratorSettings,
    weights: &dyn Fn(&[f64; N], &mut [f64; N]),
    post_accept: &dyn Fn(&mut [f64; N]),
    on_step: &mut dyn FnMut(&DenseStep<N>) -> StepFlow,
) -> Result<(f64, [f64; N])> {
    let mut t = t0;
    let mut y = y0;
    let mut h = h_init.min(settings.max_step).min(t_end - t0);
    let mut k1: Option<[f64; N]> = None;
    let mut w = [0.0; N];
    let mut steps = 0usize;

    while t < t_end {
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        if steps >= settings.max_steps {
            return Err(Error::StepBudgetExhausted { t });
        }
        let h_trial = h.min(t_end - t);
        let trial = trial_step(f, t, &y, h_trial, k1);
        weights(&y, &mut w);
        let err = error_norm(&trial.err, &w);
        if err <= 1.0 {
            steps += 1;
            let mut y1 = trial.y5;
            post_accept(&mut y1);
            let dense = dense_from_trial(t, &y, h_trial, &trial, &y1);
            t += h_trial;
            y = y1;
            // FSAL only holds if post_accept left the state unchanged;
            // recompute the first stage from the projected state.
            k1 = Some(f(t, &y));
            h = next_step_size(h_trial, err, settings.max_step);
            if let StepFlow::Stop = on_step(&dense) {
                return Ok((t, y));
            }
        } else {
            h = next_step_size(h_trial, err, settings.max_step).min(h_trial);
            k1 = Some(trial.stages[0]);
        }
    }
    Ok((t, y))
}

/// Absolute-plus-relative weights, the default error scaling.
pub fn standard_weights<const N: usize>(abs_tol: f64, rel_tol: f64, y: &[f64; N], w: &mut [f64; N]) {
    for i in 0..N {
        w[i] = abs_tol + rel_tol * y[i].abs();
    }
}

/// Fixed-step 5th-order propagation over `n` substeps (no error control).
///
/// Used where the step grid must be deterministic and differentiable, e.g.
/// the piecewise-constant direct method.
pub fn propagate_fixed<const N: usize>(
    f: &mut dyn FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    n: usize,
) -> [f64; N] {
    let h = (t_end - t0) / n as f64;
    let mut y = y0;
    let mut t = t0;
    for _ in 0..n {
        let trial = trial_step(f, t, &y, h, None);
        y = trial.y5;
        t += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> IntegratorSettings {
        IntegratorSettings::default()
    }

    // x' = -y, y' = x; solution rotates at unit speed.
    fn rotation(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [-y[1], y[0]]
    }

    #[test]
    fn rotation_accuracy() {
        let s = settings();
        let mut f = rotation;
        let (t, y) = propagate(
            &mut f,
            0.0,
            [1.0, 0.0],
            std::f64::consts::PI,
            1e-3,
            &s,
            &|y, w| standard_weights(1e-14, 1e-12, y, w),
            &|_| {},
            &mut |_| StepFlow::Continue,
        )
        .unwrap();
        assert_eq!(t, std::f64::consts::PI);
        assert!((y[0] + 1.0).abs() < 1e-11, "y = {y:?}");
        assert!(y[1].abs() < 1e-11);
    }

    #[test]
    fn dense_output_matches_solution_inside_steps() {
        let s = settings();
        let mut f = rotation;
        let mut worst = 0.0f64;
        propagate(
            &mut f,
            0.0,
            [1.0, 0.0],
            2.0,
            1e-3,
            &s,
            &|y, w| standard_weights(1e-12, 1e-10, y, w),
            &|_| {},
            &mut |dense| {
                for k in 1..8 {
                    let t = dense.t0 + dense.h * k as f64 / 8.0;
                    let y = dense.eval(t);
                    let exact = [t.cos(), t.sin()];
                    worst = worst.max((y[0] - exact[0]).abs()).max((y[1] - exact[1]).abs());
                }
                StepFlow::Continue
            },
        )
        .unwrap();
        assert!(worst < 1e-9, "dense-output error {worst:.3e}");
    }

    #[test]
    fn fixed_step_matches_adaptive() {
        let y_fixed = propagate_fixed(&mut rotation, 0.0, [1.0, 0.0], 1.0, 500);
        assert!((y_fixed[0] - 1.0f64.cos()).abs() < 1e-12);
        assert!((y_fixed[1] - 1.0f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn early_stop_via_observer() {
        let s = settings();
        let mut f = rotation;
        let (t, _) = propagate(
            &mut f,
            0.0,
            [1.0, 0.0],
            10.0,
            1e-3,
            &s,
            &|y, w| standard_weights(1e-12, 1e-10, y, w),
            &|_| {},
            &mut |dense| {
                if dense.t1() > 0.5 {
                    StepFlow::Stop
                } else {
                    StepFlow::Continue
                }
            },
        )
        .unwrap();
        assert!(t > 0.5 && t < 1.0);
    }
}
