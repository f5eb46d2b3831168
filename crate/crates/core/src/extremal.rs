//! Propagation of the combined state/costate flow with switching-function
//! event location, and concatenation of bang arcs into extremal
//! trajectories.
//!
//! The integrated vector is `[x1, x2, x3, p1, p2, p3, c]` where `c`
//! accumulates the running cost `x1^2`. Trajectories are parameterized by a
//! nonnegative integration parameter `s`; [`Direction`] records whether `s`
//! runs with physical time or against it (backward synthesis from a seed
//! near the target). Along a chattering synthesis the costate magnitude
//! spans many orders of magnitude, so its error weights are taken relative
//! to the current costate norm rather than absolute.

use crate::error::{Error, Result};
use crate::model::{
    adjoint_rhs, dynamics_rhs, pontryagin_hamiltonian, switching_fn, AdjointVector, ModelParams,
    StateVector, NORMAL_COST_MULTIPLIER,
};
use crate::ode::{propagate, DenseStep, IntegratorSettings, StepFlow};
use serde::Serialize;

/// Orientation of the integration parameter with respect to physical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// One sample of an extremal trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalPoint {
    /// Integration parameter (see [`Direction`]).
    pub t: f64,
    pub x: StateVector,
    pub p: AdjointVector,
    pub u: f64,
    pub phi: f64,
}

/// A located switching event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchPoint {
    pub t: f64,
    pub x: StateVector,
    pub p: AdjointVector,
    /// Control on the arc ending at the event (in integration order).
    pub u_before: f64,
    /// Control on the arc starting at the event.
    pub u_after: f64,
    pub phi: f64,
}

/// Constant-control segment of an extremal.
#[derive(Debug, Clone, Serialize)]
pub struct BangArc {
    pub u: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub start: ExtremalPoint,
    pub end: ExtremalPoint,
    pub cost_start: f64,
    pub cost_end: f64,
    /// Step-boundary and interior samples (when recorded).
    pub samples: Vec<ExtremalPoint>,
    /// Full dense-output steps (when recorded), trimmed to the arc at the
    /// ends by consumers.
    #[serde(skip)]
    pub dense: Vec<DenseStep<7>>,
}

impl BangArc {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn cost(&self) -> f64 {
        self.cost_end - self.cost_start
    }
}

/// Why an arc integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArcEnd {
    /// A sign change of the switching function was located.
    SwitchingZero,
    /// The time cap was reached without an event.
    MaxTime,
    /// The state entered the requested stopping ball.
    BallReached,
}

/// What to retain while integrating.
#[derive(Debug, Clone, Copy)]
pub struct Recording {
    /// Keep per-step samples (two interior points per step).
    pub samples: bool,
    /// Keep the dense-output steps themselves.
    pub dense_steps: bool,
}

impl Recording {
    pub const FULL: Recording = Recording { samples: true, dense_steps: true };
    pub const ENDPOINTS_ONLY: Recording = Recording { samples: false, dense_steps: false };
}

/// Termination condition for concatenated trajectories.
#[derive(Debug, Clone, Copy)]
pub struct StopCondition {
    /// Cap on the integration span.
    pub max_span: f64,
    /// Stop when the state enters this ball.
    pub ball: Option<(StateVector, f64)>,
}

/// Concatenation of bang arcs with its switching events.
#[derive(Debug, Clone, Serialize)]
pub struct ExtremalTrajectory {
    pub arcs: Vec<BangArc>,
    pub switch_points: Vec<SwitchPoint>,
    pub direction: Direction,
    /// Integral of `x1^2` over the whole trajectory.
    pub cost_accumulated: f64,
    /// Set when the switching cap stopped the concatenation.
    pub truncated: bool,
    /// Analytic time between the trajectory start (at `s = 0`) and the
    /// chattering accumulation instant at the target, when known.
    pub tail_time: f64,
    /// Analytic running cost of that suppressed tail.
    pub tail_cost: f64,
}

impl ExtremalTrajectory {
    pub fn end_point(&self) -> &ExtremalPoint {
        &self.arcs.last().expect("trajectory has at least one arc").end
    }

    pub fn span(&self) -> f64 {
        self.arcs.last().map_or(0.0, |a| a.t_end)
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.switch_points.iter().map(|s| s.t).collect()
    }

    fn sample_points(&self) -> impl Iterator<Item = &ExtremalPoint> {
        self.arcs.iter().flat_map(|a| {
            a.samples
                .iter()
                .chain(std::iter::once(&a.start))
                .chain(std::iter::once(&a.end))
        })
    }

    /// Largest `| |X| - 1 |` over all retained samples.
    pub fn max_sphere_defect(&self) -> f64 {
        self.sample_points()
            .map(|p| (p.x.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|H_P|` over all retained samples (normal multiplier).
    pub fn max_hamiltonian_defect(&self, params: &ModelParams) -> f64 {
        self.sample_points()
            .map(|pt| {
                pontryagin_hamiltonian(&pt.x, &pt.p, pt.u, params, NORMAL_COST_MULTIPLIER).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|Phi|` over the recorded switching events.
    pub fn max_switch_phi(&self) -> f64 {
        self.switch_points.iter().map(|s| s.phi.abs()).fold(0.0, f64::max)
    }

    /// Integrates `x1^2` over the dense output with 5-point Gauss-Legendre
    /// quadrature per step, independently of the cost component carried by
    /// the flow. Requires dense recording.
    pub fn quadrature_cost(&self) -> Option<f64> {
        let mut total = 0.0;
        for arc in &self.arcs {
            if arc.dense.is_empty() && arc.duration() > 0.0 {
                return None;
            }
            for step in &arc.dense {
                let lo = step.t0.max(arc.t_start);
                let hi = step.t1().min(arc.t_end);
                if hi <= lo {
                    continue;
                }
                total += gauss5(lo, hi, |t| {
                    let y = step.eval(t);
                    y[0] * y[0]
                });
            }
        }
        Some(total)
    }
}

fn gauss5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X1: f64 = 0.538_469_310_105_683_1; // sqrt(5 - 2 sqrt(10/7)) / 3
    const X2: f64 = 0.906_179_845_938_664; // sqrt(5 + 2 sqrt(10/7)) / 3
    const W0: f64 = 128.0 / 225.0;
    const W1: f64 = 0.478_628_670_499_366_47; // (322 + 13 sqrt(70)) / 900
    const W2: f64 = 0.236_926_885_056_189_08; // (322 - 13 sqrt(70)) / 900
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half
        * (W0 * f(mid)
            + W1 * (f(mid - half * X1) + f(mid + half * X1))
            + W2 * (f(mid - half * X2) + f(mid + half * X2)))
}

const STATE: std::ops::Range<usize> = 0..3;
const COSTATE: std::ops::Range<usize> = 3..6;
const COST: usize = 6;
pub const DIM: usize = 7;

pub fn pack(x: &StateVector, p: &AdjointVector, cost: f64) -> [f64; DIM] {
    [x.x1, x.x2, x.x3, p.p1, p.p2, p.p3, cost]
}

pub fn unpack(y: &[f64; DIM]) -> (StateVector, AdjointVector, f64) {
    (
        StateVector::new(y[0], y[1], y[2]),
        AdjointVector::new(y[3], y[4], y[5]),
        y[COST],
    )
}

fn phi_of(y: &[f64; DIM]) -> f64 {
    // p3 x2 - p2 x3
    y[5] * y[1] - y[4] * y[2]
}

fn costate_norm(y: &[f64; DIM]) -> f64 {
    (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt()
}

fn reduced_costate_norm(y: &[f64; DIM]) -> f64 {
    let (x, p, _) = unpack(y);
    p.reduced(&x).norm()
}

fn point_at(t: f64, y: &[f64; DIM], u: f64) -> ExtremalPoint {
    let (x, p, _) = unpack(y);
    ExtremalPoint { t, x, p, u, phi: switching_fn(&x, &p) }
}

/// Componentwise error weights: absolute-plus-relative for the state and
/// cost, norm-relative for the costate (its magnitude is meaningful only
/// relative to itself along a chattering synthesis).
fn extremal_weights(settings: &IntegratorSettings, y: &[f64; DIM], w: &mut [f64; DIM]) {
    let pn = costate_norm(y);
    for i in STATE {
        w[i] = settings.abs_tol + settings.rel_tol * y[i].abs();
    }
    for i in COSTATE {
        w[i] = settings.rel_tol * (y[i].abs() + pn) + 1e-290;
    }
    w[COST] = settings.abs_tol + settings.rel_tol * y[COST].abs();
}

fn renormalize_state(y: &mut [f64; DIM]) {
    let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    y[0] /= n;
    y[1] /= n;
    y[2] /= n;
}

// Relative switching-function magnitude above which the sign watcher arms.
const ARM_THRESHOLD: f64 = 1e-8;
// Interior dense samples inspected per accepted step.
const EVENT_SCAN: usize = 16;

/// Integrates a single constant-control arc until the first switching-zero,
/// a stopping-ball entry, or the span cap.
///
/// `t0` is the arc's starting integration parameter; `span_cap` bounds
/// `t - t0`. The caller supplies the packed start `y0` and an initial step
/// hint.
#[allow(clippy::too_many_arguments)]
pub fn integrate_bang_arc(
    y0: [f64; DIM],
    u: f64,
    direction: Direction,
    t0: f64,
    span_cap: f64,
    ball: Option<(StateVector, f64)>,
    h_hint: f64,
    settings: &IntegratorSettings,
    params: &ModelParams,
    record: Recording,
) -> Result<(BangArc, ArcEnd, [f64; DIM])> {
    let phi0 = phi_of(&y0);
    let ptilde0 = reduced_costate_norm(&y0);
    if ptilde0 > 0.0 && phi0.abs() / ptilde0 > 1e-6 && u * phi0 < 0.0 {
        return Err(Error::InvalidInput(format!(
            "control {u} inconsistent with sign maximization (Phi = {phi0:.3e})"
        )));
    }

    let dir = direction.sign();
    let delta = params.delta;
    let mut f = move |_t: f64, y: &[f64; DIM]| -> [f64; DIM] {
        let (x, p, _) = unpack(y);
        let dx = dynamics_rhs(&x, u, params);
        let dp = adjoint_rhs(&x, &p, u, params);
        [
            dir * dx[0],
            dir * dx[1],
            dir * dx[2],
            dir * dp[0],
            dir * dp[1],
            dir * dp[2],
            x.x1 * x.x1,
        ]
    };

    let mut samples: Vec<ExtremalPoint> = Vec::new();
    let mut dense_steps: Vec<DenseStep<DIM>> = Vec::new();
    let mut armed = false;
    let mut last_phi = phi0;
    let mut max_ptilde_rel = 0.0f64;
    let mut event: Option<(f64, [f64; DIM], ArcEnd)> = None;
    // Window after which an unarmed arc with a live reduced costate is
    // declared degenerate (two drift periods).
    let degenerate_window = 4.0 * std::f64::consts::PI / delta.max(1e-6);
    let mut degenerate_at: Option<f64> = None;

    let weights = |y: &[f64; DIM], w: &mut [f64; DIM]| extremal_weights(settings, y, w);
    let post = |y: &mut [f64; DIM]| renormalize_state(y);

    let mut on_step = |step: &DenseStep<DIM>| -> StepFlow {
        // Scan the dense output for the first switching-function sign
        // change (events can be shorter than a step near the accumulation),
        // and for stopping-ball entry.
        let mut prev_t = step.t0;
        let mut prev_phi = last_phi;
        let mut found: Option<(f64, f64)> = None;
        for k in 1..=EVENT_SCAN {
            let t = step.t0 + step.h * k as f64 / EVENT_SCAN as f64;
            let y = if k == EVENT_SCAN { step.y1 } else { step.eval(t) };
            let phi = phi_of(&y);
            let ptilde = reduced_costate_norm(&y);
            if ptilde > 0.0 {
                let rel = phi.abs() / ptilde;
                max_ptilde_rel = max_ptilde_rel.max(rel);
                if rel > ARM_THRESHOLD {
                    if armed && phi * prev_phi < 0.0 {
                        found = Some((prev_t, t));
                    }
                    armed = true;
                }
            }
            if found.is_some() {
                break;
            }
            prev_t = t;
            prev_phi = phi;
        }

        let ball_hit = ball.and_then(|(center, r)| {
            // Bracket ball entry on the same grid.
            let mut pt = step.t0;
            let dist = |t: f64| {
                let (x, _, _) = unpack(&step.eval(t));
                x.distance(&center) - r
            };
            let mut pd = dist(pt);
            for k in 1..=EVENT_SCAN {
                let t = step.t0 + step.h * k as f64 / EVENT_SCAN as f64;
                let d = dist(t);
                if pd > 0.0 && d <= 0.0 {
                    return Some((pt, t));
                }
                pt = t;
                pd = d;
            }
            None
        });

        // The earlier of the two terminations wins.
        let phi_event = found.map(|(a, b)| {
            let t = bisect(a, b, settings.event_tol_time, |t| phi_of(&step.eval(t)));
            (t, ArcEnd::SwitchingZero)
        });
        let ball_event = ball_hit.map(|(a, b)| {
            let (center, r) = ball.unwrap();
            let t = bisect(a, b, settings.event_tol_time, |t| {
                let (x, _, _) = unpack(&step.eval(t));
                x.distance(&center) - r
            });
            (t, ArcEnd::BallReached)
        });
        let first = match (phi_event, ball_event) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };

        if let Some((t_ev, kind)) = first {
            let mut y_ev = step.eval(t_ev);
            renormalize_state(&mut y_ev);
            event = Some((t_ev, y_ev, kind));
            if record.dense_steps {
                dense_steps.push(step.clone());
            }
            return StepFlow::Stop;
        }

        if record.samples {
            for k in [1, 2] {
                let t = step.t0 + step.h * k as f64 / 3.0;
                samples.push(point_at(t, &step.eval(t), u));
            }
            samples.push(point_at(step.t1(), &step.y1, u));
        }
        if record.dense_steps {
            dense_steps.push(step.clone());
        }
        last_phi = phi_of(&step.y1);

        if !armed
            && step.t1() - t0 > degenerate_window
            && max_ptilde_rel <= ARM_THRESHOLD
            && reduced_costate_norm(&step.y1) > 1e-6 * costate_norm(&step.y1)
        {
            degenerate_at = Some(step.t1());
            return StepFlow::Stop;
        }
        StepFlow::Continue
    };

    let (t_final, y_final) = propagate(
        &mut f,
        t0,
        y0,
        t0 + span_cap,
        h_hint,
        settings,
        &weights,
        &post,
        &mut on_step,
    )?;

    if let Some(t) = degenerate_at {
        return Err(Error::DegenerateArc { t });
    }

    let (t_end, y_end, end_kind) = match event {
        Some((t, y, kind)) => (t, y, kind),
        None => (t_final, y_final, ArcEnd::MaxTime),
    };

    let start = point_at(t0, &y0, u);
    let end = point_at(t_end, &y_end, u);
    // Drop recorded samples past the event cut.
    samples.retain(|s| s.t <= t_end);
    let arc = BangArc {
        u,
        t_start: t0,
        t_end,
        start,
        end,
        cost_start: y0[COST],
        cost_end: y_end[COST],
        samples,
        dense: dense_steps,
    };
    Ok((arc, end_kind, y_end))
}

/// Bisects a bracketed sign change to the requested time tolerance and
/// returns the crossing time.
fn bisect(mut a: f64, mut b: f64, tol_time: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol_time {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Concatenates alternating bang arcs from a seed until the stop condition,
/// the switching cap, or an integrator failure.
///
/// The control is negated at every located switching zero. When the cap on
/// switchings is exhausted the trajectory is returned with its `truncated`
/// flag set.
pub fn concatenate_extremal(
    x0: &StateVector,
    p0: &AdjointVector,
    u0: f64,
    direction: Direction,
    stop: StopCondition,
    settings: &IntegratorSettings,
    params: &ModelParams,
    record: Recording,
    first_step_hint: f64,
) -> Result<ExtremalTrajectory> {
    let mut y = pack(x0, p0, 0.0);
    let mut u = u0;
    let mut t = 0.0;
    let mut arcs = Vec::new();
    let mut switch_points = Vec::new();
    let mut truncated = false;
    let mut h_hint = first_step_hint;

    loop {
        let span_cap = stop.max_span - t;
        if span_cap <= 0.0 {
            break;
        }
        let (arc, end_kind, y_end) = integrate_bang_arc(
            y, u, direction, t, span_cap, stop.ball, h_hint, settings, params, record,
        )?;
        let duration = arc.duration();
        t = arc.t_end;
        y = y_end;
        let end = arc.end;
        arcs.push(arc);
        match end_kind {
            ArcEnd::SwitchingZero => {
                switch_points.push(SwitchPoint {
                    t,
                    x: end.x,
                    p: end.p,
                    u_before: u,
                    u_after: -u,
                    phi: end.phi,
                });
                if switch_points.len() >= settings.max_switchings {
                    truncated = true;
                    break;
                }
                u = -u;
                // Arcs shrink toward the accumulation and grow away from
                // it; a fraction of the previous duration is a safe start.
                h_hint = (duration * 0.1).max(1e-300);
            }
            ArcEnd::MaxTime | ArcEnd::BallReached => break,
        }
    }

    let cost = y[COST];
    Ok(ExtremalTrajectory {
        arcs,
        switch_points,
        direction,
        cost_accumulated: cost,
        truncated,
        tail_time: 0.0,
        tail_cost: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuller::{fuller_constants, nilpotent_map, quantum_local_curve};
    use crate::model::TARGET;
    use crate::synthesis::seed_adjoint;
    use approx::assert_relative_eq;

    fn params10() -> ModelParams {
        ModelParams::new(10.0).unwrap()
    }

    #[test]
    fn stationary_arc_at_target_runs_to_cap() {
        let settings = IntegratorSettings::default();
        let y0 = pack(&TARGET, &AdjointVector::ZERO, 0.0);
        let (arc, end, _) = integrate_bang_arc(
            y0,
            0.0,
            Direction::Forward,
            0.0,
            1.0,
            None,
            1e-3,
            &settings,
            &params10(),
            Recording::ENDPOINTS_ONLY,
        )
        .unwrap();
        assert_eq!(end, ArcEnd::MaxTime);
        assert_relative_eq!(arc.t_end, 1.0);
        assert_eq!(arc.end.x, TARGET);
        assert_eq!(arc.cost_end, 0.0);
    }

    #[test]
    fn singular_equator_arc_is_reported_degenerate() {
        // On the equator with p3 = 0 and the Hamiltonian condition on p2,
        // the switching function vanishes identically for u = 0.
        let params = params10();
        let settings = IntegratorSettings::default();
        let x = StateVector::new(1.0, 0.0, 0.0);
        let p = AdjointVector::new(0.0, 1.0 / (2.0 * params.delta), 0.0);
        let y0 = pack(&x, &p, 0.0);
        let err = integrate_bang_arc(
            y0,
            0.0,
            Direction::Forward,
            0.0,
            10.0,
            None,
            1e-3,
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateArc { .. }), "got {err}");
    }

    #[test]
    fn hamiltonian_conserved_along_bang_arc() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(0.05, &params).unwrap();
        let y0 = pack(&seed.x0, &seed.p0, 0.0);
        let (arc, _, _) = integrate_bang_arc(
            y0,
            -1.0,
            Direction::Backward,
            0.0,
            0.4,
            None,
            1e-4,
            &settings,
            &params,
            Recording::FULL,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for s in arc.samples.iter().chain([&arc.start, &arc.end]) {
            let h = pontryagin_hamiltonian(&s.x, &s.p, s.u, &params, NORMAL_COST_MULTIPLIER);
            worst = worst.max(h.abs());
        }
        assert!(worst < 1e-9, "Hamiltonian drift {worst:.3e}");
    }

    #[test]
    fn first_backward_switch_matches_fuller_prediction() {
        // In the dilation regime the first backward arc is the Fuller arc
        // in disguise: duration x20 (1 + alpha) and contracted switch
        // state, both to 1e-4 relative at x20 = 1e-4.
        let params = params10();
        let settings = IntegratorSettings::default();
        let x20 = 1e-4;
        let seed = seed_adjoint(x20, &params).unwrap();
        let c = fuller_constants();
        let traj = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 0.01, ball: None },
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
            1e-7,
        )
        .unwrap();
        assert!(!traj.switch_points.is_empty());
        let sw = traj.switch_points[0];
        let expected_t = x20 * (1.0 + c.alpha);
        assert_relative_eq!(sw.t, expected_t, max_relative = 1e-4);
        assert_relative_eq!(sw.x.x2, -c.alpha * x20, max_relative = 1e-4);
        // Switch point sits on the mapped switching curve.
        let f = nilpotent_map(sw.x.x1, sw.x.x2, &params);
        assert_relative_eq!(
            sw.x.x1,
            quantum_local_curve(sw.x.x2, &params),
            max_relative = 2e-3
        );
        assert!(f.y < 0.0);
    }

    #[test]
    fn backward_switch_distances_grow_by_alpha() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(2e-4, &params).unwrap();
        let traj = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 0.5, ball: None },
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
            1e-7,
        )
        .unwrap();
        assert!(traj.switch_points.len() >= 5, "{} switchings", traj.switch_points.len());
        let alpha = fuller_constants().alpha;
        let times = traj.switch_times();
        // Successive switch distances from the seed grow by alpha in the
        // dilation regime.
        for k in 0..3 {
            let ratio = times[k + 1] / times[k];
            assert_relative_eq!(ratio, alpha, max_relative = 2e-2);
        }
    }

    #[test]
    fn forward_reintegration_reverses_backward_path() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(3e-4, &params).unwrap();
        let backward = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 0.08, ball: None },
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
            1e-7,
        )
        .unwrap();
        assert!(backward.switch_points.len() >= 2);
        // Re-integrate forward (physical time) from the backward endpoint
        // with the control schedule frozen from the backward pass.
        let end = backward.end_point();
        let span = backward.span();
        let mut y = pack(&end.x, &end.p, 0.0);
        // Walk arcs in reverse, integrating each over its duration.
        for arc in backward.arcs.iter().rev() {
            let mut f = |_t: f64, yy: &[f64; DIM]| -> [f64; DIM] {
                let (x, p, _) = unpack(yy);
                let dx = dynamics_rhs(&x, arc.u, &params);
                let dp = adjoint_rhs(&x, &p, arc.u, &params);
                [dx[0], dx[1], dx[2], dp[0], dp[1], dp[2], x.x1 * x.x1]
            };
            let (_, y_next) = propagate(
                &mut f,
                span - arc.t_end,
                y,
                span - arc.t_start,
                1e-3 * arc.duration().max(1e-12),
                &settings,
                &|yy, w| extremal_weights(&settings, yy, w),
                &|yy| renormalize_state(yy),
                &mut |_| StepFlow::Continue,
            )
            .unwrap();
            y = y_next;
        }
        let (x_final, _, _) = unpack(&y);
        assert!(
            x_final.distance(&seed.x0) < 1e-6,
            "forward replay missed the seed by {:.3e}",
            x_final.distance(&seed.x0)
        );
    }

    #[test]
    fn cost_component_matches_dense_quadrature() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(5e-4, &params).unwrap();
        let traj = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 0.3, ball: None },
            &settings,
            &params,
            Recording::FULL,
            1e-7,
        )
        .unwrap();
        let quad = traj.quadrature_cost().unwrap();
        assert_relative_eq!(quad, traj.cost_accumulated, max_relative = 1e-9);
    }

    #[test]
    fn switch_events_obey_sign_rule_and_phi_bound() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(4e-4, &params).unwrap();
        let traj = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 2.0, ball: None },
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
            1e-7,
        )
        .unwrap();
        assert!(traj.switch_points.len() >= 6);
        assert!(traj.max_switch_phi() < settings.event_tol_phi);
        for sw in &traj.switch_points {
            // In physical time the arcs swap roles under backward
            // integration: the forward transition is u_after -> u_before.
            let (from, to) = (sw.u_after, sw.u_before);
            let s = sw.x.x2 * sw.x.x3;
            if s > 0.0 {
                assert!(from < 0.0 && to > 0.0, "sign rule violated at {:?}", sw.x);
            } else if s < 0.0 {
                assert!(from > 0.0 && to < 0.0, "sign rule violated at {:?}", sw.x);
            }
        }
    }

    #[test]
    fn ball_stop_cuts_trajectory() {
        let params = params10();
        let settings = IntegratorSettings::default();
        let seed = seed_adjoint(4e-4, &params).unwrap();
        let center = StateVector::new(0.0, 1.0, 0.0);
        let traj = concatenate_extremal(
            &seed.x0,
            &seed.p0,
            -1.0,
            Direction::Backward,
            StopCondition { max_span: 6.0, ball: Some((center, 0.8)) },
            &settings,
            &params,
            Recording::ENDPOINTS_ONLY,
            1e-7,
        )
        .unwrap();
        let end = traj.end_point();
        assert_relative_eq!(end.x.distance(&center), 0.8, epsilon = 1e-9);
    }
}
