//! Extremal synthesis: seeds on the local switching curve near the target,
//! costate recovery from the maximum-principle conditions, scalar Newton
//! shooting on the seed parameter, and switching-curve reconstruction by
//! seed sweeps.
//!
//! Backward integration from a seed is well posed: the map taking a
//! switching point to the next one toward the target is hyperbolic with the
//! switching curve as stable manifold, so its inverse (the backward map)
//! expands away from the target and backward trajectories are insensitive
//! to the seeding error.

use crate::error::{Error, Result};
use crate::extremal::{
    concatenate_extremal, unpack, BangArc, Direction, ExtremalPoint, ExtremalTrajectory,
    Recording, StopCondition, SwitchPoint,
};
use crate::fuller::{fuller_constants, fuller_final_time, fuller_trajectory, FullerState};
use crate::model::{
    dynamics_rhs, pontryagin_hamiltonian, switching_fn, AdjointVector, ModelParams, StateVector,
    NORMAL_COST_MULTIPLIER, TARGET,
};
use crate::ode::IntegratorSettings;
use rayon::prelude::*;
use serde::Serialize;

/// Radius around the target within which the local synthesis structure is
/// backed by the normal-form analysis; results that leave this ball carry
/// an `extrapolated` flag (the structure is observed numerically to persist
/// over the whole north hemisphere, but is not certified there).
pub const VALIDATED_RADIUS: f64 = 0.3;

/// A point of the approximate switching curve near the target, with the
/// costate fixed by the maximum-principle conditions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedPoint {
    pub x20: f64,
    pub x0: StateVector,
    pub p0: AdjointVector,
}

impl SeedPoint {
    /// Control of the arc traced when integrating backward from the seed.
    pub fn backward_control(&self) -> f64 {
        -self.x20.signum()
    }
}

/// Builds the seed state `(sign(x20) xi delta x20^2, x20, x3)` on the local
/// switching curve and solves the linear system fixing the costate:
/// `Phi = 0`, `H_P = 0`, and the gauge `P.X = 0`.
///
/// The system is nonsingular for `x20 != 0`; at `x20 = 0` the conditions
/// force a vanishing reduced costate and the seed is rejected.
pub fn seed_adjoint(x20: f64, params: &ModelParams) -> Result<SeedPoint> {
    if x20 == 0.0 || !x20.is_finite() {
        return Err(Error::SingularSeed(
            "x20 = 0 forces a vanishing reduced costate".into(),
        ));
    }
    let xi = fuller_constants().xi;
    let d = params.delta;
    let x1 = x20.signum() * xi * d * x20 * x20;
    let x2 = x20;
    let r2 = x1 * x1 + x2 * x2;
    if r2 >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "seed parameter {x20} places the seed off the upper hemisphere"
        )));
    }
    let x3 = (1.0 - r2).sqrt();
    // Closed-form solution of the 3x3 system
    //   p3 x2 - p2 x3            = 0
    //   d (p2 x1 - p1 x2)        = x1^2 / 2
    //   p1 x1 + p2 x2 + p3 x3    = 0
    let p2 = x1 * x1 * x1 / (2.0 * d);
    let p1 = -x1 * x1 * (1.0 - x1 * x1) / (2.0 * d * x2);
    let p3 = p2 * x3 / x2;
    Ok(SeedPoint {
        x20,
        x0: StateVector::new(x1, x2, x3),
        p0: AdjointVector::new(p1, p2, p3),
    })
}

/// Result of the scalar shooting solve.
#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    /// Seed parameter whose backward extremal passes through the requested
    /// initial state.
    pub x20_star: f64,
    /// Backward duration from the seed to the initial state.
    pub tau: f64,
    /// Total transfer time: `tau` plus the analytic chattering tail.
    pub t_f: f64,
    /// Distance of the backward trajectory to the initial state at closest
    /// approach.
    pub terminal_miss: f64,
    /// Total running cost including the analytic tail.
    pub cost: f64,
    /// Switchings on the retained stretch.
    pub n_switchings: usize,
    /// The requested initial state left the region covered by the local
    /// analysis (the structure is extrapolated, not certified).
    pub extrapolated: bool,
    #[serde(skip)]
    pub trajectory: ExtremalTrajectory,
}

/// Tunables of [`shoot`].
#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// Cap on the backward integration span; defaults to `60 / delta`.
    pub max_span: Option<f64>,
    /// Seed-scan resolution over one contraction period.
    pub scan_points: usize,
    pub newton_max_iter: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { max_span: None, scan_points: 26, newton_max_iter: 30 }
    }
}

struct SeedRun {
    traj: ExtremalTrajectory,
    /// Closest approach to the requested state: parameter, distance,
    /// signed transverse distance.
    s_star: f64,
    miss: f64,
    signed_miss: f64,
}

fn first_step_hint(x20: f64) -> f64 {
    2e-2 * x20.abs()
}

fn run_seed(
    x20: f64,
    x_init: &StateVector,
    max_span: f64,
    settings: &IntegratorSettings,
    params: &ModelParams,
    record: Recording,
) -> Result<SeedRun> {
    let seed = seed_adjoint(x20, params)?;
    let traj = concatenate_extremal(
        &seed.x0,
        &seed.p0,
        seed.backward_control(),
        Direction::Backward,
        StopCondition { max_span, ball: None },
        settings,
        params,
        record,
        first_step_hint(x20),
    )?;
    let (s_star, miss, arc_idx) = closest_approach(&traj, x_init);
    let signed_miss = signed_transverse_miss(&traj, arc_idx, s_star, miss, x_init, params);
    Ok(SeedRun { traj, s_star, miss, signed_miss })
}

/// Locates the first deep approach of the trajectory to `x_init` (falling
/// back to the global minimum), refined on the dense output. Returns the
/// parameter, the distance, and the index of the arc containing it.
fn closest_approach(traj: &ExtremalTrajectory, x_init: &StateVector) -> (f64, f64, usize) {
    const COARSE: usize = 6;
    const DEEP: f64 = 0.7;
    let dist_at = |arc: &BangArc, t: f64| -> f64 {
        for step in &arc.dense {
            if step.contains(t) {
                let (x, _, _) = unpack(&step.eval(t));
                return x.distance(x_init);
            }
        }
        f64::INFINITY
    };

    // Coarse pass over the dense grid, watching for the first local
    // minimum below the depth threshold.
    let mut coarse: Vec<(usize, f64, f64)> = Vec::new();
    for (ai, arc) in traj.arcs.iter().enumerate() {
        for step in &arc.dense {
            let lo = step.t0.max(arc.t_start);
            let hi = step.t1().min(arc.t_end);
            if hi <= lo {
                continue;
            }
            for k in 0..COARSE {
                let t = lo + (hi - lo) * k as f64 / COARSE as f64;
                let (x, _, _) = unpack(&step.eval(t));
                coarse.push((ai, t, x.distance(x_init)));
            }
        }
        let end = arc.end;
        coarse.push((ai, arc.t_end, end.x.distance(x_init)));
    }
    if coarse.is_empty() {
        return (0.0, f64::INFINITY, 0);
    }

    let mut pick: Option<usize> = None;
    for i in 1..coarse.len().saturating_sub(1) {
        if coarse[i].2 < DEEP && coarse[i].2 <= coarse[i - 1].2 && coarse[i].2 <= coarse[i + 1].2 {
            pick = Some(i);
            break;
        }
    }
    // Boundary minimum at the very start (seed already closest).
    if pick.is_none() && coarse.len() >= 2 && coarse[0].2 < DEEP && coarse[0].2 <= coarse[1].2 {
        pick = Some(0);
    }
    let pick = pick.unwrap_or_else(|| {
        coarse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
            .map(|(i, _)| i)
            .unwrap()
    });

    // Golden-section refinement between the neighbors of the coarse pick.
    let lo_i = pick.saturating_sub(1);
    let hi_i = (pick + 1).min(coarse.len() - 1);
    let (ai, mut a, _) = coarse[lo_i];
    let (_, mut b, _) = coarse[hi_i];
    if b <= a {
        return (coarse[pick].1, coarse[pick].2, coarse[pick].0);
    }
    let arc_of = |t: f64| -> usize {
        traj.arcs
            .iter()
            .position(|arc| t >= arc.t_start && t <= arc.t_end)
            .unwrap_or(ai)
    };
    let f = |t: f64| dist_at(&traj.arcs[arc_of(t)], t);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..90 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t_star = 0.5 * (a + b);
    let arc_idx = arc_of(t_star);
    (t_star, dist_at(&traj.arcs[arc_idx], t_star), arc_idx)
}

/// Signed distance of `x_init` from the trajectory at its closest approach,
/// measured along the transverse direction `X' x X`. The sign flips as the
/// trajectory family sweeps past `x_init`, which is what the scalar root
/// search solves on.
fn signed_transverse_miss(
    traj: &ExtremalTrajectory,
    arc_idx: usize,
    s_star: f64,
    miss: f64,
    x_init: &StateVector,
    params: &ModelParams,
) -> f64 {
    let arc = &traj.arcs[arc_idx];
    let x = arc
        .dense
        .iter()
        .find(|st| st.contains(s_star))
        .map(|st| {
            let (x, _, _) = unpack(&st.eval(s_star));
            x
        })
        .unwrap_or(arc.end.x);
    let v = dynamics_rhs(&x, arc.u, params);
    let b = [
        v[1] * x.x3 - v[2] * x.x2,
        v[2] * x.x1 - v[0] * x.x3,
        v[0] * x.x2 - v[1] * x.x1,
    ];
    let r = [x_init.x1 - x.x1, x_init.x2 - x.x2, x_init.x3 - x.x3];
    let side = b[0] * r[0] + b[1] * r[1] + b[2] * r[2];
    miss.copysign(side)
}

/// Finds the seed parameter whose backward extremal passes through
/// `x_init`, then assembles the transfer data with the analytic chattering
/// tail.
///
/// The seed parameter is not unique (deeper seeds add full chattering
/// periods); the largest one compatible with the requested precision on the
/// final state is selected by scanning downward from `x20 = precision` over
/// one contraction period and solving the first sign change of the signed
/// miss (Newton with a bisection fallback inside the bracket).
pub fn shoot(
    x_init: &StateVector,
    precision: f64,
    params: &ModelParams,
    settings: &IntegratorSettings,
    options: &ShootOptions,
) -> Result<ShootingResult> {
    if !(precision > 0.0 && precision < 0.5) {
        return Err(Error::InvalidInput(format!(
            "precision must lie in (0, 0.5), got {precision}"
        )));
    }
    if !x_init.is_on_sphere(1e-8) {
        return Err(Error::InvalidInput("initial state must lie on the unit sphere".into()));
    }
    let alpha = fuller_constants().alpha;
    let max_span = options.max_span.unwrap_or(60.0 / params.delta);
    let record = Recording { samples: false, dense_steps: true };

    // Scan one full contraction period downward from the precision bound.
    let hi = precision;
    let lo = precision / (alpha * alpha) * 0.95;
    let n = options.scan_points.max(8);
    let mut scan: Vec<(f64, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        let x20 = hi * (lo / hi).powf(k as f64 / (n - 1) as f64);
        let run = run_seed(x20, x_init, max_span, settings, params, record)?;
        scan.push((x20, run.signed_miss));
    }

    let mut solved: Option<(f64, SeedRun)> = None;
    for w in 0..n - 1 {
        let (xa, fa) = scan[w];
        let (xb, fb) = scan[w + 1];
        if fa == 0.0 {
            let run = run_seed(xa, x_init, max_span, settings, params, record)?;
            solved = Some((xa, run));
            break;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        if let Some(found) =
            solve_bracket(xa, fa, xb, fb, x_init, max_span, settings, params, options)?
        {
            if found.1.miss <= precision {
                solved = Some(found);
                break;
            }
        }
    }
    let (x20_star, run) = solved.ok_or_else(|| {
        Error::ShootingFailed(format!(
            "no admissible seed in [{lo:.3e}, {hi:.3e}] reaches the initial state"
        ))
    })?;

    let mut trajectory = truncate_at(&run.traj, run.s_star);
    let tail_time = fuller_final_time(x20_star.abs())?;
    let xi = fuller_constants().xi;
    let y0 = x20_star.abs();
    let tail_fuller = fuller_trajectory(FullerState::new(-xi * y0 * y0, y0), 1)?;
    let tail_cost = params.delta * params.delta * tail_fuller.cost;
    trajectory.tail_time = tail_time;
    trajectory.tail_cost = tail_cost;

    Ok(ShootingResult {
        x20_star,
        tau: run.s_star,
        t_f: run.s_star + tail_time,
        terminal_miss: run.miss,
        cost: trajectory.cost_accumulated + tail_cost,
        n_switchings: trajectory.switch_points.len(),
        extrapolated: x_init.distance(&TARGET) > VALIDATED_RADIUS,
        trajectory,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_bracket(
    mut xa: f64,
    mut fa: f64,
    mut xb: f64,
    mut fb: f64,
    x_init: &StateVector,
    max_span: f64,
    settings: &IntegratorSettings,
    params: &ModelParams,
    options: &ShootOptions,
) -> Result<Option<(f64, SeedRun)>> {
    let record = Recording { samples: false, dense_steps: true };
    let eval = |x20: f64| -> Result<SeedRun> {
        run_seed(x20, x_init, max_span, settings, params, record)
    };
    let mut x = 0.5 * (xa + xb);
    let mut best: Option<(f64, SeedRun)> = None;
    for _ in 0..options.newton_max_iter {
        let run = eval(x)?;
        let fx = run.signed_miss;
        let good_enough = fx.abs() < 1e-10;
        if best.as_ref().map_or(true, |(_, b)| run.miss < b.miss) {
            best = Some((x, run));
        }
        if good_enough {
            break;
        }
        // Maintain the bracket.
        if fa * fx < 0.0 {
            xb = x;
            fb = fx;
        } else {
            xa = x;
            fa = fx;
        }
        if (xb - xa).abs() < 1e-13 * x.abs() {
            break;
        }
        // Newton step on a central finite difference, clipped to the
        // bracket; fall back to bisection when it escapes.
        let h = 1e-4 * x.abs();
        let fp = (eval(x + h)?.signed_miss - eval(x - h)?.signed_miss) / (2.0 * h);
        let x_newton = if fp != 0.0 { x - fx / fp } else { f64::NAN };
        x = if x_newton.is_finite() && x_newton > xa.min(xb) && x_newton < xa.max(xb) {
            x_newton
        } else {
            0.5 * (xa + xb)
        };
        let _ = fb;
    }
    Ok(best)
}

/// Cuts a trajectory at parameter `s`, trimming arcs and re-deriving the
/// final point and cost from the dense output.
fn truncate_at(traj: &ExtremalTrajectory, s: f64) -> ExtremalTrajectory {
    let mut arcs: Vec<BangArc> = Vec::new();
    for arc in &traj.arcs {
        if arc.t_start >= s {
            break;
        }
        if arc.t_end <= s {
            arcs.push(arc.clone());
            continue;
        }
        let mut cut = arc.clone();
        if let Some(step) = arc.dense.iter().find(|st| st.contains(s)) {
            let y = step.eval(s);
            let (x, p, cost) = unpack(&y);
            let x = x.normalized();
            cut.t_end = s;
            cut.end = ExtremalPoint { t: s, x, p, u: arc.u, phi: switching_fn(&x, &p) };
            cut.cost_end = cost;
            cut.samples.retain(|pt| pt.t <= s);
            cut.dense.retain(|st| st.t0 < s);
        }
        arcs.push(cut);
        break;
    }
    let switch_points: Vec<SwitchPoint> =
        traj.switch_points.iter().copied().filter(|sw| sw.t <= s).collect();
    let cost = arcs.last().map_or(0.0, |a| a.cost_end);
    ExtremalTrajectory {
        arcs,
        switch_points,
        direction: traj.direction,
        cost_accumulated: cost,
        truncated: traj.truncated,
        tail_time: 0.0,
        tail_cost: 0.0,
    }
}

/// One reconstructed point of the switching curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurveSample {
    pub x20_seed: f64,
    pub switch_index: usize,
    pub x: StateVector,
    /// Forward-time control transition at this switching, `(from, to)`.
    pub u_from: f64,
    pub u_to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Curve branch leaving the target toward `x2 > 0` (ends near
    /// `(1, 0, 0)`).
    Upper,
    /// Mirror branch toward `x2 < 0` (ends near `(-1, 0, 0)`).
    Lower,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Upper => "upper",
            Branch::Lower => "lower",
        }
    }
}

/// Sampled branch of the switching curve, ordered outward from the target.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchingCurve {
    pub branch: Branch,
    pub delta: f64,
    pub samples: Vec<CurveSample>,
    /// Some samples lie beyond the certified neighborhood of the target.
    pub extrapolated: bool,
}

impl SwitchingCurve {
    /// Least-squares coefficient of `x1 = lambda x2^2` over the `n`
    /// innermost samples.
    pub fn fitted_lambda(&self, n: usize) -> f64 {
        let mut inner: Vec<&CurveSample> = self.samples.iter().collect();
        inner.sort_by(|a, b| a.x.x2.abs().total_cmp(&b.x.x2.abs()));
        let inner = &inner[..n.min(inner.len())];
        let (mut num, mut den) = (0.0, 0.0);
        for s in inner {
            let q = s.x.x2 * s.x.x2;
            num += s.x.x1 * q;
            den += q * q;
        }
        num / den
    }

    /// Minimum distance from the sampled polyline to a point.
    pub fn polyline_distance(&self, point: &StateVector) -> f64 {
        let mut best = f64::INFINITY;
        for pair in self.samples.windows(2) {
            best = best.min(segment_distance(&pair[0].x, &pair[1].x, point));
        }
        for s in &self.samples {
            best = best.min(s.x.distance(point));
        }
        best
    }
}

fn segment_distance(a: &StateVector, b: &StateVector, p: &StateVector) -> f64 {
    let ab = [b.x1 - a.x1, b.x2 - a.x2, b.x3 - a.x3];
    let ap = [p.x1 - a.x1, p.x2 - a.x2, p.x3 - a.x3];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    if len2 == 0.0 {
        return a.distance(p);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    let c = StateVector::new(a.x1 + t * ab[0], a.x2 + t * ab[1], a.x3 + t * ab[2]);
    c.distance(p)
}

/// Tunables of the curve sweep.
#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    pub seeds_per_branch: usize,
    /// Smallest seed of the sweep; the grid spans one full contraction
    /// period upward so the collected switch indices interleave into a
    /// continuous curve.
    pub x20_min: f64,
    pub max_switchings: usize,
    pub max_span: Option<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { seeds_per_branch: 90, x20_min: 1e-4, max_switchings: 16, max_span: None }
    }
}

const DEDUP_CHORD: f64 = 1e-8;

/// Reconstructs both branches of the switching curve by collecting the
/// switching events of backward extremals over a seed sweep.
///
/// Seeds with `x20 < 0` are covered through the mirror symmetry
/// `(x1, x2, u) -> (-x1, -x2, -u)`, which doubles the sample density of
/// each branch. Per-seed integrator failures are reported alongside the
/// curves without aborting the sweep.
pub fn build_switching_curve(
    params: &ModelParams,
    settings: &IntegratorSettings,
    options: &CurveOptions,
) -> Result<([SwitchingCurve; 2], Vec<(f64, String)>)> {
    let alpha = fuller_constants().alpha;
    let n = options.seeds_per_branch.max(4);
    let lo = options.x20_min;
    let hi = lo * alpha * alpha * 1.03;
    let max_span = options.max_span.unwrap_or(80.0 / params.delta);
    let mut local = *settings;
    local.max_switchings = options.max_switchings;

    let seeds: Vec<f64> = (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect();

    let runs: Vec<(f64, Result<ExtremalTrajectory>)> = seeds
        .par_iter()
        .map(|&x20| {
            let run = seed_adjoint(x20, params).and_then(|seed| {
                concatenate_extremal(
                    &seed.x0,
                    &seed.p0,
                    seed.backward_control(),
                    Direction::Backward,
                    StopCondition { max_span, ball: None },
                    &local,
                    params,
                    Recording::ENDPOINTS_ONLY,
                    first_step_hint(x20),
                )
            });
            (x20, run)
        })
        .collect();

    let mut upper: Vec<CurveSample> = Vec::new();
    let mut lower: Vec<CurveSample> = Vec::new();
    let mut failures = Vec::new();
    for (x20, run) in runs {
        let traj = match run {
            Ok(t) => t,
            Err(e) => {
                failures.push((x20, e.to_string()));
                continue;
            }
        };
        for (k, sw) in traj.switch_points.iter().enumerate() {
            // Forward-time transition is the reverse of the backward one.
            let (u_from, u_to) = (sw.u_after, sw.u_before);
            for (sample_x, seed, from, to) in [
                (sw.x, x20, u_from, u_to),
                (sw.x.mirrored(), -x20, -u_from, -u_to),
            ] {
                let sample = CurveSample {
                    x20_seed: seed,
                    switch_index: k + 1,
                    x: sample_x,
                    u_from: from,
                    u_to: to,
                };
                match classify_branch(&sample_x) {
                    Branch::Upper => upper.push(sample),
                    Branch::Lower => lower.push(sample),
                }
            }
        }
    }

    let finish = |mut samples: Vec<CurveSample>, branch: Branch| -> SwitchingCurve {
        // Order outward from the target and drop near-coincident repeats.
        samples.sort_by(|a, b| a.x.x3.total_cmp(&b.x.x3).reverse());
        samples.dedup_by(|a, b| a.x.distance(&b.x) < DEDUP_CHORD);
        let extrapolated =
            samples.iter().any(|s| s.x.distance(&TARGET) > VALIDATED_RADIUS);
        SwitchingCurve { branch, delta: params.delta, samples, extrapolated }
    };
    Ok((
        [finish(upper, Branch::Upper), finish(lower, Branch::Lower)],
        failures,
    ))
}

fn classify_branch(x: &StateVector) -> Branch {
    if x.x2.abs() > 1e-3 {
        if x.x2 > 0.0 {
            Branch::Upper
        } else {
            Branch::Lower
        }
    } else if x.x1 >= 0.0 {
        Branch::Upper
    } else {
        Branch::Lower
    }
}

/// Outcome of the switching-time asymptotics check.
#[derive(Debug, Clone, Serialize)]
pub struct ChatteringReport {
    /// Consecutive ratios `(T - t_{k+1}) / (T - t_k)`, nearest the
    /// accumulation first.
    pub ratios: Vec<f64>,
    /// Mean of the three ratios nearest the accumulation.
    pub limit_estimate: f64,
    /// Expected limit `1 / alpha`.
    pub expected: f64,
    pub conclusive: bool,
    pub passed: bool,
}

/// Checks the geometric accumulation of switching times against `1/alpha`
/// from the time-to-accumulation distances of the switch events (nearest
/// the target first).
pub fn chattering_report_from_distances(distances: &[f64]) -> ChatteringReport {
    let expected = 1.0 / fuller_constants().alpha;
    let mut d: Vec<f64> = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
    let conclusive = d.len() >= 6;
    let innermost: Vec<f64> = ratios.iter().take(3).copied().collect();
    let limit_estimate = if innermost.is_empty() {
        f64::NAN
    } else {
        innermost.iter().sum::<f64>() / innermost.len() as f64
    };
    let passed = conclusive
        && innermost.len() == 3
        && innermost.iter().all(|r| (r - expected).abs() <= 0.05 * expected);
    ChatteringReport { ratios, limit_estimate, expected, conclusive, passed }
}

/// Asymptotics check for a trajectory; the accumulation instant is the
/// trajectory end plus its analytic tail.
pub fn verify_chattering_asymptotics(traj: &ExtremalTrajectory) -> ChatteringReport {
    let distances: Vec<f64> = match traj.direction {
        // Backward parameter measures time before the seed; the
        // accumulation sits `tail_time` past the seed.
        Direction::Backward => {
            traj.switch_times().iter().map(|s| s + traj.tail_time).collect()
        }
        Direction::Forward => {
            let t_acc = traj.span() + traj.tail_time;
            traj.switch_times().iter().map(|t| t_acc - t).collect()
        }
    };
    chattering_report_from_distances(&distances)
}
