//! Serialization of computed objects into the published CSV and JSON
//! formats. Floats are written with the shortest round-trip representation,
//! so repeated runs produce byte-identical files.

use crate::direct::{ComparisonRow, DirectProblem, DirectSolution};
use crate::extremal::{Direction, ExtremalPoint, ExtremalTrajectory};
use crate::fuller::{FullerConstants, FullerTrajectory};
use crate::synthesis::{ShootingResult, SwitchingCurve};
use serde::Serialize;
use std::fmt::Write as _;

/// Trajectory table, one row per retained sample plus one per switching
/// event. Rows are emitted in ascending physical time; backward-integrated
/// trajectories are reversed, with `t = 0` at the far end of the backward
/// sweep (the prescribed initial state) and the seed at the final time.
pub fn trajectory_csv(traj: &ExtremalTrajectory) -> String {
    let mut out = String::from("t,x1,x2,x3,p1,p2,p3,u,phi,event\n");
    let mut rows: Vec<(f64, ExtremalPoint, bool)> = Vec::new();
    let span = traj.span();
    let event_times: Vec<f64> = traj.switch_times();
    let is_event = |t: f64| event_times.iter().any(|&e| e == t);

    for (i, arc) in traj.arcs.iter().enumerate() {
        if i == 0 {
            rows.push((arc.t_start, arc.start, false));
        }
        for s in &arc.samples {
            rows.push((s.t, *s, false));
        }
        rows.push((arc.t_end, arc.end, is_event(arc.t_end)));
    }
    match traj.direction {
        Direction::Forward => {}
        Direction::Backward => {
            for row in rows.iter_mut() {
                row.0 = span - row.0;
            }
            rows.reverse();
        }
    }
    for (t, p, event) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            t,
            p.x.x1,
            p.x.x2,
            p.x.x3,
            p.p.p1,
            p.p.p2,
            p.p.p3,
            p.u,
            p.phi,
            u8::from(event)
        )
        .unwrap();
    }
    out
}

/// Phase-plane table of an analytic trajectory, sampled uniformly inside
/// each arc with exact switch rows at arc boundaries.
pub fn fuller_csv(traj: &FullerTrajectory, samples_per_arc: usize) -> String {
    let mut out = String::from("t,x,y,u\n");
    let n = samples_per_arc.max(2);
    for arc in &traj.arcs {
        for k in 0..n {
            let t = arc.t_start + arc.duration() * k as f64 / n as f64;
            let s = arc.state_at(t);
            writeln!(out, "{},{},{},{}", t, s.x, s.y, arc.u).unwrap();
        }
    }
    if let Some(last) = traj.arcs.last() {
        let s = last.end_state();
        writeln!(out, "{},{},{},{}", last.t_end, s.x, s.y, last.u).unwrap();
    }
    out
}

/// Switching-curve table over any number of branches.
pub fn curve_csv(curves: &[&SwitchingCurve]) -> String {
    let mut out = String::from("branch,x20_seed,switch_index,x1,x2,x3\n");
    for curve in curves {
        for s in &curve.samples {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                curve.branch.label(),
                s.x20_seed,
                s.switch_index,
                s.x.x1,
                s.x.x2,
                s.x.x3
            )
            .unwrap();
        }
    }
    out
}

/// JSON summary of a shooting solve.
#[derive(Debug, Clone, Serialize)]
pub struct ShootingSummary {
    pub x20_star: f64,
    pub tau: f64,
    pub t_f: f64,
    pub terminal_miss: f64,
    pub cost: f64,
    pub n_switchings: usize,
}

impl From<&ShootingResult> for ShootingSummary {
    fn from(r: &ShootingResult) -> Self {
        Self {
            x20_star: r.x20_star,
            tau: r.tau,
            t_f: r.t_f,
            terminal_miss: r.terminal_miss,
            cost: r.cost,
            n_switchings: r.n_switchings,
        }
    }
}

pub fn shooting_json(result: &ShootingResult) -> String {
    let mut s = serde_json::to_string_pretty(&ShootingSummary::from(result)).unwrap();
    s.push('\n');
    s
}

/// JSON sidecar with the synthesis constants.
pub fn constants_json(constants: &FullerConstants) -> String {
    let mut s = serde_json::to_string_pretty(constants).unwrap();
    s.push('\n');
    s
}

/// Study table of the discretization sweep.
pub fn study_csv(rows: &[(usize, f64, &DirectSolution)]) -> String {
    let mut out = String::from("N,mu,cost,terminal_distance,iterations,converged\n");
    for (n, mu, sol) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            n, mu, sol.cost_running, sol.terminal_distance, sol.iterations, sol.converged
        )
        .unwrap();
    }
    out
}

/// Comparison table against the extremal-synthesis reference, one row per
/// discretization.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("N,mu,cost,terminal_distance,cost_gap,reference_cost\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n, r.mu, r.cost, r.terminal_distance, r.cost_gap, r.reference_cost
        )
        .unwrap();
    }
    out
}

/// Per-run control table.
pub fn control_csv(problem: &DirectProblem, controls: &[f64]) -> String {
    let mut out = String::from("k,t_k,u_k\n");
    let dt = problem.dt();
    for (k, u) in controls.iter().enumerate() {
        writeln!(out, "{},{},{}", k, k as f64 * dt, u).unwrap();
    }
    out
}
