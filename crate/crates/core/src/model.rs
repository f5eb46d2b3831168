//! Reduced three-level model: state/costate types, controlled vector field,
//! Pontryagin Hamiltonian, and the switching function with its closed-form
//! time derivatives.
//!
//! The controlled dynamics on the unit sphere are
//!
//! ```text
//! x1' = -delta * x2
//! x2' =  delta * x1 - u * x3
//! x3' =  u * x2
//! ```
//!
//! i.e. `X' = (delta*O3 + u*O1) X` with `O1`, `O3` the skew generators of
//! rotations about the `x1`- and `x3`-axes. The normal costate flow (cost
//! multiplier `-1/2` on the running cost `x1^2`) is
//!
//! ```text
//! p1' = -delta * p2 + x1
//! p2' =  delta * p1 - u * p3
//! p3' =  u * p2
//! ```

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sphere-constraint tolerance used by validation helpers.
pub const NORM_TOL: f64 = 1e-10;

/// Cost multiplier of normal extremals. Abnormal extremals (multiplier 0)
/// never reach the target optimally and are not implemented.
pub const NORMAL_COST_MULTIPLIER: f64 = -0.5;

/// Physical parameters of the reduced model.
///
/// Time is rescaled so that the control bound is 1; `delta` is then the
/// single dimensionless coupling constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Constant coupling (half Rabi frequency of the fixed pulse).
    pub delta: f64,
    /// Control amplitude bound; 1 after time rescaling.
    pub u_max: f64,
}

impl ModelParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "coupling constant must be positive and finite, got {delta}"
            )));
        }
        Ok(Self { delta, u_max: 1.0 })
    }
}

/// Point on (or near) the unit sphere: the reduced quantum state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

/// The target state `(0, 0, 1)`.
pub const TARGET: StateVector = StateVector { x1: 0.0, x2: 0.0, x3: 1.0 };

impl StateVector {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2 + self.x3 * other.x3
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d = [
            self.x1 - other.x1,
            self.x2 - other.x2,
            self.x3 - other.x3,
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Rescaled copy sitting exactly on the unit sphere.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.x1 / n, self.x2 / n, self.x3 / n)
    }

    /// Absolute deviation of the squared norm from 1.
    pub fn sphere_defect(&self) -> f64 {
        (self.dot(self) - 1.0).abs()
    }

    pub fn is_on_sphere(&self, tol: f64) -> bool {
        self.sphere_defect() <= tol
    }

    /// Image under the reflection `(x1, x2, x3) -> (-x1, -x2, x3)`, which
    /// maps extremals with control `u` to extremals with control `-u`.
    pub fn mirrored(&self) -> Self {
        Self::new(-self.x1, -self.x2, self.x3)
    }
}

/// Costate of the maximum principle.
///
/// Only its component orthogonal to the state is geometrically meaningful;
/// [`AdjointVector::reduced`] returns that projection. The raw flow is
/// simpler to integrate, so the gauge component is carried along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointVector {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl AdjointVector {
    pub const fn new(p1: f64, p2: f64, p3: f64) -> Self {
        Self { p1, p2, p3 }
    }

    pub const ZERO: AdjointVector = AdjointVector { p1: 0.0, p2: 0.0, p3: 0.0 };

    pub fn to_array(self) -> [f64; 3] {
        [self.p1, self.p2, self.p3]
    }

    pub fn norm(&self) -> f64 {
        (self.p1 * self.p1 + self.p2 * self.p2 + self.p3 * self.p3).sqrt()
    }

    pub fn dot_state(&self, x: &StateVector) -> f64 {
        self.p1 * x.x1 + self.p2 * x.x2 + self.p3 * x.x3
    }

    /// Gauge-fixed costate `P - (P.X) X`, tangent to the sphere at `x`.
    pub fn reduced(&self, x: &StateVector) -> AdjointVector {
        let g = self.dot_state(x);
        AdjointVector::new(self.p1 - g * x.x1, self.p2 - g * x.x2, self.p3 - g * x.x3)
    }

    pub fn mirrored(&self) -> Self {
        Self::new(-self.p1, -self.p2, self.p3)
    }
}

/// Admissible control value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control(f64);

impl Control {
    pub const PLUS: Control = Control(1.0);
    pub const MINUS: Control = Control(-1.0);

    pub fn new(u: f64, params: &ModelParams) -> Result<Self> {
        if !u.is_finite() || u.abs() > params.u_max {
            return Err(Error::InvalidInput(format!(
                "control {u} outside [-{0}, {0}]",
                params.u_max
            )));
        }
        Ok(Self(u))
    }

    pub fn clamped(u: f64, params: &ModelParams) -> Self {
        Self(u.clamp(-params.u_max, params.u_max))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Velocity of the controlled state flow.
pub fn dynamics_rhs(x: &StateVector, u: f64, params: &ModelParams) -> [f64; 3] {
    let d = params.delta;
    [-d * x.x2, d * x.x1 - u * x.x3, u * x.x2]
}

/// Velocity of the normal costate flow (cost multiplier `-1/2`).
pub fn adjoint_rhs(x: &StateVector, p: &AdjointVector, u: f64, params: &ModelParams) -> [f64; 3] {
    let d = params.delta;
    [-d * p.p2 + x.x1, d * p.p1 - u * p.p3, u * p.p2]
}

/// Pontryagin Hamiltonian `P.(delta*O3 + u*O1)X + p0 * x1^2`.
///
/// Along extremals of the free-final-time problem its value is zero; with
/// constant control it is a first integral of the combined flow.
pub fn pontryagin_hamiltonian(
    x: &StateVector,
    p: &AdjointVector,
    u: f64,
    params: &ModelParams,
    p0: f64,
) -> f64 {
    params.delta * (p.p2 * x.x1 - p.p1 * x.x2) + u * switching_fn(x, p) + p0 * x.x1 * x.x1
}

/// Switching function `Phi = P.O1 X = p3 x2 - p2 x3`.
///
/// Its sign selects the bang control `u = sign(Phi)`; its zeros are the
/// switching instants.
pub fn switching_fn(x: &StateVector, p: &AdjointVector) -> f64 {
    p.p3 * x.x2 - p.p2 * x.x3
}

/// The switching function and its first four time derivatives along the
/// combined flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingDerivatives {
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
    pub d3phi: f64,
    pub d4phi: f64,
}

/// Closed-form time derivatives of the switching function.
///
/// The third and fourth derivatives assume the control is constant with
/// `u^2 = 1` (a bang arc); the lower orders hold for any constant control.
/// At the target with vanishing reduced costate the first four derivatives
/// vanish and the fourth equals `-u * delta^2`, which is what forces the
/// chattering accumulation.
pub fn switching_derivatives(
    x: &StateVector,
    p: &AdjointVector,
    u: f64,
    params: &ModelParams,
) -> SwitchingDerivatives {
    let d = params.delta;
    let phi = switching_fn(x, p);
    let dphi = d * (x.x1 * p.p3 - x.x3 * p.p1);
    let d2phi = -d * d * phi + d * u * (x.x1 * p.p2 - x.x2 * p.p1) - d * x.x1 * x.x3;
    let d3phi = -(d * d + 1.0) * dphi - 2.0 * d * u * x.x1 * x.x2 + d * d * x.x2 * x.x3;
    let d4phi = -(d * d + 1.0) * d2phi
        + d * (d * d + 2.0) * x.x1 * x.x3
        + d * d * u * (3.0 * x.x2 * x.x2 - 2.0 * x.x1 * x.x1 - x.x3 * x.x3);
    SwitchingDerivatives { phi, dphi, d2phi, d3phi, d4phi }
}

/// Six real coordinates of the full three-level wavefunction.
///
/// Layout: the complex amplitudes are `c1 = x1 + i x4`, `c2 = x5 - i x2`,
/// `c3 = x3 + i x6`, so the first three slots carry the reduced state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullQuantumState(pub [f64; 6]);

impl FullQuantumState {
    /// Embeds a reduced state with `x4 = x5 = x6 = 0`.
    pub fn embed(x: &StateVector) -> Self {
        Self([x.x1, x.x2, x.x3, 0.0, 0.0, 0.0])
    }

    /// Projection onto the reduced coordinates.
    pub fn project(&self) -> StateVector {
        StateVector::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Velocity of the full six-dimensional model.
///
/// Derived from the Schroedinger equation with the resonant two-pulse
/// Hamiltonian and the coordinate layout of [`FullQuantumState`]; the phase
/// of the second pulse is chosen so that the `(x1, x2, x3)` block coincides
/// exactly with [`dynamics_rhs`]. With that convention the real and
/// imaginary blocks satisfy the *same* three equations and are decoupled
/// from each other:
///
/// ```text
/// x4' = -delta * x5,   x5' = delta * x4 - u * x6,   x6' = u * x5
/// ```
pub fn full_schrodinger_rhs(psi: &FullQuantumState, u: f64, params: &ModelParams) -> [f64; 6] {
    let d = params.delta;
    let [x1, x2, x3, x4, x5, x6] = psi.0;
    [
        -d * x2,
        d * x1 - u * x3,
        u * x2,
        -d * x5,
        d * x4 - u * x6,
        u * x5,
    ]
}
