//! Static-equilibrium stability assessment.
//!
//! Every engaged stud carries one scalar axial force `f_s` (positive in
//! compression, pushing the upper body up; negative in tension through
//! the stud clutch). A structure stands if forces exist that balance
//! gravity and moments for every brick while tension stays within the
//! clutch capacity. We minimize a tension-scale variable `t` with
//! `-t * t_max <= f_s <= c_max` and call the structure stable when the
//! program is feasible with `t <= 1`.

use crate::grid::{ContactRef, Structure};
use crate::simplex::{solve, Lp, LpOutcome, Rel};

/// Slack applied to the `t <= 1` verdict so borderline optima (e.g. an
/// exact clutch-capacity balance) do not flip on float rounding.
pub const T_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StabilityParams {
    /// Weight of a nominal 2x2 brick; a brick weighs
    /// `brick_weight * footprint_area / 4`.
    pub brick_weight: f64,
    /// Tension capacity of a single stud clutch at `t = 1`.
    pub t_max: f64,
    /// Compression capacity of a single stud.
    pub c_max: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams { brick_weight: 1.0, t_max: 4.0, c_max: 1000.0 }
    }
}

/// One force variable: a single stud cell on one contact interface.
#[derive(Debug, Clone, PartialEq)]
pub struct StudForce {
    pub lower: ContactRef,
    pub upper: usize,
    pub cell: (i32, i32),
    pub interface_z: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Vertical force balance for one brick.
    Force,
    /// Torque balance in the x-z plane (levers are stud-center x).
    MomentX,
    /// Torque balance in the y-z plane (levers are stud-center y).
    MomentY,
}

/// The equality system `A f = b` for a structure: three rows per brick.
#[derive(Debug, Clone)]
pub struct EquilibriumSystem {
    pub studs: Vec<StudForce>,
    /// `(brick, kind, coefficients, rhs)`, coefficients aligned to `studs`.
    pub rows: Vec<(usize, RowKind, Vec<f64>, f64)>,
}

/// Build the equality rows. Moments are taken about each brick's
/// footprint centroid, so gravity contributes only to the force row.
pub fn equilibrium_system(s: &Structure, params: &StabilityParams) -> EquilibriumSystem {
    let mut studs = Vec::new();
    for c in s.contacts() {
        for &cell in &c.stud_cells {
            studs.push(StudForce {
                lower: c.lower,
                upper: c.upper,
                cell,
                interface_z: c.interface_z,
            });
        }
    }

    let mut rows = Vec::with_capacity(3 * s.len());
    for (i, brick) in s.bricks().iter().enumerate() {
        let (w, d) = s.footprint(brick);
        let weight = params.brick_weight * (w * d) as f64 / 4.0;
        let cx = brick.pos[0] as f64 + w as f64 / 2.0;
        let cy = brick.pos[1] as f64 + d as f64 / 2.0;

        let mut force = vec![0.0; studs.len()];
        let mut mom_x = vec![0.0; studs.len()];
        let mut mom_y = vec![0.0; studs.len()];
        for (sidx, stud) in studs.iter().enumerate() {
            // +1 when the stud pushes brick i up, -1 for the reaction on
            // the brick below.
            let a = if stud.upper == i {
                1.0
            } else if stud.lower == ContactRef::Brick(i) {
                -1.0
            } else {
                continue;
            };
            force[sidx] = a;
            mom_x[sidx] = a * (stud.cell.0 as f64 + 0.5 - cx);
            mom_y[sidx] = a * (stud.cell.1 as f64 + 0.5 - cy);
        }
        rows.push((i, RowKind::Force, force, weight));
        rows.push((i, RowKind::MomentX, mom_x, 0.0));
        rows.push((i, RowKind::MomentY, mom_y, 0.0));
    }
    EquilibriumSystem { studs, rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Minimized tension fraction of clutch capacity; `None` when no
    /// force balance exists at any tension level.
    pub utilization: Option<f64>,
    /// Per-stud forces at the optimum, aligned with
    /// [`equilibrium_system`]'s stud order.
    pub forces: Option<Vec<f64>>,
}

/// Decide stability of the whole structure under the given parameters.
pub fn assess_stability(s: &Structure, params: &StabilityParams) -> StabilityReport {
    let sys = equilibrium_system(s, params);
    let n_studs = sys.studs.len();

    // Standard form: g_s = f_s + t_max * t >= 0, plus t >= 0.
    let mut lp = Lp::new(n_studs + 1);
    lp.c[n_studs] = 1.0;
    for (_, _, coeffs, rhs) in &sys.rows {
        let mut row = coeffs.clone();
        let coeff_sum: f64 = coeffs.iter().sum();
        row.push(-params.t_max * coeff_sum);
        lp.constrain(row, Rel::Eq, *rhs);
    }
    for sidx in 0..n_studs {
        let mut row = vec![0.0; n_studs + 1];
        row[sidx] = 1.0;
        row[n_studs] = -params.t_max;
        lp.constrain(row, Rel::Le, params.c_max);
    }

    match solve(&lp) {
        LpOutcome::Optimal { x, .. } => {
            let t = x[n_studs];
            let forces = x[..n_studs].iter().map(|g| g - params.t_max * t).collect();
            StabilityReport {
                stable: t <= 1.0 + T_TOLERANCE,
                utilization: Some(t),
                forces: Some(forces),
            }
        }
        LpOutcome::Infeasible => {
            StabilityReport { stable: false, utilization: None, forces: None }
        }
        LpOutcome::Unbounded => unreachable!("t is bounded below by zero"),
    }
}
