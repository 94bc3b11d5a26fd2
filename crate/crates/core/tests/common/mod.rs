//! Shared fixtures and independent oracles for the integration suites.
//!
//! Everything here is deliberately written along a different route than
//! the library code it checks: stability is re-decided with exact
//! rational arithmetic instead of the float simplex, plan existence with
//! a brute-force search over placement orders instead of the memoized
//! disassembly DFS, and registration accuracy against closed-form truth
//! warps rather than the estimator's own report.

#![allow(dead_code)] // each test binary pulls in a different subset

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use brickplan::grid::{Brick, BrickType, Structure, Workspace, BASEPLATE};
use brickplan::grounding::{mask_to_gray, AffineTransform};
use brickplan::img::{GrayImage, Mask};
use brickplan::planner::{
    check_connectivity, check_observability, check_operability, plan_assembly, Plan, PlanStep,
    PlannerConfig,
};
use brickplan::render::{default_workspace_camera, extract_masks, render_scene, Camera};
use brickplan::stability::{assess_stability, equilibrium_system, StabilityParams};
use brickplan::TaskEncoding;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

// ---------------------------------------------------------------------------
// Design corpus
// ---------------------------------------------------------------------------

pub struct CorpusEntry {
    pub name: &'static str,
    pub structure: Structure,
    /// Whether an assembly order exists under [`corpus_config`].
    pub expect_plan: bool,
}

/// Skill library used for all corpus planning: the stock three plus wider
/// x/y reaches and a diagonal, all at zero rotation.
pub fn corpus_skills() -> Vec<TaskEncoding> {
    vec![
        TaskEncoding::new(0, 0, 1, 0),
        TaskEncoding::new(1, 0, 1, 0),
        TaskEncoding::new(0, 1, 1, 0),
        TaskEncoding::new(2, 0, 1, 0),
        TaskEncoding::new(0, 2, 1, 0),
        TaskEncoding::new(1, 1, 1, 0),
    ]
}

pub fn corpus_config(ws: &Workspace) -> PlannerConfig {
    let mut cfg = PlannerConfig::for_workspace(ws);
    cfg.skills = corpus_skills();
    cfg
}

fn assemble(
    name: &'static str,
    ws: (i32, i32, i32),
    types: &[(&'static str, u32, u32)],
    bricks: &[(&'static str, [i32; 3])],
    expect_plan: bool,
) -> CorpusEntry {
    let type_list: Vec<BrickType> =
        types.iter().map(|&(id, w, d)| BrickType::new(id, w, d)).collect();
    let mut s = Structure::new(Workspace::new(ws.0, ws.1, ws.2), type_list)
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    for &(ty, pos) in bricks {
        let idx = s.type_index(ty).unwrap_or_else(|| panic!("{name}: unknown type {ty}"));
        s.add_brick(Brick::new(idx, pos, 0)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    CorpusEntry { name, structure: s, expect_plan }
}

/// The frozen staircase fixture: `len` 2x4 bricks, each one stud over and
/// one layer up from the previous, in a 14 x 6 x 10 workspace.
pub fn staircase(len: i32) -> Structure {
    staircase_at(len, 0)
}

pub fn staircase_at(len: i32, y: i32) -> Structure {
    let mut s = Structure::new(Workspace::new(14, 6, 10), vec![BrickType::new("2x4", 4, 2)])
        .expect("staircase workspace");
    for m in 0..len {
        s.add_brick(Brick::new(0, [m, y, m], 0)).expect("staircase brick");
    }
    s
}

/// Thirty-one designs of 3 to 8 bricks. Geometry respects the gripper
/// ring: same-layer footprints keep at least one empty stud column
/// between them, so removal order (top down) never traps a brick. The
/// four exceptions at the end are deliberately unbuildable, each for a
/// different reason.
pub fn corpus() -> Vec<CorpusEntry> {
    let t24 = ("2x4", 4, 2);
    let t22 = ("2x2", 2, 2);
    let t21 = ("2x1", 2, 1);
    let t11 = ("1x1", 1, 1);
    let t31 = ("3x1", 3, 1);

    let mut out = Vec::new();

    // -- the four named builds, step counts 5 < 6 < 7 < 8 --------------

    out.push(CorpusEntry { name: "stairs", structure: staircase(5), expect_plan: true });

    // Tapering footprints stacked concentrically: 4-wide, 2-wide, 1-deep.
    out.push(assemble(
        "pyramid",
        (10, 8, 9),
        &[t24, t22, t21],
        &[
            ("2x4", [2, 2, 0]),
            ("2x4", [2, 2, 1]),
            ("2x2", [3, 2, 2]),
            ("2x2", [3, 2, 3]),
            ("2x1", [3, 2, 4]),
            ("2x1", [3, 2, 5]),
        ],
        true,
    ));

    // Two wall towers, a roof beam bridging the doorway, ridge, chimney.
    out.push(assemble(
        "house",
        (10, 8, 8),
        &[t24, t22],
        &[
            ("2x2", [2, 2, 0]),
            ("2x2", [2, 2, 1]),
            ("2x2", [6, 2, 0]),
            ("2x2", [6, 2, 1]),
            ("2x4", [3, 2, 2]),
            ("2x2", [4, 2, 3]),
            ("2x2", [4, 2, 4]),
        ],
        true,
    ));

    // Four corner towers, two bricks tall.
    out.push(assemble(
        "castle",
        (10, 10, 5),
        &[t22],
        &[
            ("2x2", [1, 1, 0]),
            ("2x2", [1, 1, 1]),
            ("2x2", [7, 1, 0]),
            ("2x2", [7, 1, 1]),
            ("2x2", [1, 7, 0]),
            ("2x2", [1, 7, 1]),
            ("2x2", [7, 7, 0]),
            ("2x2", [7, 7, 1]),
        ],
        true,
    ));

    // -- parametric families -------------------------------------------

    out.push(CorpusEntry { name: "staircase-3", structure: staircase_at(3, 2), expect_plan: true });
    out.push(CorpusEntry { name: "staircase-4", structure: staircase_at(4, 3), expect_plan: true });

    for h in 3..=8 {
        let name: &'static str = match h {
            3 => "tower-3",
            4 => "tower-4",
            5 => "tower-5",
            6 => "tower-6",
            7 => "tower-7",
            _ => "tower-8",
        };
        let bricks: Vec<(&'static str, [i32; 3])> =
            (0..h).map(|z| ("2x2", [4, 4, z])).collect();
        out.push(assemble(name, (10, 10, h + 2), &[t22], &bricks, true));
    }

    for n in 3..=6 {
        let name: &'static str = match n {
            3 => "row-3",
            4 => "row-4",
            5 => "row-5",
            _ => "row-6",
        };
        let bricks: Vec<(&'static str, [i32; 3])> =
            (0..n).map(|k| ("2x2", [2 + 3 * k, 2, 0])).collect();
        out.push(assemble(name, (3 * n + 3, 7, 4), &[t22], &bricks, true));
    }

    for h in 3..=5 {
        let name: &'static str = match h {
            3 => "slab-3",
            4 => "slab-4",
            _ => "slab-5",
        };
        let bricks: Vec<(&'static str, [i32; 3])> =
            (0..h).map(|z| ("2x4", [3, 2, z])).collect();
        out.push(assemble(name, (11, 7, h + 2), &[t24], &bricks, true));
    }

    for h in 4..=5 {
        let name: &'static str = if h == 4 { "obelisk-4" } else { "obelisk-5" };
        let mut bricks: Vec<(&'static str, [i32; 3])> = vec![("2x4", [2, 2, 0])];
        bricks.extend((1..h).map(|z| ("2x2", [3, 2, z])));
        out.push(assemble(name, (10, 8, h + 2), &[t24, t22], &bricks, true));
    }

    // -- small compositions --------------------------------------------

    out.push(assemble(
        "bench",
        (10, 7, 4),
        &[t24, t22],
        &[("2x2", [2, 2, 0]), ("2x2", [5, 2, 0]), ("2x4", [2, 2, 1])],
        true,
    ));

    out.push(assemble(
        "bridge-4",
        (10, 7, 5),
        &[t24, t22],
        &[("2x2", [1, 2, 0]), ("2x2", [4, 2, 0]), ("2x4", [1, 2, 1]), ("2x2", [2, 2, 2])],
        true,
    ));

    out.push(assemble(
        "gate",
        (10, 7, 7),
        &[t24, t22],
        &[
            ("2x2", [1, 2, 0]),
            ("2x2", [1, 2, 1]),
            ("2x2", [5, 2, 0]),
            ("2x2", [5, 2, 1]),
            ("2x4", [2, 2, 2]),
            ("2x2", [3, 2, 3]),
            ("2x2", [3, 2, 4]),
        ],
        true,
    ));

    // A 2x4 cap carried entirely by a 2x2 post, centroid one stud past
    // the support: stands through clutch tension (utilization 1/8 at the
    // default capacity).
    out.push(assemble(
        "offset-cap",
        (10, 10, 4),
        &[t24, t22],
        &[("2x2", [4, 4, 0]), ("2x4", [4, 4, 1]), ("2x2", [0, 0, 0])],
        true,
    ));

    out.push(assemble(
        "plus",
        (10, 10, 4),
        &[t22],
        &[
            ("2x2", [4, 4, 0]),
            ("2x2", [4, 1, 0]),
            ("2x2", [4, 7, 0]),
            ("2x2", [1, 4, 0]),
            ("2x2", [7, 4, 0]),
        ],
        true,
    ));

    out.push(assemble(
        "ell",
        (10, 10, 4),
        &[t22],
        &[
            ("2x2", [1, 1, 0]),
            ("2x2", [4, 1, 0]),
            ("2x2", [7, 1, 0]),
            ("2x2", [1, 4, 0]),
            ("2x2", [1, 7, 0]),
            ("2x2", [4, 4, 0]),
        ],
        true,
    ));

    // -- deliberately unbuildable --------------------------------------

    // Stable (utilization 0.25) but the cap sits two studs in -x from its
    // only support, and no skill reaches backwards.
    out.push(assemble(
        "ledge",
        (10, 8, 4),
        &[t24, t22],
        &[("2x2", [3, 2, 0]), ("2x4", [1, 2, 1]), ("2x2", [7, 5, 0])],
        false,
    ));

    // Three bricks shoulder to shoulder: every one sits inside a
    // neighbor's gripper ring, so none can ever be placed last.
    out.push(assemble(
        "trench",
        (9, 7, 4),
        &[t22],
        &[("2x2", [1, 2, 0]), ("2x2", [3, 2, 0]), ("2x2", [5, 2, 0])],
        false,
    ));

    // A single corner stud cannot balance the cap's moment: the finished
    // design has no force balance at any tension.
    out.push(assemble(
        "diag-cap",
        (10, 10, 4),
        &[t22],
        &[("2x2", [3, 3, 0]), ("2x2", [4, 4, 1]), ("2x2", [7, 7, 0])],
        false,
    ));

    // All support goes through one stud column under a reaching arm.
    out.push(assemble(
        "cantilever",
        (10, 10, 4),
        &[t11, t31],
        &[("1x1", [2, 2, 0]), ("3x1", [2, 2, 1]), ("1x1", [6, 6, 0])],
        false,
    ));

    out
}

/// Corpus names of the four recognizable builds, ordered by step count.
pub const NAMED_FOUR: [&str; 4] = ["stairs", "pyramid", "house", "castle"];

pub struct PlannedEntry {
    pub entry: CorpusEntry,
    pub plan: Option<Plan>,
}

/// Corpus with each entry planned once, shared across the test binary.
pub fn planned_corpus() -> &'static [PlannedEntry] {
    static CACHE: OnceLock<Vec<PlannedEntry>> = OnceLock::new();
    CACHE.get_or_init(|| {
        corpus()
            .into_iter()
            .map(|entry| {
                let cfg = corpus_config(&entry.structure.workspace);
                let plan = plan_assembly(&entry.structure, &cfg).ok();
                PlannedEntry { entry, plan }
            })
            .collect()
    })
}

pub fn planned_named(name: &str) -> &'static Plan {
    planned_corpus()
        .iter()
        .find(|p| p.entry.name == name)
        .and_then(|p| p.plan.as_ref())
        .unwrap_or_else(|| panic!("corpus entry {name} should have a plan"))
}

/// A hand-built n-brick tower plan (no search involved).
pub fn tower_plan(n: usize) -> Plan {
    let mut design =
        Structure::new(Workspace::new(10, 10, n as i32 + 2), vec![BrickType::new("2x2", 2, 2)])
            .expect("tower workspace");
    let mut steps = Vec::new();
    for z in 0..n {
        let idx = design.add_brick(Brick::new(0, [4, 4, z as i32], 0)).expect("tower brick");
        steps.push(PlanStep {
            ref_index: if z == 0 { BASEPLATE } else { (idx - 1) as i64 },
            tgt_index: idx,
            tau: TaskEncoding::new(0, 0, 1, 0),
        });
    }
    Plan { design, steps }
}

// ---------------------------------------------------------------------------
// Brute-force order oracle
// ---------------------------------------------------------------------------

/// Does any placement order build `design` under `cfg`? Exhaustive
/// forward search over placement sets with dead-set memoization; no
/// shared machinery with the planner's disassembly search.
pub fn order_exists(design: &Structure, cfg: &PlannerConfig) -> bool {
    assert!(design.len() <= 16, "the order oracle is exponential in brick count");
    let full: u32 = if design.is_empty() { 0 } else { (1u32 << design.len()) - 1 };
    let mut cur = Structure::new(design.workspace, design.types().to_vec())
        .expect("types come from a valid design");
    let mut dead: HashSet<u32> = HashSet::new();
    extend_order(design, cfg, &mut cur, 0, full, &mut dead)
}

fn extend_order(
    design: &Structure,
    cfg: &PlannerConfig,
    cur: &mut Structure,
    mask: u32,
    full: u32,
    dead: &mut HashSet<u32>,
) -> bool {
    if mask == full {
        return true;
    }
    if dead.contains(&mask) {
        return false;
    }
    for i in 0..design.len() {
        if mask & (1 << i) != 0 {
            continue;
        }
        let b = *design.brick(i).expect("index in range");
        let idx = cur.add_brick(b).expect("subsets of a valid design never collide");
        let pairs = check_connectivity(cur, idx, &cfg.skills);
        let placeable = pairs
            .iter()
            .any(|&(r, _)| check_observability(cur, idx, r, &cfg.cameras, cfg.per_stud_rays))
            && check_operability(cur, idx, cfg.gripper_padding, cfg.clearance_height)
            && assess_stability(cur, &cfg.stability).stable;
        if placeable && extend_order(design, cfg, cur, mask | (1 << i), full, dead) {
            return true;
        }
        cur.remove_brick(idx).expect("brick was just added");
    }
    dead.insert(mask);
    false
}

// ---------------------------------------------------------------------------
// Exact rational feasibility (Fourier-Motzkin)
// ---------------------------------------------------------------------------

/// Decide, in exact rational arithmetic, whether stud forces exist that
/// balance every brick with `-t_max <= f <= c_max`. This is the same
/// question the simplex answers when it reports utilization <= 1, but
/// solved by Gauss-Jordan elimination of the equalities followed by
/// Fourier-Motzkin elimination of the free variables.
pub fn rational_feasible(s: &Structure, params: &StabilityParams) -> bool {
    let sys = equilibrium_system(s, params);
    let n = sys.studs.len();
    let rat = |x: f64| BigRational::from_float(x).expect("finite coefficient");

    let mut a: Vec<Vec<BigRational>> = Vec::with_capacity(sys.rows.len());
    let mut b: Vec<BigRational> = Vec::with_capacity(sys.rows.len());
    for (_, _, coeffs, rhs) in &sys.rows {
        a.push(coeffs.iter().map(|&v| rat(v)).collect());
        b.push(rat(*rhs));
    }

    let m = a.len();
    let mut pivot_col: Vec<Option<usize>> = vec![None; m];
    let mut col_pivot: Vec<Option<usize>> = vec![None; n];
    for col in 0..n {
        let Some(r) = (0..m).find(|&r| pivot_col[r].is_none() && !a[r][col].is_zero()) else {
            continue;
        };
        let inv = a[r][col].clone();
        for j in 0..n {
            a[r][j] = &a[r][j] / &inv;
        }
        b[r] = &b[r] / &inv;
        for r2 in 0..m {
            if r2 == r || a[r2][col].is_zero() {
                continue;
            }
            let f = a[r2][col].clone();
            for j in 0..n {
                let d = &a[r][j] * &f;
                a[r2][j] = &a[r2][j] - d;
            }
            let d = &b[r] * &f;
            b[r2] = &b[r2] - d;
        }
        pivot_col[r] = Some(col);
        col_pivot[col] = Some(r);
    }

    // Rows left without a pivot were eliminated to all-zero coefficients;
    // a nonzero right side there is an unsatisfiable balance equation.
    for r in 0..m {
        if pivot_col[r].is_none() {
            assert!(a[r].iter().all(Zero::is_zero), "non-pivot row must be eliminated");
            if !b[r].is_zero() {
                return false;
            }
        }
    }

    let free: Vec<usize> = (0..n).filter(|&c| col_pivot[c].is_none()).collect();
    let c_max = rat(params.c_max);
    let t_max = rat(params.t_max);

    // Rewrite the box bounds over the free variables; each row means
    // `sum coeff * y <= bound`.
    let mut ineqs: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for fi in 0..free.len() {
        let mut up = vec![BigRational::zero(); free.len()];
        up[fi] = BigRational::one();
        ineqs.push((up, c_max.clone()));
        let mut lo = vec![BigRational::zero(); free.len()];
        lo[fi] = -BigRational::one();
        ineqs.push((lo, t_max.clone()));
    }
    for c in 0..n {
        let Some(r) = col_pivot[c] else { continue };
        // f_c = b[r] - sum_j a[r][free_j] * y_j, bounded on both sides.
        let row: Vec<BigRational> = free.iter().map(|&j| a[r][j].clone()).collect();
        let neg: Vec<BigRational> = row.iter().map(|v| -v.clone()).collect();
        ineqs.push((neg, &c_max - &b[r]));
        ineqs.push((row, &b[r] + &t_max));
    }

    fourier_motzkin(ineqs)
}

/// Eliminate variables one at a time, always the one with the fewest
/// lower x upper pairings, until only constant rows remain.
fn fourier_motzkin(rows: Vec<(Vec<BigRational>, BigRational)>) -> bool {
    let nvars = rows.first().map_or(0, |r| r.0.len());
    let mut rows = match canonical(rows) {
        None => return false,
        Some(r) => r,
    };
    let mut remaining: Vec<usize> = (0..nvars).collect();
    while !remaining.is_empty() {
        let (pick, col) = remaining
            .iter()
            .enumerate()
            .min_by_key(|&(_, &c)| {
                let lo = rows.iter().filter(|r| r.0[c].is_negative()).count();
                let up = rows.iter().filter(|r| r.0[c].is_positive()).count();
                lo * up
            })
            .map(|(i, &c)| (i, c))
            .expect("remaining is non-empty");
        remaining.swap_remove(pick);

        let mut keep = Vec::new();
        let mut lows = Vec::new();
        let mut ups = Vec::new();
        for r in rows {
            if r.0[col].is_zero() {
                keep.push(r);
            } else if r.0[col].is_positive() {
                ups.push(r);
            } else {
                lows.push(r);
            }
        }
        for l in &lows {
            for u in &ups {
                let ls = -&l.0[col]; // both scales positive
                let us = u.0[col].clone();
                let mut coeffs = Vec::with_capacity(nvars);
                for j in 0..nvars {
                    coeffs.push(&l.0[j] / &ls + &u.0[j] / &us);
                }
                let bound = &l.1 / &ls + &u.1 / &us;
                keep.push((coeffs, bound));
            }
        }
        rows = match canonical(keep) {
            None => return false,
            Some(r) => r,
        };
        assert!(rows.len() <= 50_000, "elimination blow-up: {} rows", rows.len());
    }
    true
}

/// Scale rows to a canonical form, keep only the tightest bound per
/// coefficient vector, and evaluate constant rows. `None` = infeasible.
fn canonical(
    rows: Vec<(Vec<BigRational>, BigRational)>,
) -> Option<Vec<(Vec<BigRational>, BigRational)>> {
    let mut best: HashMap<Vec<BigRational>, BigRational> = HashMap::new();
    for (coeffs, bound) in rows {
        if coeffs.iter().all(Zero::is_zero) {
            if bound.is_negative() {
                return None;
            }
            continue;
        }
        let scale = coeffs
            .iter()
            .map(Signed::abs)
            .filter(|v| !v.is_zero())
            .max()
            .expect("row has a nonzero coefficient");
        let key: Vec<BigRational> = coeffs.iter().map(|v| v / &scale).collect();
        let val = &bound / &scale;
        match best.entry(key) {
            Entry::Occupied(mut e) => {
                if val < *e.get() {
                    e.insert(val);
                }
            }
            Entry::Vacant(e) => {
                e.insert(val);
            }
        }
    }
    Some(best.into_iter().collect())
}

/// Small structures whose force systems stay within twelve variables;
/// used to cross-check the simplex against [`rational_feasible`].
pub fn small_force_instances() -> Vec<(&'static str, Structure)> {
    let ws = || Workspace::new(10, 10, 6);
    let make = |types: Vec<BrickType>| Structure::new(ws(), types).unwrap();
    let t22 = || BrickType::new("2x2", 2, 2);
    let t24 = || BrickType::new("2x4", 4, 2);
    let t11 = || BrickType::new("1x1", 1, 1);
    let t21 = || BrickType::new("2x1", 2, 1);
    let t31 = || BrickType::new("3x1", 3, 1);

    let mut out: Vec<(&'static str, Structure)> = Vec::new();

    out.push(("empty", make(vec![t22()])));

    let mut s = make(vec![t22()]);
    s.add_brick(Brick::new(0, [3, 3, 0], 0)).unwrap();
    out.push(("single-2x2", s));

    let mut s = make(vec![t11()]);
    s.add_brick(Brick::new(0, [0, 0, 0], 0)).unwrap();
    out.push(("single-1x1", s));

    let mut s = make(vec![t11()]);
    for pos in [[1, 1, 0], [1, 1, 1], [5, 5, 0], [5, 5, 1]] {
        s.add_brick(Brick::new(0, pos, 0)).unwrap();
    }
    out.push(("twin-needles", s));

    let mut s = make(vec![t22()]);
    s.add_brick(Brick::new(0, [4, 4, 0], 0)).unwrap();
    s.add_brick(Brick::new(0, [4, 4, 1], 0)).unwrap();
    out.push(("tower-2", s));

    let mut s = make(vec![t22()]);
    for z in 0..3 {
        s.add_brick(Brick::new(0, [4, 4, z], 0)).unwrap();
    }
    out.push(("tower-3", s));

    let mut s = make(vec![t22(), t24()]);
    s.add_brick(Brick::new(0, [4, 4, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [3, 4, 1], 0)).unwrap();
    out.push(("cap-centered", s));

    let mut s = make(vec![t22(), t24()]);
    s.add_brick(Brick::new(0, [4, 4, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [4, 4, 1], 0)).unwrap();
    out.push(("cap-offset", s));

    let mut s = make(vec![t22(), t24()]);
    s.add_brick(Brick::new(0, [3, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [1, 2, 1], 0)).unwrap();
    out.push(("ledge-cap", s));

    let mut s = make(vec![t11(), t31()]);
    s.add_brick(Brick::new(0, [1, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(0, [3, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [1, 2, 1], 0)).unwrap();
    out.push(("pier-bridge", s));

    // A beam balanced on the single stud under its centroid.
    let mut s = make(vec![t11(), t31()]);
    s.add_brick(Brick::new(0, [3, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [2, 2, 1], 0)).unwrap();
    out.push(("needle-balance", s));

    let mut s = make(vec![t11(), t31()]);
    s.add_brick(Brick::new(0, [2, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [2, 2, 1], 0)).unwrap();
    out.push(("cantilever-3x1", s));

    let mut s = make(vec![t11(), t21()]);
    s.add_brick(Brick::new(0, [2, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(1, [2, 2, 1], 0)).unwrap();
    out.push(("cantilever-2x1", s));

    // Two shared columns, both on the same side of the upper centroid:
    // the moment row is unsatisfiable at any tension.
    let mut s = make(vec![t22()]);
    s.add_brick(Brick::new(0, [2, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(0, [3, 2, 1], 0)).unwrap();
    out.push(("shift-pair", s));

    let mut s = make(vec![t22()]);
    s.add_brick(Brick::new(0, [2, 2, 0], 0)).unwrap();
    s.add_brick(Brick::new(0, [6, 6, 0], 0)).unwrap();
    out.push(("side-pair", s));

    out
}

// ---------------------------------------------------------------------------
// Warp harness
// ---------------------------------------------------------------------------

/// Rotation by `deg` and uniform `scale` about (`cx`, `cy`), then a
/// translation: the ground-truth warps for the registration checks.
pub fn similarity_about(cx: f64, cy: f64, deg: f64, scale: f64, tx: f64, ty: f64) -> AffineTransform {
    let th = deg.to_radians();
    let (sn, cs) = (scale * th.sin(), scale * th.cos());
    AffineTransform::from_params([
        cs,
        -sn,
        cx - (cs * cx - sn * cy) + tx,
        sn,
        cs,
        cy - (sn * cx + cs * cy) + ty,
    ])
}

/// Resample `src` so that `out(h(x)) = src(x)`: inverse-map bilinear
/// warp, zero outside the frame.
pub fn warp_gray(src: &GrayImage, h: &AffineTransform) -> GrayImage {
    let inv = h.invert().expect("truth warps are invertible");
    let mut out = GrayImage::new(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            out.set(x, y, src.sample_bilinear(sx, sy).unwrap_or(0.0));
        }
    }
    out
}

pub fn threshold_mask(g: &GrayImage, thr: f64) -> Mask {
    let mut m = Mask::new(g.w, g.h);
    for (mv, &gv) in m.data.iter_mut().zip(&g.data) {
        *mv = gv > thr;
    }
    m
}

/// Largest displacement between the two warps over the image corners.
pub fn max_corner_error(w: usize, h_px: usize, truth: &AffineTransform, got: &AffineTransform) -> f64 {
    let corners = [
        (0.0, 0.0),
        (w as f64 - 1.0, 0.0),
        (0.0, h_px as f64 - 1.0),
        (w as f64 - 1.0, h_px as f64 - 1.0),
    ];
    corners
        .iter()
        .map(|&(x, y)| {
            let (ax, ay) = truth.apply(x, y);
            let (bx, by) = got.apply(x, y);
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

pub fn sized_camera(ws: &Workspace, side: usize) -> Camera {
    let mut cam = default_workspace_camera(ws);
    cam.width = side;
    cam.height = side;
    cam
}

/// Render the whole structure and return its silhouette as gray + mask.
pub fn structure_gray(s: &Structure, side: usize) -> (GrayImage, Mask) {
    let cam = sized_camera(&s.workspace, side);
    let out = render_scene(s, &cam, None, None).expect("render fixture");
    let m = extract_masks(&out, s.len(), BASEPLATE).expect("baseplate reference").m_str;
    (mask_to_gray(&m), m)
}

/// Layers a gripped brick hovers above its designed pose in the manual.
pub const HOVER_LAYERS: i32 = 2;

pub struct StepScene {
    pub prefix: Structure,
    pub held: Brick,
    pub grip: ([f64; 3], [f64; 3]),
    /// Reference brick's index within `prefix`, or the baseplate sentinel.
    pub ref_prefix: i64,
}

/// Rebuild the scene of plan step `step` (1-based): all earlier bricks
/// placed, the target hovering above its pose with the gripper volume on
/// top of it.
pub fn step_scene(plan: &Plan, step: usize) -> StepScene {
    assert!(step >= 1 && step <= plan.steps.len(), "step out of range");
    let mut prefix = Structure::new(plan.design.workspace, plan.design.types().to_vec())
        .expect("valid design types");
    let mut placed_at: HashMap<usize, usize> = HashMap::new();
    for st in &plan.steps[..step - 1] {
        let brick = *plan.design.brick(st.tgt_index).expect("step target in design");
        let idx = prefix.add_brick(brick).expect("plan prefix placements are valid");
        placed_at.insert(st.tgt_index, idx);
    }
    let st = &plan.steps[step - 1];
    let mut held = *plan.design.brick(st.tgt_index).expect("step target in design");
    held.pos[2] += HOVER_LAYERS;
    let (w, d) = prefix.footprint(&held);
    let top = (held.pos[2] + prefix.brick_type(&held).height as i32) as f64;
    let grip = (
        [held.pos[0] as f64, held.pos[1] as f64, top],
        [(held.pos[0] + w) as f64, (held.pos[1] + d) as f64, top + 1.0],
    );
    let ref_prefix = if st.ref_index == BASEPLATE {
        BASEPLATE
    } else {
        placed_at[&(st.ref_index as usize)] as i64
    };
    StepScene { prefix, held, grip, ref_prefix }
}
