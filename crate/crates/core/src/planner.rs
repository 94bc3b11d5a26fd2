//! Assembly-order search.
//!
//! A design is turned into an ordered build plan by searching the
//! *disassembly* direction: depth-first, remove one brick at a time,
//! where a brick may come off only if the step passes four checks —
//! connectivity (some placed reference yields a known task encoding),
//! observability (reference and target visible to a camera),
//! operability (free lift corridor and gripper ring), and stability of
//! what remains. Reversing a complete removal sequence gives the
//! forward plan. A separate validator replays plans forward against the
//! same criteria without reusing the search bookkeeping.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::grid::{
    apply_encoding_pose, baseplate_ref, relative_encoding, Brick, DesignFile, Structure,
    TaskEncoding, Workspace, BASEPLATE,
};
use crate::render::{default_workspace_camera, Camera};
use crate::stability::{assess_stability, StabilityParams};

/// One placement: put brick `tgt` relative to `ref` (−1 = baseplate)
/// using task encoding `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    #[serde(rename = "ref")]
    pub ref_index: i64,
    #[serde(rename = "tgt")]
    pub tgt_index: usize,
    pub tau: TaskEncoding,
}

/// Ordered build plan; step indices refer to the design's brick list.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub design: Structure,
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    design: DesignFile,
    steps: Vec<PlanStep>,
}

pub fn plan_to_json(plan: &Plan) -> String {
    let file = PlanFile {
        design: DesignFile::from_structure(&plan.design),
        steps: plan.steps.clone(),
    };
    serde_json::to_string_pretty(&file).expect("plan serializes")
}

pub fn plan_from_json(text: &str) -> Result<Plan, crate::Error> {
    let file: PlanFile = serde_json::from_str(text)?;
    Ok(Plan { design: file.design.into_structure()?, steps: file.steps })
}

/// The three stock placement primitives: directly on top, and one stud
/// over in +x or +y.
pub fn default_skills() -> Vec<TaskEncoding> {
    vec![
        TaskEncoding::new(0, 0, 1, 0),
        TaskEncoding::new(1, 0, 1, 0),
        TaskEncoding::new(0, 1, 1, 0),
    ]
}

#[derive(Debug, Serialize, Deserialize)]
struct SkillsFile {
    skills: Vec<TaskEncoding>,
}

pub fn skills_to_json(skills: &[TaskEncoding]) -> String {
    serde_json::to_string_pretty(&SkillsFile { skills: skills.to_vec() })
        .expect("skills serialize")
}

pub fn skills_from_json(text: &str) -> Result<Vec<TaskEncoding>, crate::Error> {
    let file: SkillsFile = serde_json::from_str(text)?;
    Ok(file.skills)
}

/// Search configuration: skill set, camera poses for the visibility
/// check, gripper geometry, stability parameters, and a state budget.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub skills: Vec<TaskEncoding>,
    pub cameras: Vec<Camera>,
    /// Free ring around a gripped brick's footprint, in studs.
    pub gripper_padding: i32,
    /// Free layers required above a gripped brick's top face.
    pub clearance_height: i32,
    pub stability: StabilityParams,
    /// Maximum number of expanded search nodes.
    pub max_states: usize,
    /// Trace one visibility ray per stud instead of one per brick.
    pub per_stud_rays: bool,
}

impl PlannerConfig {
    /// Stock skills and a single oblique camera covering the workspace.
    pub fn for_workspace(ws: &Workspace) -> Self {
        PlannerConfig {
            skills: default_skills(),
            cameras: vec![default_workspace_camera(ws)],
            gripper_padding: 1,
            clearance_height: 2,
            stability: StabilityParams::default(),
            max_states: 1_000_000,
            per_stud_rays: false,
        }
    }

    fn validate(&self) -> Result<(), PlanError> {
        if self.skills.is_empty() {
            return Err(PlanError::BadConfig("skill set is empty"));
        }
        if self.max_states == 0 {
            return Err(PlanError::BadConfig("state budget is zero"));
        }
        Ok(())
    }
}

/// Why a design admits no plan at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignFlaw {
    Overlap,
    Floating,
    Unstable,
}

impl std::fmt::Display for DesignFlaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignFlaw::Overlap => "bricks overlap",
            DesignFlaw::Floating => "a brick is not connected to the baseplate",
            DesignFlaw::Unstable => "the complete design is unstable",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid design: {0}")]
    InvalidDesign(DesignFlaw),
    #[error("no feasible assembly order exists")]
    Infeasible,
    #[error("search budget exhausted after {0} states")]
    BudgetExceeded(usize),
    #[error("bad planner configuration: {0}")]
    BadConfig(&'static str),
}

/// Per-brick removability verdict; valid only when all four hold.
#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaResult {
    pub con: bool,
    pub obs: bool,
    pub op: bool,
    pub stab: bool,
    /// First connective (reference, encoding) pair that is also visible.
    pub chosen: Option<(i64, TaskEncoding)>,
}

impl CriteriaResult {
    pub fn valid(&self) -> bool {
        self.con && self.obs && self.op && self.stab
    }
}

/// All (reference, encoding) pairs explaining `brick_index`'s pose with a
/// skill from `skills`. Baseplate pairing (−1) first, then ascending
/// brick index; a reference qualifies only with real stud contact.
pub fn check_connectivity(
    s: &Structure,
    brick_index: usize,
    skills: &[TaskEncoding],
) -> Vec<(i64, TaskEncoding)> {
    let b = *s.brick(brick_index).expect("brick present in structure");
    let mut out = Vec::new();
    if b.pos[2] == 0 {
        let tau = relative_encoding(&baseplate_ref(&b), &b);
        if skills.contains(&tau) {
            out.push((BASEPLATE, tau));
        }
    }
    for (i, r) in s.bricks().iter().enumerate() {
        if i == brick_index || s.contact_studs(r, &b).is_empty() {
            continue;
        }
        let tau = relative_encoding(r, &b);
        if skills.contains(&tau) {
            out.push((i as i64, tau));
        }
    }
    out
}

/// Voxel walk (3D DDA) from `from` toward `to`; false when an occupied
/// cell not in `skip` lies on the segment.
fn ray_clear(s: &Structure, from: [f64; 3], to: [f64; 3], skip: &[usize]) -> bool {
    let dir = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if len <= 1e-9 {
        return true;
    }
    let d = [dir[0] / len, dir[1] / len, dir[2] / len];
    // Nudge off the starting face so the first cell is unambiguous.
    let p = [from[0] + d[0] * 1e-6, from[1] + d[1] * 1e-6, from[2] + d[2] * 1e-6];
    let mut cell = [
        p[0].floor() as i32,
        p[1].floor() as i32,
        p[2].floor() as i32,
    ];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_step = [f64::INFINITY; 3];
    let mut step = [0i32; 3];
    for a in 0..3 {
        if d[a].abs() > 1e-12 {
            step[a] = if d[a] > 0.0 { 1 } else { -1 };
            let boundary = if d[a] > 0.0 { cell[a] as f64 + 1.0 } else { cell[a] as f64 };
            t_next[a] = (boundary - p[a]) / d[a];
            t_step[a] = 1.0 / d[a].abs();
        }
    }
    let ws = s.workspace;
    let inside = |c: [i32; 3]| {
        c[0] >= 0 && c[0] < ws.width && c[1] >= 0 && c[1] < ws.depth && c[2] >= 0 && c[2] < ws.height
    };
    let mut was_inside = false;
    let mut t = 0.0;
    let guard_max = 4 * (ws.width + ws.depth + ws.height).max(8) as usize + 64;
    let mut guard = 0;
    while t < len {
        guard += 1;
        if guard > guard_max {
            break;
        }
        if inside(cell) {
            was_inside = true;
            if let Some(i) = s.occupant(cell) {
                if !skip.contains(&i) {
                    return false;
                }
            }
        } else if was_inside {
            // The workspace box is convex; an exited ray never returns.
            break;
        }
        let a = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
            0
        } else if t_next[1] <= t_next[2] {
            1
        } else {
            2
        };
        t = t_next[a];
        cell[a] += step[a];
        t_next[a] += t_step[a];
    }
    true
}

/// Ray origins on a brick's top face: its center, or every stud center.
fn top_face_points(s: &Structure, idx: usize, per_stud: bool) -> Vec<[f64; 3]> {
    let b = s.brick(idx).expect("brick present in structure");
    let (w, d) = s.footprint(b);
    let top = (b.pos[2] + s.brick_type(b).height as i32) as f64;
    if per_stud {
        let mut pts = Vec::with_capacity((w * d) as usize);
        for i in 0..w {
            for j in 0..d {
                pts.push([
                    b.pos[0] as f64 + i as f64 + 0.5,
                    b.pos[1] as f64 + j as f64 + 0.5,
                    top,
                ]);
            }
        }
        pts
    } else {
        vec![[
            b.pos[0] as f64 + w as f64 / 2.0,
            b.pos[1] as f64 + d as f64 / 2.0,
            top,
        ]]
    }
}

/// True iff some single camera has clear line-of-sight to the top faces
/// of both the target and its reference. The pair being attached does
/// not occlude itself: both bricks are skipped on both rays. A baseplate
/// reference (−1) contributes no ray of its own.
pub fn check_observability(
    s: &Structure,
    tgt_index: usize,
    ref_index: i64,
    cameras: &[Camera],
    per_stud: bool,
) -> bool {
    let mut skip = vec![tgt_index];
    let mut origins = top_face_points(s, tgt_index, per_stud);
    if ref_index != BASEPLATE {
        skip.push(ref_index as usize);
        origins.extend(top_face_points(s, ref_index as usize, per_stud));
    }
    cameras
        .iter()
        .any(|cam| origins.iter().all(|o| ray_clear(s, *o, cam.position, &skip)))
}

/// True iff the brick can be lifted straight up: free corridor above its
/// footprint, a free `padding`-stud ring around it from its base upward,
/// and `clearance` spare layers between its top and the workspace
/// ceiling for the gripper body.
pub fn check_operability(
    s: &Structure,
    brick_index: usize,
    padding: i32,
    clearance: i32,
) -> bool {
    let b = *s.brick(brick_index).expect("brick present in structure");
    let (w, d) = s.footprint(&b);
    let top = b.pos[2] + s.brick_type(&b).height as i32;
    if top + clearance > s.workspace.height {
        return false;
    }
    for x in b.pos[0]..b.pos[0] + w {
        for y in b.pos[1]..b.pos[1] + d {
            for z in top..s.workspace.height {
                if s.occupant([x, y, z]).map_or(false, |i| i != brick_index) {
                    return false;
                }
            }
        }
    }
    for x in b.pos[0] - padding..b.pos[0] + w + padding {
        for y in b.pos[1] - padding..b.pos[1] + d + padding {
            let in_footprint =
                x >= b.pos[0] && x < b.pos[0] + w && y >= b.pos[1] && y < b.pos[1] + d;
            if in_footprint {
                continue;
            }
            for z in b.pos[2]..s.workspace.height {
                if s.occupant([x, y, z]).map_or(false, |i| i != brick_index) {
                    return false;
                }
            }
        }
    }
    true
}

/// Evaluate all four removal criteria for one brick of `s`.
pub fn removable(s: &Structure, brick_index: usize, cfg: &PlannerConfig) -> CriteriaResult {
    let pairs = check_connectivity(s, brick_index, &cfg.skills);
    let con = !pairs.is_empty();
    let chosen = pairs
        .into_iter()
        .find(|&(r, _)| check_observability(s, brick_index, r, &cfg.cameras, cfg.per_stud_rays));
    let obs = chosen.is_some();
    let op = check_operability(s, brick_index, cfg.gripper_padding, cfg.clearance_height);
    let stab = match s.without_brick(brick_index) {
        Ok(rest) => assess_stability(&rest, &cfg.stability).stable,
        Err(_) => false,
    };
    CriteriaResult { con, obs, op, stab, chosen }
}

struct Search<'a> {
    cfg: &'a PlannerConfig,
    /// Remaining-brick subsets (over original indices) already known to
    /// admit no disassembly order.
    failed: HashSet<Vec<u64>>,
    expanded: usize,
    removals: Vec<PlanStep>,
    key_words: usize,
}

impl Search<'_> {
    fn key(&self, orig: &[usize]) -> Vec<u64> {
        let mut k = vec![0u64; self.key_words];
        for &i in orig {
            k[i / 64] |= 1 << (i % 64);
        }
        k
    }

    /// `orig[i]` is the design index of the current structure's brick `i`.
    fn dfs(&mut self, s: &Structure, orig: &[usize]) -> Result<bool, PlanError> {
        if s.is_empty() {
            return Ok(true);
        }
        let key = self.key(orig);
        if self.failed.contains(&key) {
            return Ok(false);
        }
        self.expanded += 1;
        if self.expanded > self.cfg.max_states {
            return Err(PlanError::BudgetExceeded(self.expanded));
        }
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by_key(|&i| {
            let b = &s.bricks()[i];
            (std::cmp::Reverse(b.pos[2]), b.pos[0], b.pos[1], orig[i])
        });
        for i in order {
            let crit = removable(s, i, self.cfg);
            if !crit.valid() {
                continue;
            }
            let (ref_cur, tau) = crit.chosen.expect("valid result carries a pair");
            let ref_orig =
                if ref_cur == BASEPLATE { BASEPLATE } else { orig[ref_cur as usize] as i64 };
            self.removals.push(PlanStep { ref_index: ref_orig, tgt_index: orig[i], tau });
            let child = s.without_brick(i).expect("candidate index in range");
            let mut child_orig = orig.to_vec();
            child_orig.remove(i);
            if self.dfs(&child, &child_orig)? {
                return Ok(true);
            }
            self.removals.pop();
        }
        self.failed.insert(key);
        Ok(false)
    }
}

/// Find a feasible assembly order for `design`, or report why none
/// exists. Deterministic: candidates are tried highest-first (descending
/// z, then ascending x, y, design index) and the first full disassembly
/// found is reversed into the plan.
pub fn plan_assembly(design: &Structure, cfg: &PlannerConfig) -> Result<Plan, PlanError> {
    cfg.validate()?;
    if !design.baseplate_connected() {
        return Err(PlanError::InvalidDesign(DesignFlaw::Floating));
    }
    if !assess_stability(design, &cfg.stability).stable {
        return Err(PlanError::InvalidDesign(DesignFlaw::Unstable));
    }
    let n = design.len();
    let mut search = Search {
        cfg,
        failed: HashSet::new(),
        expanded: 0,
        removals: Vec::with_capacity(n),
        key_words: n.div_ceil(64).max(1),
    };
    let orig: Vec<usize> = (0..n).collect();
    if search.dfs(design, &orig)? {
        search.removals.reverse();
        Ok(Plan { design: design.clone(), steps: search.removals })
    } else {
        Err(PlanError::Infeasible)
    }
}

/// First criterion a plan violates during forward replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("step {step}: encoding is not in the skill set")]
    UnknownSkill { step: usize },
    #[error("step {step}: target index out of range or already placed")]
    BadTarget { step: usize },
    #[error("step {step}: reference brick is not placed yet")]
    MissingReference { step: usize },
    #[error("step {step}: encoding does not reproduce the designed pose")]
    PoseMismatch { step: usize },
    #[error("step {step}: placement collides or leaves the workspace")]
    BadPlacement { step: usize },
    #[error("step {step}: no stud contact with the reference")]
    NoContact { step: usize },
    #[error("step {step}: reference or target hidden from every camera")]
    Occluded { step: usize },
    #[error("step {step}: lift corridor or gripper ring obstructed")]
    Inoperable { step: usize },
    #[error("step {step}: intermediate structure is unstable")]
    Unstable { step: usize },
    #[error("plan does not reconstruct the design")]
    IncompleteDesign,
}

/// Replay `steps` forward from an empty plate and report the first
/// violated criterion. Independent of the search: plain incremental
/// placement with its own index bookkeeping. Steps are reported 1-based.
pub fn validate_plan(
    design: &Structure,
    steps: &[PlanStep],
    cfg: &PlannerConfig,
) -> Result<(), Violation> {
    let mut cur = Structure::new(design.workspace, design.types().to_vec())
        .expect("type table comes from a valid design");
    let mut placed: Vec<Option<usize>> = vec![None; design.len()];
    for (k, st) in steps.iter().enumerate() {
        let step = k + 1;
        if !cfg.skills.contains(&st.tau) {
            return Err(Violation::UnknownSkill { step });
        }
        let designed = match design.brick(st.tgt_index) {
            Some(b) if placed[st.tgt_index].is_none() => *b,
            _ => return Err(Violation::BadTarget { step }),
        };
        let ref_brick: Option<Brick> = if st.ref_index == BASEPLATE {
            None
        } else {
            let idx = usize::try_from(st.ref_index)
                .ok()
                .filter(|&r| r < design.len())
                .ok_or(Violation::MissingReference { step })?;
            let cur_idx = placed[idx].ok_or(Violation::MissingReference { step })?;
            Some(cur.bricks()[cur_idx])
        };
        // The baseplate reference is virtual — a stud column under the
        // target — so for it the pose check reduces to tau = [0,0,1,θ].
        let anchor = ref_brick.unwrap_or_else(|| baseplate_ref(&designed));
        let (pos, rot) = apply_encoding_pose(&anchor, st.tau);
        if pos != designed.pos || rot != designed.rot % 4 {
            return Err(Violation::PoseMismatch { step });
        }
        match ref_brick {
            None => {
                if designed.pos[2] != 0 {
                    return Err(Violation::NoContact { step });
                }
            }
            Some(rb) => {
                if cur.contact_studs(&rb, &designed).is_empty() {
                    return Err(Violation::NoContact { step });
                }
            }
        }
        if !cur.in_workspace(&designed) || cur.collides(&designed) {
            return Err(Violation::BadPlacement { step });
        }
        let cur_idx = cur.add_brick(designed).map_err(|_| Violation::BadPlacement { step })?;
        placed[st.tgt_index] = Some(cur_idx);

        let obs_ref = match st.ref_index {
            BASEPLATE => BASEPLATE,
            r => placed[r as usize].expect("reference placed above") as i64,
        };
        if !check_observability(&cur, cur_idx, obs_ref, &cfg.cameras, cfg.per_stud_rays) {
            return Err(Violation::Occluded { step });
        }
        if !check_operability(&cur, cur_idx, cfg.gripper_padding, cfg.clearance_height) {
            return Err(Violation::Inoperable { step });
        }
        if !assess_stability(&cur, &cfg.stability).stable {
            return Err(Violation::Unstable { step });
        }
    }
    if steps.len() != design.len() || placed.iter().any(Option::is_none) {
        return Err(Violation::IncompleteDesign);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BrickType, GridError};

    fn structure(types: Vec<BrickType>, bricks: &[Brick]) -> Structure {
        let mut s = Structure::new(Workspace::default(), types).unwrap();
        for &b in bricks {
            s.add_brick(b).unwrap();
        }
        s
    }

    fn tower(n: i32) -> Structure {
        let bricks: Vec<Brick> =
            (0..n).map(|z| Brick::new(0, [4, 4, z], 0)).collect();
        structure(vec![BrickType::new("2x2", 2, 2)], &bricks)
    }

    fn tau(x: i32, y: i32, z: i32, theta: u8) -> TaskEncoding {
        TaskEncoding::new(x, y, z, theta)
    }

    #[test]
    fn connectivity_in_a_tower() {
        let s = tower(2);
        assert_eq!(check_connectivity(&s, 1, &[tau(0, 0, 1, 0)]), vec![(0, tau(0, 0, 1, 0))]);
        assert!(check_connectivity(&s, 1, &[tau(1, 0, 1, 0)]).is_empty());
        // Base brick: baseplate pairing comes first.
        assert_eq!(
            check_connectivity(&s, 0, &default_skills()),
            vec![(BASEPLATE, tau(0, 0, 1, 0))]
        );
    }

    #[test]
    fn connectivity_lists_both_neighbors_sorted() {
        // One brick straddling two supports; a skill for each side.
        let s = structure(
            vec![BrickType::new("2x2", 2, 2)],
            &[
                Brick::new(0, [4, 4, 0], 0),
                Brick::new(0, [6, 4, 0], 0),
                Brick::new(0, [5, 4, 1], 0),
            ],
        );
        let skills = [tau(1, 0, 1, 0), tau(-1, 0, 1, 0)];
        assert_eq!(
            check_connectivity(&s, 2, &skills),
            vec![(0, tau(1, 0, 1, 0)), (1, tau(-1, 0, 1, 0))]
        );
    }

    #[test]
    fn baseplate_pairing_tracks_rotation() {
        let s = structure(
            vec![BrickType::new("2x4", 4, 2)],
            &[Brick::new(0, [4, 4, 0], 1)],
        );
        assert_eq!(
            check_connectivity(&s, 0, &[tau(0, 0, 1, 1)]),
            vec![(BASEPLATE, tau(0, 0, 1, 1))]
        );
        assert!(check_connectivity(&s, 0, &default_skills()).is_empty());
    }

    fn overhead_camera() -> Camera {
        Camera {
            position: [6.3, 6.3, 30.0],
            look_at: [6.0, 6.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_y_deg: 40.0,
            width: 64,
            height: 64,
        }
    }

    #[test]
    fn observability_skips_the_attached_pair() {
        let s = tower(3);
        let cams = [overhead_camera()];
        // Top brick with the middle as reference: the target sits right on
        // the reference's top face but must not occlude it.
        assert!(check_observability(&s, 2, 1, &cams, false));
        // Middle brick with the bottom as reference: the top brick is a
        // third party and blocks the middle brick's own ray.
        assert!(!check_observability(&s, 1, 0, &cams, false));
    }

    #[test]
    fn second_camera_rescues_a_shadowed_view() {
        // Tower at [5,5]; a 5-brick wall at x=8..10 shadows the low east
        // camera. Voxel trace to the east camera from the tower's top
        // face (6,6,2): z stays within layer 2 through x=8..10, where
        // the wall occupies (8,6,2) — blocked. The overhead camera sees
        // straight down the free column (6,6,z≥2).
        let mut s = Structure::new(
            Workspace::new(12, 12, 8),
            vec![BrickType::new("2x2", 2, 2)],
        )
        .unwrap();
        s.add_brick(Brick::new(0, [5, 5, 0], 0)).unwrap();
        s.add_brick(Brick::new(0, [5, 5, 1], 0)).unwrap();
        for z in 0..5 {
            s.add_brick(Brick::new(0, [8, 5, z], 0)).unwrap();
        }
        let east = Camera {
            position: [30.0, 6.3, 2.5],
            look_at: [6.0, 6.0, 1.0],
            up: [0.0, 0.0, 1.0],
            fov_y_deg: 40.0,
            width: 64,
            height: 64,
        };
        assert!(!check_observability(&s, 1, 0, &[east.clone()], false));
        assert!(check_observability(&s, 1, 0, &[east, overhead_camera()], false));
        assert!(check_observability(&s, 1, 0, &[overhead_camera()], false));
    }

    #[test]
    fn operability_examples() {
        let s = tower(3);
        assert!(check_operability(&s, 2, 1, 2));
        assert!(!check_operability(&s, 0, 1, 2), "bricks above block the corridor");

        // Side-by-side neighbors intrude into the 1-stud gripper ring.
        let pair = structure(
            vec![BrickType::new("2x2", 2, 2)],
            &[Brick::new(0, [4, 4, 0], 0), Brick::new(0, [6, 4, 0], 0)],
        );
        assert!(!check_operability(&pair, 0, 1, 2));
        assert!(check_operability(&pair, 0, 0, 2));
    }

    #[test]
    fn operability_needs_headroom() {
        let mut s =
            Structure::new(Workspace::new(8, 8, 2), vec![BrickType::new("2x2", 2, 2)]).unwrap();
        s.add_brick(Brick::new(0, [2, 2, 0], 0)).unwrap();
        assert!(!check_operability(&s, 0, 1, 2), "only one spare layer above");
        assert!(check_operability(&s, 0, 1, 1));
    }

    #[test]
    fn removable_top_and_bottom_of_tower() {
        let s = tower(3);
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        let top = removable(&s, 2, &cfg);
        assert!(top.valid());
        assert_eq!(top.chosen, Some((1, tau(0, 0, 1, 0))));
        let bottom = removable(&s, 0, &cfg);
        assert!(!bottom.valid());
        assert!(!bottom.op, "swept volume hits the bricks above");
    }

    /// Seesaw: a 2x6 plank on a central 2x2 pillar, rebalanced by a 2x2
    /// counterweight on the plank's long end. Hand equilibrium, collapsing
    /// the two y-studs of each column: with the counterweight the base
    /// interface solves A=4, B=0 (pure compression, zero utilization);
    /// without it A+B=3 and A+3B=0 force B=−1.5, i.e. 0.75 tension per
    /// stud, which overloads a 0.5 clutch capacity.
    fn seesaw() -> Structure {
        structure(
            vec![BrickType::new("2x2", 2, 2), BrickType::new("2x6", 6, 2)],
            &[
                Brick::new(0, [4, 0, 0], 0),
                Brick::new(1, [1, 0, 1], 0),
                Brick::new(0, [5, 0, 2], 0),
            ],
        )
    }

    fn seesaw_config(ws: &Workspace) -> PlannerConfig {
        let mut cfg = PlannerConfig::for_workspace(ws);
        cfg.skills = vec![tau(0, 0, 1, 0), tau(-3, 0, 1, 0), tau(4, 0, 1, 0)];
        cfg.stability.t_max = 0.5;
        cfg
    }

    #[test]
    fn removing_the_counterweight_collapses_the_seesaw() {
        let s = seesaw();
        let cfg = seesaw_config(&s.workspace);
        assert!(assess_stability(&s, &cfg.stability).stable);
        let crit = removable(&s, 2, &cfg);
        assert!(crit.con && crit.obs && crit.op);
        assert!(!crit.stab, "plank alone exceeds clutch tension");
        assert!(!crit.valid());
    }

    #[test]
    fn tower_plan_is_the_unique_bottom_up_order() {
        let s = tower(3);
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        let plan = plan_assembly(&s, &cfg).unwrap();
        assert_eq!(
            plan.steps,
            vec![
                PlanStep { ref_index: BASEPLATE, tgt_index: 0, tau: tau(0, 0, 1, 0) },
                PlanStep { ref_index: 0, tgt_index: 1, tau: tau(0, 0, 1, 0) },
                PlanStep { ref_index: 1, tgt_index: 2, tau: tau(0, 0, 1, 0) },
            ]
        );
        assert!(validate_plan(&s, &plan.steps, &cfg).is_ok());
    }

    #[test]
    fn planning_is_deterministic() {
        let s = structure(
            vec![BrickType::new("2x2", 2, 2)],
            &[
                Brick::new(0, [2, 2, 0], 0),
                Brick::new(0, [2, 2, 1], 0),
                Brick::new(0, [8, 2, 0], 0),
                Brick::new(0, [8, 2, 1], 0),
            ],
        );
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        let a = plan_to_json(&plan_assembly(&s, &cfg).unwrap());
        let b = plan_to_json(&plan_assembly(&s, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rotated_base_without_matching_skill_is_infeasible() {
        let s = structure(
            vec![BrickType::new("2x4", 4, 2)],
            &[Brick::new(0, [2, 2, 0], 0), Brick::new(0, [10, 2, 0], 1)],
        );
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        assert!(matches!(plan_assembly(&s, &cfg), Err(PlanError::Infeasible)));
    }

    #[test]
    fn seesaw_needs_a_stable_prefix_order() {
        let s = seesaw();
        let cfg = seesaw_config(&s.workspace);
        // Every order must pass through plank-without-counterweight,
        // which overloads the weak clutch: no plan exists.
        assert!(matches!(plan_assembly(&s, &cfg), Err(PlanError::Infeasible)));
        // Default clutch capacity tolerates the intermediate state.
        let mut strong = cfg.clone();
        strong.stability = StabilityParams::default();
        let plan = plan_assembly(&s, &strong).unwrap();
        assert_eq!(
            plan.steps.iter().map(|st| st.tgt_index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(validate_plan(&s, &plan.steps, &strong).is_ok());
        // And the weak-clutch validator pinpoints the unstable prefix.
        assert_eq!(
            validate_plan(&s, &plan.steps, &cfg),
            Err(Violation::Unstable { step: 2 })
        );
    }

    #[test]
    fn floating_and_unstable_designs_are_rejected() {
        let floating = structure(
            vec![BrickType::new("2x2", 2, 2)],
            &[Brick::new(0, [2, 2, 0], 0), Brick::new(0, [8, 8, 3], 0)],
        );
        let cfg = PlannerConfig::for_workspace(&floating.workspace);
        assert!(matches!(
            plan_assembly(&floating, &cfg),
            Err(PlanError::InvalidDesign(DesignFlaw::Floating))
        ));

        // The seesaw *without* its counterweight tips over as designed.
        let unbalanced = structure(
            vec![BrickType::new("2x2", 2, 2), BrickType::new("2x6", 6, 2)],
            &[Brick::new(0, [4, 0, 0], 0), Brick::new(1, [1, 0, 1], 0)],
        );
        let weak = seesaw_config(&unbalanced.workspace);
        assert!(matches!(
            plan_assembly(&unbalanced, &weak),
            Err(PlanError::InvalidDesign(DesignFlaw::Unstable))
        ));
    }

    #[test]
    fn overlapping_design_is_rejected_at_load() {
        let text = r#"{
            "workspace": [10, 10, 4],
            "types": [{"id": "2x2", "w": 2, "d": 2}],
            "bricks": [
                {"type": "2x2", "pos": [1, 1, 0], "rot": 0},
                {"type": "2x2", "pos": [2, 1, 0], "rot": 0}
            ]
        }"#;
        match crate::grid::structure_from_json(text) {
            Err(crate::Error::Grid(GridError::Collision(2, 1, 0))) => {}
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = tower(2);
        let mut cfg = PlannerConfig::for_workspace(&s.workspace);
        cfg.max_states = 1;
        assert!(matches!(plan_assembly(&s, &cfg), Err(PlanError::BudgetExceeded(_))));
    }

    #[test]
    fn empty_skills_are_a_config_error() {
        let s = tower(1);
        let mut cfg = PlannerConfig::for_workspace(&s.workspace);
        cfg.skills.clear();
        assert!(matches!(plan_assembly(&s, &cfg), Err(PlanError::BadConfig(_))));
    }

    #[test]
    fn validator_rejects_swapped_and_mangled_plans() {
        let s = tower(3);
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        let plan = plan_assembly(&s, &cfg).unwrap();

        let mut swapped = plan.steps.clone();
        swapped.swap(1, 2);
        assert_eq!(
            validate_plan(&s, &swapped, &cfg),
            Err(Violation::MissingReference { step: 2 })
        );

        let mut alien = plan.steps.clone();
        alien[1].tau = tau(5, 0, 1, 0);
        assert_eq!(validate_plan(&s, &alien, &cfg), Err(Violation::UnknownSkill { step: 2 }));

        let mut wrong = plan.steps.clone();
        wrong[1].tau = tau(1, 0, 1, 0);
        assert_eq!(validate_plan(&s, &wrong, &cfg), Err(Violation::PoseMismatch { step: 2 }));

        assert_eq!(
            validate_plan(&s, &plan.steps[..2], &cfg),
            Err(Violation::IncompleteDesign)
        );

        let mut dup = plan.steps.clone();
        dup[2] = dup[1];
        assert_eq!(validate_plan(&s, &dup, &cfg), Err(Violation::BadTarget { step: 3 }));
    }

    #[test]
    fn plan_files_roundtrip() {
        let s = tower(3);
        let cfg = PlannerConfig::for_workspace(&s.workspace);
        let plan = plan_assembly(&s, &cfg).unwrap();
        let text = plan_to_json(&plan);
        let back = plan_from_json(&text).unwrap();
        assert_eq!(back.steps, plan.steps);
        assert_eq!(back.design, s);
        assert_eq!(plan_to_json(&back), text);
    }

    #[test]
    fn skills_files_roundtrip_and_default() {
        let text = skills_to_json(&default_skills());
        assert_eq!(skills_from_json(&text).unwrap(), default_skills());
        let parsed = skills_from_json(r#"{"skills":[[0,0,1,0],[0,1,1,3]]}"#).unwrap();
        assert_eq!(parsed, vec![tau(0, 0, 1, 0), tau(0, 1, 1, 3)]);
        assert!(skills_from_json(r#"{"skills":[[0,0,1,7]]}"#).is_err());
    }
}
