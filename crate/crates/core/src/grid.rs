//! Discrete stud-grid world model.
//!
//! Bricks live on an integer grid: x/y in stud units, z in layers (z = 0
//! rests on the baseplate). A brick pose is `(type, position, rotation)`
//! where `position` is the minimum-corner stud cell of the brick's
//! footprint in the world frame *after* rotation, and `rotation` counts
//! counterclockwise quarter turns viewed from +z.

use std::collections::HashMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Baseplate sentinel used wherever a brick index is expected.
pub const BASEPLATE: i64 = -1;

/// Default brick color assigned to design-file types that omit one.
const PALETTE: [[u8; 3]; 6] = [
    [196, 40, 27],
    [13, 105, 172],
    [245, 205, 48],
    [40, 127, 71],
    [218, 133, 65],
    [155, 154, 156],
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("brick extends outside the workspace")]
    OutOfWorkspace,
    #[error("cell ({0}, {1}, {2}) is already occupied")]
    Collision(i32, i32, i32),
    #[error("unknown brick type `{0}`")]
    UnknownType(String),
    #[error("invalid brick type `{0}`: {1}")]
    InvalidType(String, String),
    #[error("invalid rotation {0} (must be 0..=3)")]
    InvalidRotation(u8),
    #[error("brick index {0} out of range")]
    BadIndex(usize),
}

/// A brick shape: rectangular footprint in studs, height in layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrickType {
    pub id: String,
    pub footprint_w: u32,
    pub footprint_d: u32,
    pub height: u32,
    pub color: [u8; 3],
}

impl BrickType {
    pub fn new(id: &str, w: u32, d: u32) -> Self {
        BrickType {
            id: id.to_string(),
            footprint_w: w,
            footprint_d: d,
            height: 1,
            color: PALETTE[0],
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.footprint_w < 1 || self.footprint_d < 1 || self.height < 1 {
            return Err(GridError::InvalidType(
                self.id.clone(),
                "footprint and height must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A placed brick: index into the structure's type table plus a pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Brick {
    pub type_idx: usize,
    pub pos: [i32; 3],
    pub rot: u8,
}

impl Brick {
    pub fn new(type_idx: usize, pos: [i32; 3], rot: u8) -> Self {
        Brick { type_idx, pos, rot }
    }
}

/// Relative pose of a target brick in a reference brick's frame:
/// stud offsets, layer offset, and quarter-turn delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskEncoding {
    pub x: i32,
    pub y: i32,
    pub z: i32,
    pub theta: u8,
}

impl TaskEncoding {
    pub fn new(x: i32, y: i32, z: i32, theta: u8) -> Self {
        TaskEncoding { x, y, z, theta }
    }
}

impl fmt::Display for TaskEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x, self.y, self.z, self.theta)
    }
}

// Encodings appear in files as flat 4-arrays, e.g. [0,0,1,0].
impl Serialize for TaskEncoding {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x as i64, self.y as i64, self.z as i64, self.theta as i64].serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaskEncoding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[i64; 4]>::deserialize(d)?;
        if !(0..4).contains(&v[3]) {
            return Err(D::Error::custom("encoding theta must be in 0..=3"));
        }
        Ok(TaskEncoding::new(v[0] as i32, v[1] as i32, v[2] as i32, v[3] as u8))
    }
}

/// Grid extents: width/depth in studs, height in layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: i32,
    pub depth: i32,
    pub height: i32,
}

impl Workspace {
    pub fn new(width: i32, depth: i32, height: i32) -> Self {
        Workspace { width, depth, height }
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace::new(24, 24, 12)
    }
}

/// Reference side of a contact: another brick or the baseplate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactRef {
    Baseplate,
    Brick(usize),
}

/// A horizontal stud interface between a lower body and an upper brick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contact {
    pub lower: ContactRef,
    pub upper: usize,
    /// World stud cells at the shared interface, sorted ascending (x, y).
    pub stud_cells: Vec<(i32, i32)>,
    /// Layer coordinate of the interface (top of lower = bottom of upper).
    pub interface_z: i32,
}

/// Rotate a planar integer vector by `theta` counterclockwise quarter turns.
pub fn rotate_ccw(v: (i32, i32), theta: u8) -> (i32, i32) {
    match theta % 4 {
        0 => v,
        1 => (-v.1, v.0),
        2 => (-v.0, -v.1),
        _ => (v.1, -v.0),
    }
}

/// Relative task encoding of `tgt` in `reference`'s frame.
///
/// The world offset between anchors is rotated by the inverse of the
/// reference rotation; theta is the quarter-turn difference.
pub fn relative_encoding(reference: &Brick, tgt: &Brick) -> TaskEncoding {
    let d = (tgt.pos[0] - reference.pos[0], tgt.pos[1] - reference.pos[1]);
    let inv = (4 - reference.rot % 4) % 4;
    let (tx, ty) = rotate_ccw(d, inv);
    TaskEncoding::new(tx, ty, tgt.pos[2] - reference.pos[2], (4 + tgt.rot - reference.rot) % 4)
}

/// Target pose produced by applying `tau` to a reference pose.
/// Exact inverse of [`relative_encoding`]; does not check bounds.
pub fn apply_encoding_pose(reference: &Brick, tau: TaskEncoding) -> ([i32; 3], u8) {
    let (dx, dy) = rotate_ccw((tau.x, tau.y), reference.rot);
    (
        [reference.pos[0] + dx, reference.pos[1] + dy, reference.pos[2] + tau.z],
        (reference.rot + tau.theta) % 4,
    )
}

/// Virtual reference pose for baseplate-anchored steps: the stud column
/// directly beneath the target's anchor, one interface below z = 0, with
/// rotation 0. Under this convention every baseplate placement of an
/// unrotated brick encodes as [0,0,1,0] regardless of where it lands on
/// the plate.
pub fn baseplate_ref(tgt: &Brick) -> Brick {
    Brick::new(tgt.type_idx, [tgt.pos[0], tgt.pos[1], -1], 0)
}

/// An ordered collection of bricks on a stud grid with an occupancy index.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub workspace: Workspace,
    types: Vec<BrickType>,
    bricks: Vec<Brick>,
    occupancy: HashMap<[i32; 3], usize>,
}

impl Structure {
    pub fn new(workspace: Workspace, types: Vec<BrickType>) -> Result<Self, GridError> {
        for t in &types {
            t.validate()?;
        }
        Ok(Structure { workspace, types, bricks: Vec::new(), occupancy: HashMap::new() })
    }

    pub fn types(&self) -> &[BrickType] {
        &self.types
    }

    pub fn type_index(&self, id: &str) -> Option<usize> {
        self.types.iter().position(|t| t.id == id)
    }

    pub fn bricks(&self) -> &[Brick] {
        &self.bricks
    }

    pub fn brick(&self, idx: usize) -> Option<&Brick> {
        self.bricks.get(idx)
    }

    pub fn len(&self) -> usize {
        self.bricks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bricks.is_empty()
    }

    pub fn brick_type(&self, brick: &Brick) -> &BrickType {
        &self.types[brick.type_idx]
    }

    /// Footprint extents in world axes: swapped when the rotation is odd.
    pub fn footprint(&self, brick: &Brick) -> (i32, i32) {
        let t = self.brick_type(brick);
        if brick.rot % 2 == 0 {
            (t.footprint_w as i32, t.footprint_d as i32)
        } else {
            (t.footprint_d as i32, t.footprint_w as i32)
        }
    }

    /// All grid cells covered by a brick, anchored at its minimum corner.
    pub fn occupied_cells(&self, brick: &Brick) -> Vec<[i32; 3]> {
        let (w, d) = self.footprint(brick);
        let h = self.brick_type(brick).height as i32;
        let mut cells = Vec::with_capacity((w * d * h) as usize);
        for dz in 0..h {
            for dy in 0..d {
                for dx in 0..w {
                    cells.push([brick.pos[0] + dx, brick.pos[1] + dy, brick.pos[2] + dz]);
                }
            }
        }
        cells
    }

    pub fn in_workspace(&self, brick: &Brick) -> bool {
        let (w, d) = self.footprint(brick);
        let h = self.brick_type(brick).height as i32;
        brick.pos[0] >= 0
            && brick.pos[1] >= 0
            && brick.pos[2] >= 0
            && brick.pos[0] + w <= self.workspace.width
            && brick.pos[1] + d <= self.workspace.depth
            && brick.pos[2] + h <= self.workspace.height
    }

    /// True iff the brick's cells intersect any existing brick's cells.
    pub fn collides(&self, brick: &Brick) -> bool {
        self.occupied_cells(brick).iter().any(|c| self.occupancy.contains_key(c))
    }

    /// Brick index occupying a cell, if any.
    pub fn occupant(&self, cell: [i32; 3]) -> Option<usize> {
        self.occupancy.get(&cell).copied()
    }

    pub fn add_brick(&mut self, brick: Brick) -> Result<usize, GridError> {
        if brick.rot > 3 {
            return Err(GridError::InvalidRotation(brick.rot));
        }
        if brick.type_idx >= self.types.len() {
            return Err(GridError::UnknownType(format!("#{}", brick.type_idx)));
        }
        if !self.in_workspace(&brick) {
            return Err(GridError::OutOfWorkspace);
        }
        if let Some(c) = self.occupied_cells(&brick).iter().find(|c| self.occupancy.contains_key(*c)) {
            return Err(GridError::Collision(c[0], c[1], c[2]));
        }
        let idx = self.bricks.len();
        for c in self.occupied_cells(&brick) {
            self.occupancy.insert(c, idx);
        }
        self.bricks.push(brick);
        Ok(idx)
    }

    /// Remove a brick; indices of later bricks shift down by one.
    pub fn remove_brick(&mut self, idx: usize) -> Result<Brick, GridError> {
        if idx >= self.bricks.len() {
            return Err(GridError::BadIndex(idx));
        }
        let brick = self.bricks.remove(idx);
        self.occupancy.retain(|_, v| *v != idx);
        for v in self.occupancy.values_mut() {
            if *v > idx {
                *v -= 1;
            }
        }
        Ok(brick)
    }

    /// Clone of this structure without the brick at `idx`.
    pub fn without_brick(&self, idx: usize) -> Result<Structure, GridError> {
        let mut out = self.clone();
        out.remove_brick(idx)?;
        Ok(out)
    }

    /// World stud cells where brick `a`'s top face meets brick `b`'s bottom
    /// face (or vice versa). Empty when not vertically adjacent.
    pub fn contact_studs(&self, a: &Brick, b: &Brick) -> Vec<(i32, i32)> {
        let (lower, upper) = if a.pos[2] <= b.pos[2] { (a, b) } else { (b, a) };
        if lower.pos[2] + self.brick_type(lower).height as i32 != upper.pos[2] {
            return Vec::new();
        }
        self.footprint_overlap(lower, upper)
    }

    fn footprint_overlap(&self, a: &Brick, b: &Brick) -> Vec<(i32, i32)> {
        let (wa, da) = self.footprint(a);
        let (wb, db) = self.footprint(b);
        let x0 = a.pos[0].max(b.pos[0]);
        let x1 = (a.pos[0] + wa).min(b.pos[0] + wb);
        let y0 = a.pos[1].max(b.pos[1]);
        let y1 = (a.pos[1] + da).min(b.pos[1] + db);
        let mut cells = Vec::new();
        for x in x0..x1 {
            for y in y0..y1 {
                cells.push((x, y));
            }
        }
        cells.sort_unstable();
        cells
    }

    /// All stud interfaces in the structure, baseplate contacts included.
    /// Order: ascending upper-brick index, baseplate support first, then
    /// ascending lower-brick index.
    pub fn contacts(&self) -> Vec<Contact> {
        let mut out = Vec::new();
        for (i, upper) in self.bricks.iter().enumerate() {
            if upper.pos[2] == 0 {
                let (w, d) = self.footprint(upper);
                let mut cells = Vec::with_capacity((w * d) as usize);
                for x in upper.pos[0]..upper.pos[0] + w {
                    for y in upper.pos[1]..upper.pos[1] + d {
                        cells.push((x, y));
                    }
                }
                cells.sort_unstable();
                out.push(Contact {
                    lower: ContactRef::Baseplate,
                    upper: i,
                    stud_cells: cells,
                    interface_z: 0,
                });
            }
            for (j, lower) in self.bricks.iter().enumerate() {
                if i == j || lower.pos[2] + self.brick_type(lower).height as i32 != upper.pos[2] {
                    continue;
                }
                let cells = self.footprint_overlap(lower, upper);
                if !cells.is_empty() {
                    out.push(Contact {
                        lower: ContactRef::Brick(j),
                        upper: i,
                        stud_cells: cells,
                        interface_z: upper.pos[2],
                    });
                }
            }
        }
        out
    }

    /// Apply `tau` relative to `reference`, producing a placed-checkable
    /// brick of the given type. Fails if any resulting cell leaves the grid.
    pub fn apply_encoding(
        &self,
        reference: &Brick,
        tau: TaskEncoding,
        type_idx: usize,
    ) -> Result<Brick, GridError> {
        let (pos, rot) = apply_encoding_pose(reference, tau);
        let brick = Brick::new(type_idx, pos, rot);
        if !self.in_workspace(&brick) {
            return Err(GridError::OutOfWorkspace);
        }
        Ok(brick)
    }

    /// True iff every brick is connected to the baseplate through stud
    /// interfaces (no floating islands).
    pub fn baseplate_connected(&self) -> bool {
        if self.bricks.is_empty() {
            return true;
        }
        let contacts = self.contacts();
        let mut reached = vec![false; self.bricks.len()];
        let mut queue: Vec<usize> = Vec::new();
        for c in &contacts {
            if c.lower == ContactRef::Baseplate && !reached[c.upper] {
                reached[c.upper] = true;
                queue.push(c.upper);
            }
        }
        while let Some(i) = queue.pop() {
            for c in &contacts {
                let other = match (c.lower, c.upper) {
                    (ContactRef::Brick(j), u) if u == i => j,
                    (ContactRef::Brick(j), u) if j == i => u,
                    _ => continue,
                };
                if !reached[other] {
                    reached[other] = true;
                    queue.push(other);
                }
            }
        }
        reached.iter().all(|&r| r)
    }
}

// ---------------------------------------------------------------------------
// Design file
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TypeSpec {
    id: String,
    w: u32,
    d: u32,
    #[serde(default = "one")]
    h: u32,
    #[serde(default)]
    color: Option<[u8; 3]>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct BrickSpec {
    #[serde(rename = "type")]
    type_id: String,
    pos: [i32; 3],
    rot: u8,
}

/// On-disk design: workspace extents, type table, placed bricks.
#[derive(Debug, Serialize, Deserialize)]
pub struct DesignFile {
    workspace: [i32; 3],
    types: Vec<TypeSpec>,
    bricks: Vec<BrickSpec>,
}

impl DesignFile {
    pub fn from_structure(s: &Structure) -> Self {
        DesignFile {
            workspace: [s.workspace.width, s.workspace.depth, s.workspace.height],
            types: s
                .types
                .iter()
                .map(|t| TypeSpec {
                    id: t.id.clone(),
                    w: t.footprint_w,
                    d: t.footprint_d,
                    h: t.height,
                    color: Some(t.color),
                })
                .collect(),
            bricks: s
                .bricks
                .iter()
                .map(|b| BrickSpec {
                    type_id: s.types[b.type_idx].id.clone(),
                    pos: b.pos,
                    rot: b.rot,
                })
                .collect(),
        }
    }

    /// Build the structure, rejecting overlaps and out-of-grid bricks.
    pub fn into_structure(self) -> Result<Structure, GridError> {
        let types: Vec<BrickType> = self
            .types
            .iter()
            .enumerate()
            .map(|(i, t)| BrickType {
                id: t.id.clone(),
                footprint_w: t.w,
                footprint_d: t.d,
                height: t.h,
                color: t.color.unwrap_or(PALETTE[i % PALETTE.len()]),
            })
            .collect();
        let ws = Workspace::new(self.workspace[0], self.workspace[1], self.workspace[2]);
        let mut s = Structure::new(ws, types)?;
        for spec in &self.bricks {
            let type_idx = s
                .type_index(&spec.type_id)
                .ok_or_else(|| GridError::UnknownType(spec.type_id.clone()))?;
            s.add_brick(Brick::new(type_idx, spec.pos, spec.rot))?;
        }
        Ok(s)
    }
}

pub fn structure_to_json(s: &Structure) -> String {
    serde_json::to_string_pretty(&DesignFile::from_structure(s)).expect("design serializes")
}

pub fn structure_from_json(text: &str) -> Result<Structure, crate::Error> {
    let file: DesignFile = serde_json::from_str(text)?;
    Ok(file.into_structure()?)
}
