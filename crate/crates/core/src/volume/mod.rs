//! Dense 3D scalar volumes.
//!
//! Voxels are stored z-major (`index = z*ny*nx + y*nx + x`), which is also the
//! x-fastest order MetaImage uses on disk. Every volume carries a [`Role`] that
//! constrains its values.

mod mhd;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mhd::{load_volume, read_header, save_volume, ElementType, MetaHeader};

/// Voxel counts `(nz, ny, nx)`.
pub type Shape = [usize; 3];
/// Voxel coordinate `(z, y, x)`.
pub type Index3 = [usize; 3];
/// Millimetres per voxel `(sz, sy, sx)`.
pub type Spacing = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Intensity,
    Probability,
    Binary,
    Label,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Intensity => "intensity",
            Role::Probability => "probability",
            Role::Binary => "binary",
            Role::Label => "label",
        };
        f.write_str(s)
    }
}

impl Role {
    /// Whether `value` is admissible for this role.
    pub fn admits(self, value: f32) -> bool {
        match self {
            Role::Intensity => value.is_finite(),
            Role::Probability => (0.0..=1.0).contains(&value),
            Role::Binary => value == 0.0 || value == 1.0,
            Role::Label => value >= 0.0 && value.is_finite() && value.fract() == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Face6,
    Edge18,
    #[default]
    Vertex26,
}

const fn build_offsets<const N: usize>(max_l1: i32) -> [[i32; 3]; N] {
    let mut out = [[0; 3]; N];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                let l1 = (dz * dz) + (dy * dy) + (dx * dx);
                if l1 != 0 && l1 <= max_l1 {
                    out[n] = [dz, dy, dx];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
}

static FACE6: [[i32; 3]; 6] = build_offsets::<6>(1);
static EDGE18: [[i32; 3]; 18] = build_offsets::<18>(2);
static VERTEX26: [[i32; 3]; 26] = build_offsets::<26>(3);

impl Connectivity {
    /// Neighbor offsets `(dz, dy, dx)`, in z-major order.
    pub fn offsets(self) -> &'static [[i32; 3]] {
        match self {
            Connectivity::Face6 => &FACE6,
            Connectivity::Edge18 => &EDGE18,
            Connectivity::Vertex26 => &VERTEX26,
        }
    }

    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Face6),
            18 => Some(Connectivity::Edge18),
            26 => Some(Connectivity::Vertex26),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: Shape,
    spacing: Spacing,
    data: Vec<f32>,
    role: Role,
}

impl Volume {
    pub fn new(shape: Shape, spacing: Spacing, data: Vec<f32>, role: Role) -> Result<Self> {
        let len = voxel_count(shape);
        if data.len() != len {
            return Err(Error::InvalidVolume(format!(
                "data holds {} values, shape {:?} needs {}",
                data.len(),
                shape,
                len
            )));
        }
        if let Some(bad) = spacing.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidVolume(format!("spacing must be > 0, got {bad}")));
        }
        if let Some(bad) = data.iter().find(|v| !role.admits(**v)) {
            return Err(Error::InvalidVolume(format!("value {bad} not allowed for {role} volume")));
        }
        Ok(Volume {
            shape,
            spacing,
            data,
            role,
        })
    }

    pub fn zeros(shape: Shape, spacing: Spacing, role: Role) -> Self {
        Self::filled(shape, spacing, role, 0.0)
    }

    /// Panics if `value` is not admissible for `role` or spacing is invalid.
    pub fn filled(shape: Shape, spacing: Spacing, role: Role, value: f32) -> Self {
        assert!(role.admits(value), "{value} is not a valid {role} value");
        assert!(spacing.iter().all(|s| s.is_finite() && *s > 0.0), "invalid spacing {spacing:?}");
        Volume {
            shape,
            spacing,
            data: vec![value; voxel_count(shape)],
            role,
        }
    }

    /// Builds a binary mask from a predicate over voxel coordinates.
    pub fn binary_from_fn(shape: Shape, spacing: Spacing, mut f: impl FnMut(Index3) -> bool) -> Self {
        let mut v = Self::zeros(shape, spacing, Role::Binary);
        for i in 0..v.len() {
            if f(v.unflatten(i)) {
                v.data[i] = 1.0;
            }
        }
        v
    }

    /// Same geometry, new values and role.
    pub fn with_data(&self, data: Vec<f32>, role: Role) -> Result<Self> {
        Volume::new(self.shape, self.spacing, data, role)
    }

    /// Re-tags the volume; fails if any value is inadmissible under the new role.
    pub fn into_role(self, role: Role) -> Result<Self> {
        Volume::new(self.shape, self.spacing, self.data, role)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn flatten(&self, [z, y, x]: Index3) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn unflatten(&self, i: usize) -> Index3 {
        let plane = self.shape[1] * self.shape[2];
        [i / plane, (i % plane) / self.shape[2], i % self.shape[2]]
    }

    #[inline]
    pub fn in_bounds(&self, [z, y, x]: Index3) -> bool {
        z < self.shape[0] && y < self.shape[1] && x < self.shape[2]
    }

    /// Out-of-bounds reads panic.
    #[inline]
    pub fn get(&self, idx: Index3) -> f32 {
        debug_assert!(self.in_bounds(idx));
        self.data[self.flatten(idx)]
    }

    /// Writes one voxel; the value must be admissible for the volume's role.
    pub fn set(&mut self, idx: Index3, value: f32) -> Result<()> {
        if !self.in_bounds(idx) {
            return Err(Error::IndexOutOfBounds {
                index: idx,
                shape: self.shape,
            });
        }
        if !self.role.admits(value) {
            return Err(Error::InvalidVolume(format!(
                "value {value} not allowed for {} volume",
                self.role
            )));
        }
        let i = self.flatten(idx);
        self.data[i] = value;
        Ok(())
    }

    /// Nonzero voxels count as foreground for every role.
    #[inline]
    pub fn is_foreground(&self, i: usize) -> bool {
        self.data[i] != 0.0
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Linear indices of nonzero voxels, ascending.
    pub fn foreground_indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Binary mask of nonzero voxels.
    pub fn foreground(&self) -> Volume {
        let data = self.data.iter().map(|v| if *v != 0.0 { 1.0 } else { 0.0 }).collect();
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data,
            role: Role::Binary,
        }
    }

    pub fn ensure_role(&self, allowed: &[Role]) -> Result<()> {
        if allowed.contains(&self.role) {
            Ok(())
        } else {
            Err(Error::RoleMismatch {
                expected: allowed.iter().map(Role::to_string).collect::<Vec<_>>().join(" or "),
                found: self.role,
            })
        }
    }

    pub fn ensure_same_shape(&self, other: &Volume) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            })
        }
    }

    /// In-bounds neighbor at `offset`, if any.
    #[inline]
    pub fn offset(&self, [z, y, x]: Index3, [dz, dy, dx]: [i32; 3]) -> Option<Index3> {
        let nz = z as i64 + dz as i64;
        let ny = y as i64 + dy as i64;
        let nx = x as i64 + dx as i64;
        if nz < 0 || ny < 0 || nx < 0 {
            return None;
        }
        let n = [nz as usize, ny as usize, nx as usize];
        self.in_bounds(n).then_some(n)
    }

    /// Linear indices of the in-bounds neighbors of linear index `i`.
    pub(crate) fn neighbor_indices(&self, i: usize, conn: Connectivity) -> impl Iterator<Item = usize> + '_ {
        let idx = self.unflatten(i);
        conn.offsets()
            .iter()
            .filter_map(move |o| self.offset(idx, *o).map(|n| self.flatten(n)))
    }
}

pub fn voxel_count(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

/// In-bounds neighbors of `idx` under `conn`, in offset order.
pub fn neighbors(v: &Volume, idx: Index3, conn: Connectivity) -> Result<Vec<Index3>> {
    if !v.in_bounds(idx) {
        return Err(Error::IndexOutOfBounds {
            index: idx,
            shape: v.shape,
        });
    }
    Ok(conn.offsets().iter().filter_map(|o| v.offset(idx, *o)).collect())
}

/// Binarizes a probability map; a voxel is foreground iff its value is `>= t`.
pub fn threshold(v: &Volume, t: f32) -> Result<Volume> {
    v.ensure_role(&[Role::Probability, Role::Binary])?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold {t} not in [0, 1]")));
    }
    let data = v.data.iter().map(|p| if *p >= t { 1.0 } else { 0.0 }).collect();
    v.with_data(data, Role::Binary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_set_sizes() {
        assert_eq!(Connectivity::Face6.offsets().len(), 6);
        assert_eq!(Connectivity::Edge18.offsets().len(), 18);
        assert_eq!(Connectivity::Vertex26.offsets().len(), 26);
    }

    #[test]
    fn neighbor_counts() {
        let v = Volume::zeros([3, 3, 3], [1.0; 3], Role::Binary);
        assert_eq!(neighbors(&v, [1, 1, 1], Connectivity::Vertex26).unwrap().len(), 26);
        assert_eq!(neighbors(&v, [1, 1, 1], Connectivity::Face6).unwrap().len(), 6);
        // 2^3 - 1 in-bounds offsets survive at a corner
        assert_eq!(neighbors(&v, [0, 0, 0], Connectivity::Vertex26).unwrap().len(), 7);
        assert!(matches!(
            neighbors(&v, [3, 0, 0], Connectivity::Face6),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn threshold_is_inclusive() {
        let v = Volume::filled([2, 2, 2], [1.0; 3], Role::Probability, 0.7);
        assert!(threshold(&v, 0.5).unwrap().data().iter().all(|x| *x == 1.0));
        assert!(threshold(&v, 0.7).unwrap().data().iter().all(|x| *x == 1.0));

        let v = Volume::new([1, 1, 3], [1.0; 3], vec![0.2, 0.5, 0.9], Role::Probability).unwrap();
        assert_eq!(threshold(&v, 0.5).unwrap().data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn threshold_rejects_intensity() {
        let v = Volume::filled([1, 1, 1], [1.0; 3], Role::Intensity, 3.0);
        assert!(matches!(threshold(&v, 0.5), Err(Error::RoleMismatch { .. })));
    }

    #[test]
    fn role_invariants_enforced() {
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 2.0], Role::Binary).is_err());
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 1.5], Role::Probability).is_err());
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 2.5], Role::Label).is_err());
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 7.0], Role::Label).is_ok());
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0], Role::Label).is_err());
        assert!(Volume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![0.0], Role::Label).is_err());
    }

    #[test]
    fn flatten_matches_layout() {
        let v = Volume::zeros([2, 3, 4], [1.0; 3], Role::Binary);
        assert_eq!(v.flatten([1, 2, 3]), 23);
        assert_eq!(v.unflatten(23), [1, 2, 3]);
        assert_eq!(v.flatten([0, 1, 0]), 4);
    }
}
