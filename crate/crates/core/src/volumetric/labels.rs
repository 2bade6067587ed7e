use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::oracle::GraspLabelSet;

/// Voxel classes of the label grid, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelClass {
    Contact = 0,
    Approach = 1,
    Empty = 2,
}

impl VoxelClass {
    pub const ALL: [VoxelClass; 3] = [VoxelClass::Contact, VoxelClass::Approach, VoxelClass::Empty];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[self.index()] = 1.0;
        p
    }
}

/// Per-voxel class probabilities `[p_contact, p_approach, p_empty]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub spec: GridSpec,
    pub probs: Vec<[f64; 3]>,
}

impl LabelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            probs: vec![VoxelClass::Empty.one_hot(); spec.len()],
        }
    }

    pub fn from_probs(spec: GridSpec, probs: Vec<[f64; 3]>) -> Result<Self> {
        if probs.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} label voxels for a grid of {}",
                probs.len(),
                spec.len()
            )));
        }
        for p in &probs {
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(Error::invalid("label probabilities", format!("{p:?} is not a simplex point")));
            }
        }
        Ok(Self { spec, probs })
    }

    pub fn channel(&self, class: VoxelClass) -> Vec<f64> {
        self.probs.iter().map(|p| p[class.index()]).collect()
    }

    /// Arg-max class per voxel (ties resolved in storage order).
    pub fn classes(&self) -> Vec<VoxelClass> {
        self.probs
            .iter()
            .map(|p| {
                let mut best = VoxelClass::Contact;
                for c in VoxelClass::ALL {
                    if p[c.index()] > p[best.index()] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn count(&self, class: VoxelClass) -> usize {
        self.probs.iter().filter(|p| p[class.index()] == 1.0).count()
    }

    /// Grows the contact and approach classes of a one-hot grid by `radius`
    /// voxels (Chebyshev). Contact wins over approach, approach over empty.
    pub fn dilated(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let spec = self.spec;
        let n = spec.n as isize;
        let r = radius as isize;
        let hard = self.classes();
        let mut out = vec![VoxelClass::Empty; spec.len()];
        for (idx, class) in hard.iter().enumerate() {
            if *class == VoxelClass::Empty {
                continue;
            }
            let [i, j, k] = spec.coords(idx).map(|x| x as isize);
            for di in -r..=r {
                for dj in -r..=r {
                    for dk in -r..=r {
                        let (a, b, c) = (i + di, j + dj, k + dk);
                        if a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n {
                            continue;
                        }
                        let t = spec.index(a as usize, b as usize, c as usize);
                        if (*class as usize) < (out[t] as usize) {
                            out[t] = *class;
                        }
                    }
                }
            }
        }
        Self {
            spec,
            probs: out.into_iter().map(VoxelClass::one_hot).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabelGridBuild {
    pub grid: LabelGrid,
    /// Contact or approach points that fell outside the grid.
    pub skipped: usize,
}

/// One-hot ground-truth grid: voxels holding a contact of a reachable label
/// are contact space, voxels holding an approach point of a collision-free
/// approach are gripper space, the rest is empty. Contact takes precedence.
pub fn build_label_grid(labels: &GraspLabelSet, spec: &GridSpec) -> Result<LabelGridBuild> {
    spec.validate()?;
    let mut classes = vec![VoxelClass::Empty; spec.len()];
    let mut skipped = 0;
    let mut mark = |p, class: VoxelClass, classes: &mut Vec<VoxelClass>| match spec.voxel_of(p) {
        Some([i, j, k]) => {
            let idx = spec.index(i, j, k);
            if (class as usize) < (classes[idx] as usize) {
                classes[idx] = class;
            }
        }
        None => skipped += 1,
    };
    for label in &labels.labels {
        if !label.reachable {
            continue;
        }
        mark(&label.config.c, VoxelClass::Contact, &mut classes);
        for (t, sigma) in label.approach_points.iter().zip(&label.config.collision_scores) {
            if *sigma > 0.5 {
                mark(t, VoxelClass::Approach, &mut classes);
            }
        }
    }
    Ok(LabelGridBuild {
        grid: LabelGrid {
            spec: *spec,
            probs: classes.into_iter().map(VoxelClass::one_hot).collect(),
        },
        skipped,
    })
}
