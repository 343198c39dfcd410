//! The stack of nested levels `V_0 ⊂ V_1 ⊂ ... ⊂ V_L` with per-level
//! operators, prolongations and local smoothing sets.

use std::collections::HashSet;

use crate::error::{check_len, Error, Result};
use crate::fem::{assemble, build_prolongation, CoefficientField, OperatorPair, Prolongation};
use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct Level {
    pub mesh: Mesh,
    pub ops: OperatorPair,
    /// Interpolation from the previous level; `None` on level 0.
    pub prolongation: Option<Prolongation>,
    /// Dofs of this level that are new or whose basis function changed.
    pub smoothing_set: Vec<usize>,
    /// `a(phi_i, phi_i)`.
    pub diag_stiffness: Vec<f64>,
    /// `b(phi_i, phi_i)`.
    pub diag_mass: Vec<f64>,
}

impl Level {
    fn new(
        mesh: Mesh,
        rho: &CoefficientField,
        prolongation: Option<Prolongation>,
        smoothing_set: Vec<usize>,
    ) -> Result<Self> {
        let ops = assemble(&mesh, rho)?;
        let diag_stiffness = ops.stiffness.diagonal();
        let diag_mass = ops.mass.diagonal();
        Ok(Self {
            mesh,
            ops,
            prolongation,
            smoothing_set,
            diag_stiffness,
            diag_mass,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.ops.dof_count()
    }
}

/// Interior dofs of `fine` whose nodal basis function differs from the one
/// on `coarse`: new vertices, and old vertices touching a triangle of
/// `coarse` that no longer exists in `fine`.
pub fn smoothing_set(coarse: &Mesh, fine: &Mesh) -> Vec<usize> {
    let sorted = |mut v: [usize; 3]| {
        v.sort_unstable();
        v
    };
    let fine_triangles: HashSet<[usize; 3]> = fine
        .triangles()
        .iter()
        .map(|t| sorted(t.vertices))
        .collect();
    let mut changed = vec![false; fine.vertices().len()];
    for v in coarse.vertices().len()..fine.vertices().len() {
        changed[v] = true;
    }
    for t in coarse.triangles() {
        if !fine_triangles.contains(&sorted(t.vertices)) {
            for &v in &t.vertices {
                changed[v] = true;
            }
        }
    }
    fine.interior_vertices()
        .into_iter()
        .filter(|&v| changed[v])
        .map(|v| fine.dof(v).unwrap())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    rho: CoefficientField,
}

impl Hierarchy {
    pub fn new(coarse: Mesh, rho: CoefficientField) -> Result<Self> {
        let level = Level::new(coarse, &rho, None, Vec::new())?;
        Ok(Self {
            levels: vec![level],
            rho,
        })
    }

    /// Appends a mesh refined from the current finest one.
    pub fn push_level(&mut self, fine: Mesh) -> Result<()> {
        let coarse = &self.finest().mesh;
        if fine.level() <= coarse.level() {
            return Err(Error::Lineage(format!(
                "mesh level {} does not refine the finest level {}",
                fine.level(),
                coarse.level()
            )));
        }
        let prolongation = build_prolongation(coarse, &fine)?;
        let set = smoothing_set(coarse, &fine);
        let level = Level::new(fine, &self.rho, Some(prolongation), set)?;
        self.levels.push(level);
        Ok(())
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> Result<&Level> {
        self.levels.get(l).ok_or_else(|| {
            Error::Config(format!(
                "level {l} out of range (finest is {})",
                self.finest_index()
            ))
        })
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().unwrap()
    }

    pub fn finest_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn coefficient(&self) -> &CoefficientField {
        &self.rho
    }

    /// `sum_l |smoothing_set_l|`.
    pub fn smoothing_total(&self) -> usize {
        self.levels.iter().map(|l| l.smoothing_set.len()).sum()
    }

    /// Restricts a finest-level dual vector `b(r, phi_i^L)` to level `l`,
    /// giving `b(r, phi_i^l)`.
    pub fn restrict_dual(&self, l: usize, fine: &[f64]) -> Result<Vec<f64>> {
        self.level(l)?;
        check_len(self.finest().dof_count(), fine.len())?;
        let mut d = fine.to_vec();
        for k in (l + 1..self.levels.len()).rev() {
            d = self.levels[k].prolongation.as_ref().unwrap().restrict(&d)?;
        }
        Ok(d)
    }

    /// Restrictions of a finest-level dual vector to every level, coarsest first.
    pub fn restrict_all(&self, fine: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.finest().dof_count(), fine.len())?;
        let mut out = vec![Vec::new(); self.levels.len()];
        let mut d = fine.to_vec();
        for k in (1..self.levels.len()).rev() {
            let next = self.levels[k].prolongation.as_ref().unwrap().restrict(&d)?;
            out[k] = d;
            d = next;
        }
        out[0] = d;
        Ok(out)
    }

    /// Interpolates a level-`l` coefficient vector up to the finest level.
    pub fn prolongate_to_finest(&self, l: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.level(l)?.dof_count(), v.len())?;
        let mut x = v.to_vec();
        for k in l + 1..self.levels.len() {
            x = self.levels[k]
                .prolongation
                .as_ref()
                .unwrap()
                .prolongate(&x)?;
        }
        Ok(x)
    }
}
