//! P1 stiffness/mass assembly over interior vertices and the prolongation
//! between nested levels.

use std::collections::BTreeMap;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, CsrMatrix};
use crate::mesh::Mesh;

/// Piecewise-constant diffusion coefficient, one value per region label.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    values: BTreeMap<usize, f64>,
    fallback: Option<f64>,
}

impl CoefficientField {
    /// The same value on every region.
    pub fn constant(rho: f64) -> Result<Self> {
        Self::check(rho)?;
        Ok(Self {
            values: BTreeMap::new(),
            fallback: Some(rho),
        })
    }

    pub fn from_regions<I: IntoIterator<Item = (usize, f64)>>(regions: I) -> Result<Self> {
        let values: BTreeMap<usize, f64> = regions.into_iter().collect();
        for &v in values.values() {
            Self::check(v)?;
        }
        Ok(Self {
            values,
            fallback: None,
        })
    }

    fn check(rho: f64) -> Result<()> {
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::Config(format!(
                "coefficient value {rho} must be finite and >= 1"
            )));
        }
        Ok(())
    }

    pub fn get(&self, region: usize) -> Option<f64> {
        self.values.get(&region).copied().or(self.fallback)
    }

    /// True when every region carries the same value.
    pub fn is_constant(&self) -> bool {
        let mut all = self.values.values().copied().chain(self.fallback);
        match all.next() {
            Some(first) => all.all(|v| v == first),
            None => true,
        }
    }

    /// True when every region carries `rho = 1`.
    pub fn is_unit(&self) -> bool {
        self.values
            .values()
            .copied()
            .chain(self.fallback)
            .all(|v| v == 1.0)
    }

    /// Coefficient of every triangle of `mesh`.
    pub fn per_triangle(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        mesh.triangles()
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                self.get(tri.region).ok_or_else(|| {
                    Error::Assembly(format!(
                        "triangle {t} has region {} without a coefficient",
                        tri.region
                    ))
                })
            })
            .collect()
    }
}

/// Gradients of the three barycentric basis functions and the area.
pub fn element_gradients(corners: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let [p0, p1, p2] = *corners;
    let area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = corners[(k + 1) % 3];
        let b = corners[(k + 2) % 3];
        grads[k] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (grads, area)
}

pub fn element_stiffness(corners: &[[f64; 2]; 3], rho: f64) -> [[f64; 3]; 3] {
    let (g, area) = element_gradients(corners);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = rho * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Consistent mass matrix `(area/12) [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Stiffness and consistent mass matrices on the interior dofs. Both share
/// one sparsity pattern.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

impl OperatorPair {
    pub fn new(stiffness: CsrMatrix, mass: CsrMatrix) -> Result<Self> {
        if !stiffness.same_pattern(&mass) {
            return Err(Error::Assembly("stiffness and mass patterns differ".into()));
        }
        Ok(Self { stiffness, mass })
    }

    pub fn dof_count(&self) -> usize {
        self.stiffness.nrows()
    }

    /// `(A - shift M) x`.
    pub fn apply_shifted(&self, shift: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dof_count(), x.len())?;
        Ok((0..self.dof_count())
            .map(|r| self.shifted_row_dot(r, shift, x))
            .collect())
    }

    /// Row `r` of `(A - shift M) x`.
    #[inline]
    pub fn shifted_row_dot(&self, r: usize, shift: f64, x: &[f64]) -> f64 {
        let offs = self.stiffness.row_offsets();
        let cols = self.stiffness.col_indices();
        let (a, m) = (self.stiffness.values(), self.mass.values());
        let mut acc = 0.0;
        for k in offs[r]..offs[r + 1] {
            acc += (a[k] - shift * m[k]) * x[cols[k]];
        }
        acc
    }

    /// `(u^T A u, u^T M u)`.
    pub fn quadratic_forms(&self, u: &[f64]) -> Result<(f64, f64)> {
        let au = self.stiffness.spmv(u)?;
        let mu = self.mass.spmv(u)?;
        Ok((dot(u, &au), dot(u, &mu)))
    }
}

/// Assembles P1 stiffness (weighted by `rho`) and mass over interior dofs.
pub fn assemble(mesh: &Mesh, rho: &CoefficientField) -> Result<OperatorPair> {
    let coeff = rho.per_triangle(mesh)?;
    let n = mesh.dof_count();
    let mut entries: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(mesh.triangles().len() * 9);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let corners = mesh.corners(t);
        let (_, area) = element_gradients(&corners);
        if !(area > 0.0) {
            return Err(Error::Assembly(format!(
                "triangle {t} has non-positive area {area:e}"
            )));
        }
        let k = element_stiffness(&corners, coeff[t]);
        let m = element_mass(area);
        let dofs = tri.vertices.map(|v| mesh.dof(v));
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = dofs[j] else { continue };
                entries.push((di, dj, k[i][j], m[i][j]));
            }
        }
    }
    // stable: contributions to one entry are summed in triangle order
    entries.sort_by_key(|e| (e.0, e.1));

    let mut offsets = vec![0usize; n + 1];
    let mut cols = Vec::new();
    let mut a_vals: Vec<f64> = Vec::new();
    let mut m_vals: Vec<f64> = Vec::new();
    let mut last = None;
    for (r, c, a, m) in entries {
        if last == Some((r, c)) {
            *a_vals.last_mut().unwrap() += a;
            *m_vals.last_mut().unwrap() += m;
        } else {
            cols.push(c);
            a_vals.push(a);
            m_vals.push(m);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for r in 0..n {
        offsets[r + 1] += offsets[r];
    }
    let stiffness = CsrMatrix::from_raw(n, n, offsets.clone(), cols.clone(), a_vals)?;
    let mass = CsrMatrix::from_raw(n, n, offsets, cols, m_vals)?;
    OperatorPair::new(stiffness, mass)
}

/// `u^T A u / u^T M u`.
pub fn rayleigh_quotient(ops: &OperatorPair, u: &[f64]) -> Result<f64> {
    let (num, den) = ops.quadratic_forms(u)?;
    if den == 0.0 {
        return Err(Error::Domain("Rayleigh quotient of the zero vector".into()));
    }
    Ok(num / den)
}

/// Interpolation from coarse interior dofs to fine interior dofs of a
/// refined mesh.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub matrix: CsrMatrix,
}

impl Prolongation {
    pub fn fine_dofs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn coarse_dofs(&self) -> usize {
        self.matrix.ncols()
    }

    /// Coarse coefficients to fine coefficients.
    pub fn prolongate(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        self.matrix.spmv(coarse)
    }

    /// Fine dual vector to coarse dual vector.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>> {
        self.matrix.spmv_transpose(fine)
    }
}

/// Builds the prolongation for a fine mesh obtained from `coarse` by one or
/// more bisection passes.
pub fn build_prolongation(coarse: &Mesh, fine: &Mesh) -> Result<Prolongation> {
    let nc = coarse.vertices().len();
    if fine.vertices().len() < nc || fine.level() <= coarse.level() {
        return Err(Error::Lineage(format!(
            "mesh at level {} is not a refinement of the mesh at level {}",
            fine.level(),
            coarse.level()
        )));
    }
    for (i, (a, b)) in coarse.vertices().iter().zip(fine.vertices()).enumerate() {
        if a.x != b.x || a.y != b.y || a.boundary != b.boundary {
            return Err(Error::Lineage(format!(
                "vertex {i} differs between coarse and fine mesh"
            )));
        }
    }
    // coarse-dof representation of every fine vertex
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(fine.vertices().len());
    for (v, vert) in fine.vertices().iter().enumerate() {
        if v < nc {
            rows.push(coarse.dof(v).map(|d| vec![(d, 1.0)]).unwrap_or_default());
            continue;
        }
        let [a, b] = vert
            .parent_edge
            .ok_or_else(|| Error::Lineage(format!("new vertex {v} has no parent edge")))?;
        if a >= v || b >= v {
            return Err(Error::Lineage(format!(
                "vertex {v} has a parent edge created after it"
            )));
        }
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(d, w) in rows[a].iter().chain(rows[b].iter()) {
            *merged.entry(d).or_insert(0.0) += 0.5 * w;
        }
        rows.push(merged.into_iter().collect());
    }
    let mut offsets = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for v in fine.interior_vertices() {
        for &(d, w) in &rows[v] {
            cols.push(d);
            vals.push(w);
        }
        offsets.push(cols.len());
    }
    let matrix = CsrMatrix::from_raw(fine.dof_count(), coarse.dof_count(), offsets, cols, vals)?;
    Ok(Prolongation { matrix })
}
