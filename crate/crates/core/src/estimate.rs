//! Residual a posteriori error indicators and marking.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::fem::{element_gradients, element_mass, CoefficientField};
use crate::mesh::{EdgeTable, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorKind {
    /// One value per triangle.
    Element,
    /// One value per interior edge.
    Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    pub kind: IndicatorKind,
    /// Triangle ids, or edge ids of the mesh's [`EdgeTable`].
    pub ids: Vec<usize>,
    pub values: Vec<f64>,
    /// The triangles each item refers to; both entries agree for elements.
    pub support: Vec<[usize; 2]>,
    /// `sqrt(sum values^2)`.
    pub total: f64,
}

impl Indicators {
    fn new(
        kind: IndicatorKind,
        ids: Vec<usize>,
        squared: Vec<f64>,
        support: Vec<[usize; 2]>,
    ) -> Self {
        let total = squared.iter().sum::<f64>().sqrt();
        let values = squared.into_iter().map(|v| v.max(0.0).sqrt()).collect();
        Self {
            kind,
            ids,
            values,
            support,
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-triangle data shared by both estimators.
struct ElementData {
    /// Gradient of `u_h`, constant on the triangle.
    grad: Vec<[f64; 2]>,
    /// `||u_h||^2_{0,T}`.
    mass: Vec<f64>,
    /// Longest edge.
    h: Vec<f64>,
}

fn element_data(mesh: &Mesh, u: &[f64]) -> Result<ElementData> {
    check_len(mesh.dof_count(), u.len())?;
    let nt = mesh.triangles().len();
    let mut data = ElementData {
        grad: Vec::with_capacity(nt),
        mass: Vec::with_capacity(nt),
        h: Vec::with_capacity(nt),
    };
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = element_gradients(&mesh.corners(t));
        let local: Vec<f64> = tri
            .vertices
            .iter()
            .map(|&v| mesh.dof(v).map_or(0.0, |d| u[d]))
            .collect();
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += local[k] * grads[k][0];
            g[1] += local[k] * grads[k][1];
        }
        let m = element_mass(area);
        let mut norm2 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                norm2 += local[i] * m[i][j] * local[j];
            }
        }
        data.grad.push(g);
        data.mass.push(norm2);
        data.h.push(mesh.diameter(t));
    }
    Ok(data)
}

/// Unit normal of a mesh edge (orientation irrelevant for squared jumps).
fn edge_normal(mesh: &Mesh, e: [usize; 2]) -> ([f64; 2], f64) {
    let [p, q] = [mesh.point(e[0]), mesh.point(e[1])];
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len = dx.hypot(dy);
    ([dy / len, -dx / len], len)
}

/// `(q1 - q2) . nu` over every interior edge, with `q = scale_T grad u_T`.
fn interior_jumps(
    mesh: &Mesh,
    table: &EdgeTable,
    data: &ElementData,
    scale: &[f64],
) -> Vec<(usize, [usize; 2], f64, f64)> {
    let mut out = Vec::new();
    for (e, adj) in table.triangles.iter().enumerate() {
        if let [Some(a), Some(b)] = *adj {
            let (nu, len) = edge_normal(mesh, table.edges[e]);
            let ga = data.grad[a];
            let gb = data.grad[b];
            let jump = (scale[a] * ga[0] - scale[b] * gb[0]) * nu[0]
                + (scale[a] * ga[1] - scale[b] * gb[1]) * nu[1];
            out.push((e, [a, b], len, jump));
        }
    }
    out
}

/// Element indicators for `rho = 1`:
/// `eta_T^2 = h_T^2 ||lambda u||_T^2 + sum_{interior E in dT} h_E^2 [[grad u . nu]]^2`.
pub fn estimate_standard(
    mesh: &Mesh,
    rho: &CoefficientField,
    lambda: f64,
    u: &[f64],
) -> Result<Indicators> {
    if !rho.is_unit() {
        return Err(Error::Misuse(
            "the standard estimator assumes rho = 1; use estimate_robust for coefficient problems"
                .into(),
        ));
    }
    let data = element_data(mesh, u)?;
    let table = mesh.edge_table();
    let nt = mesh.triangles().len();
    let mut squared: Vec<f64> = (0..nt)
        .map(|t| data.h[t].powi(2) * lambda * lambda * data.mass[t])
        .collect();
    for (_, [a, b], len, jump) in interior_jumps(mesh, &table, &data, &vec![1.0; nt]) {
        let term = len * len * jump * jump;
        squared[a] += term;
        squared[b] += term;
    }
    Ok(Indicators::new(
        IndicatorKind::Element,
        (0..nt).collect(),
        squared,
        (0..nt).map(|t| [t, t]).collect(),
    ))
}

/// Vertices around which the coefficient is not quasi-monotone: for some
/// value `r` the star triangles with `rho >= r` are not connected through
/// edges containing the vertex.
pub fn singular_vertices(mesh: &Mesh, rho_t: &[f64]) -> Vec<usize> {
    let stars = mesh.vertex_stars();
    let mut out = Vec::new();
    for (v, star) in stars.iter().enumerate() {
        if star.len() < 2 {
            continue;
        }
        let shares_edge = |a: usize, b: usize| {
            let va = mesh.triangles()[a].vertices;
            let vb = mesh.triangles()[b].vertices;
            va.iter().filter(|&&x| x != v && vb.contains(&x)).count() == 1
        };
        let connected_above = |r: f64| {
            let members: Vec<usize> = star.iter().copied().filter(|&t| rho_t[t] >= r).collect();
            let mut seen = vec![false; members.len()];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..members.len() {
                    if !seen[j] && shares_edge(members[i], members[j]) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        if !star.iter().all(|&t| connected_above(rho_t[t])) {
            out.push(v);
        }
    }
    out
}

/// Coordinates that override the automatic singular-vertex detection.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SingularNodes {
    #[default]
    Detect,
    Points(Vec<[f64; 2]>),
}

fn resolve_singular(mesh: &Mesh, rho_t: &[f64], rule: &SingularNodes) -> Vec<bool> {
    let mut flags = vec![false; mesh.vertices().len()];
    match rule {
        SingularNodes::Detect => {
            for v in singular_vertices(mesh, rho_t) {
                flags[v] = true;
            }
        }
        SingularNodes::Points(points) => {
            for (v, flag) in flags.iter_mut().enumerate() {
                let p = mesh.point(v);
                *flag = points
                    .iter()
                    .any(|q| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
            }
        }
    }
    flags
}

/// Edge indicators robust in the coefficient contrast:
/// `eta_E^2 = sum_{T in Omega_E} Lambda_T h_T^2 lambda^2 ||u||_T^2 / rho_T
///           + Lambda_E h_E^2 [[rho grad u . nu]]^2 / rho_E`.
pub fn estimate_robust(
    mesh: &Mesh,
    rho: &CoefficientField,
    lambda: f64,
    u: &[f64],
    singular: &SingularNodes,
) -> Result<Indicators> {
    let rho_t = rho.per_triangle(mesh)?;
    let data = element_data(mesh, u)?;
    let table = mesh.edge_table();
    let flags = resolve_singular(mesh, &rho_t, singular);
    let stars = mesh.vertex_stars();

    let contrast: Vec<f64> = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            if !tri.vertices.iter().any(|&v| flags[v]) {
                return 1.0;
            }
            tri.vertices
                .iter()
                .flat_map(|&v| stars[v].iter())
                .map(|&s| rho_t[t] / rho_t[s])
                .fold(1.0, f64::max)
        })
        .collect();

    let mut ids = Vec::new();
    let mut squared = Vec::new();
    let mut support = Vec::new();
    for (e, [a, b], len, jump) in interior_jumps(mesh, &table, &data, &rho_t) {
        let volume =
            |t: usize| contrast[t] * data.h[t].powi(2) * lambda * lambda * data.mass[t] / rho_t[t];
        let lambda_e = contrast[a].max(contrast[b]);
        let rho_e = rho_t[a].max(rho_t[b]);
        ids.push(e);
        squared.push(volume(a) + volume(b) + lambda_e * len * len * jump * jump / rho_e);
        support.push([a, b]);
    }
    Ok(Indicators::new(IndicatorKind::Edge, ids, squared, support))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marking {
    /// Smallest set carrying a `theta` fraction of the squared total.
    Dorfler { theta: f64 },
    /// Items with value at least `theta` times the largest.
    Maximum { theta: f64 },
    /// Every element; the driver refines uniformly.
    Uniform,
}

impl Marking {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marking::Dorfler { theta } | Marking::Maximum { theta }
                if !(theta > 0.0 && theta <= 1.0) =>
            {
                Err(Error::Config(format!("theta = {theta} must lie in (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn with_theta(self, theta: f64) -> Self {
        match self {
            Marking::Dorfler { .. } => Marking::Dorfler { theta },
            Marking::Maximum { .. } => Marking::Maximum { theta },
            Marking::Uniform => Marking::Uniform,
        }
    }
}

impl FromStr for Marking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dorfler" => Ok(Marking::Dorfler { theta: 0.5 }),
            "maximum" => Ok(Marking::Maximum { theta: 0.5 }),
            "uniform" => Ok(Marking::Uniform),
            other => Err(Error::Config(format!(
                "unknown marking {other:?} (expected dorfler, maximum or uniform)"
            ))),
        }
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marking::Dorfler { theta } => write!(f, "dorfler({theta})"),
            Marking::Maximum { theta } => write!(f, "maximum({theta})"),
            Marking::Uniform => write!(f, "uniform"),
        }
    }
}

/// Positions (into `ind.values`) of the marked items, in selection order.
pub fn mark_items(ind: &Indicators, strategy: Marking) -> Result<Vec<usize>> {
    strategy.validate()?;
    let mut order: Vec<usize> = (0..ind.len()).collect();
    order.sort_by(|&a, &b| {
        ind.values[b]
            .total_cmp(&ind.values[a])
            .then(ind.ids[a].cmp(&ind.ids[b]))
    });
    Ok(match strategy {
        Marking::Uniform => order,
        Marking::Maximum { theta } => {
            let max = order.first().map_or(0.0, |&i| ind.values[i]);
            order
                .into_iter()
                .filter(|&i| ind.values[i] > 0.0 && ind.values[i] >= theta * max)
                .collect()
        }
        Marking::Dorfler { theta } => {
            // summing in selection order makes theta = 1 reach the target exactly
            let target = theta * order.iter().map(|&i| ind.values[i].powi(2)).sum::<f64>();
            let mut acc = 0.0;
            let mut chosen = Vec::new();
            for i in order {
                if acc >= target || ind.values[i] == 0.0 {
                    break;
                }
                acc += ind.values[i].powi(2);
                chosen.push(i);
            }
            chosen
        }
    })
}

/// Triangles to refine: the support of every marked item, ascending.
pub fn mark(ind: &Indicators, strategy: Marking) -> Result<Vec<usize>> {
    let items = mark_items(ind, strategy)?;
    let set: BTreeSet<usize> = items.iter().flat_map(|&i| ind.support[i]).collect();
    Ok(set.into_iter().collect())
}
