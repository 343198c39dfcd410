//! Conforming triangulations refined by newest vertex bisection.
//!
//! Every triangle stores its vertices counter-clockwise with the newest
//! vertex (the peak) in slot [`PEAK_SLOT`]; the refinement edge is the edge
//! opposite the peak. Vertex ids are append-only across refinement, and a
//! vertex created by bisection is identified by the sorted id pair of the
//! edge it splits, never by its coordinates.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const PEAK_SLOT: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    pub boundary: bool,
    pub birth_level: usize,
    /// Endpoints (sorted) of the edge whose midpoint this vertex is.
    pub parent_edge: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise, peak first.
    pub vertices: [usize; 3],
    /// Level at which this triangle was created.
    pub level: usize,
    /// Triangle of the previous level this one was copied or bisected from.
    pub parent: Option<usize>,
    pub region: usize,
}

impl Triangle {
    pub fn peak(&self) -> usize {
        self.vertices[PEAK_SLOT]
    }

    pub fn refinement_edge(&self) -> [usize; 2] {
        [self.vertices[1], self.vertices[2]]
    }

    /// Local edge `k` is the edge opposite slot `k`.
    pub fn edge(&self, k: usize) -> [usize; 2] {
        [self.vertices[(k + 1) % 3], self.vertices[(k + 2) % 3]]
    }
}

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edge list of a mesh with the (at most two) triangles on each edge.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    /// Sorted endpoint pairs.
    pub edges: Vec<[usize; 2]>,
    /// Adjacent triangles; the second is `None` on boundary edges.
    pub triangles: Vec<[Option<usize>; 2]>,
    /// For every triangle, the edge ids opposite slots 0, 1, 2.
    pub tri_edges: Vec<[usize; 3]>,
    /// Edges with more than two adjacent triangles.
    pub overused: Vec<usize>,
}

impl EdgeTable {
    pub fn is_boundary(&self, e: usize) -> bool {
        self.triangles[e][1].is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    triangles: Vec<Triangle>,
    interior_index: Vec<Option<usize>>,
    interior_count: usize,
    level: usize,
}

/// Result of [`Mesh::conformity_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// Vertices sitting on an edge that is still present in the mesh.
    pub hanging_nodes: usize,
    /// Edges used by one triangle although an endpoint is interior.
    pub open_interior_edges: usize,
    /// Edges used by more than two triangles.
    pub overused_edges: usize,
    /// Triangles with non-positive signed area.
    pub orientation_violations: usize,
    /// Smallest interior angle, radians.
    pub min_angle: f64,
}

impl QualityReport {
    pub fn is_conforming(&self) -> bool {
        self.hanging_nodes == 0
            && self.open_interior_edges == 0
            && self.overused_edges == 0
            && self.orientation_violations == 0
    }
}

impl Mesh {
    /// Assembles a mesh, deriving boundary flags for vertices without a
    /// parent edge from the edge-use count.
    fn from_parts(
        mut vertices: Vec<Vertex>,
        triangles: Vec<Triangle>,
        level: usize,
        derive_boundary: bool,
    ) -> Self {
        if derive_boundary {
            let mut uses: HashMap<(usize, usize), u32> =
                HashMap::with_capacity(triangles.len() * 2);
            for t in &triangles {
                for k in 0..3 {
                    let [a, b] = t.edge(k);
                    *uses.entry(edge_key(a, b)).or_insert(0) += 1;
                }
            }
            vertices.iter_mut().for_each(|v| v.boundary = false);
            for ((a, b), n) in uses {
                if n == 1 {
                    vertices[a].boundary = true;
                    vertices[b].boundary = true;
                }
            }
        }
        let mut interior_index = Vec::with_capacity(vertices.len());
        let mut count = 0;
        for v in &vertices {
            if v.boundary {
                interior_index.push(None);
            } else {
                interior_index.push(Some(count));
                count += 1;
            }
        }
        Self {
            vertices,
            triangles,
            interior_index,
            interior_count: count,
            level,
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Number of interior vertices (degrees of freedom).
    pub fn dof_count(&self) -> usize {
        self.interior_count
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.interior_index[vertex]
    }

    pub fn interior_index(&self) -> &[Option<usize>] {
        &self.interior_index
    }

    /// Vertex ids of the interior vertices, in dof order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.interior_index[v].is_some())
            .collect()
    }

    pub fn point(&self, v: usize) -> [f64; 2] {
        [self.vertices[v].x, self.vertices[v].y]
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t].vertices;
        [self.point(a), self.point(b), self.point(c)]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p, q, r] = self.corners(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Longest edge length of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        dist(p, q).max(dist(q, r)).max(dist(r, p))
    }

    pub fn edge_length(&self, e: [usize; 2]) -> f64 {
        dist(self.point(e[0]), self.point(e[1]))
    }

    /// Interior angles of triangle `t` at slots 0, 1, 2.
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let c = self.corners(t);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let p = c[k];
            let u = [c[(k + 1) % 3][0] - p[0], c[(k + 1) % 3][1] - p[1]];
            let v = [c[(k + 2) % 3][0] - p[0], c[(k + 2) % 3][1] - p[1]];
            let cross = u[0] * v[1] - u[1] * v[0];
            let dotp = u[0] * v[0] + u[1] * v[1];
            out[k] = cross.abs().atan2(dotp);
        }
        out
    }

    pub fn edge_table(&self) -> EdgeTable {
        let nt = self.triangles.len();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(nt * 2);
        let mut edges = Vec::with_capacity(nt * 2);
        let mut adj: Vec<[Option<usize>; 2]> = Vec::with_capacity(nt * 2);
        let mut tri_edges = Vec::with_capacity(nt);
        let mut overused = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut ids = [0usize; 3];
            for (k, id) in ids.iter_mut().enumerate() {
                let [a, b] = tri.edge(k);
                let key = edge_key(a, b);
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    adj.push([None, None]);
                    edges.len() - 1
                });
                match adj[e] {
                    [None, _] => adj[e][0] = Some(t),
                    [Some(_), None] => adj[e][1] = Some(t),
                    _ => overused.push(e),
                }
                *id = e;
            }
            tri_edges.push(ids);
        }
        overused.sort_unstable();
        overused.dedup();
        EdgeTable {
            edges,
            triangles: adj,
            tri_edges,
            overused,
        }
    }

    /// Triangles incident to every vertex, in ascending triangle id.
    pub fn vertex_stars(&self) -> Vec<Vec<usize>> {
        let mut stars = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in &tri.vertices {
                stars[v].push(t);
            }
        }
        stars
    }

    /// Bisects every marked triangle at least once and closes the result
    /// to a conforming mesh one level finer.
    pub fn nvb_refine(&self, marked: &[usize]) -> Result<Mesh> {
        let table = self.edge_table();
        let mut cut = vec![false; table.edges.len()];
        let mut stack = Vec::new();
        for &t in marked {
            if t >= self.triangles.len() {
                return Err(Error::Config(format!(
                    "marked triangle {t} does not exist ({} triangles)",
                    self.triangles.len()
                )));
            }
            let e = table.tri_edges[t][PEAK_SLOT];
            if !cut[e] {
                cut[e] = true;
                stack.push(e);
            }
        }
        // closure: a triangle with any cut edge must have its refinement edge cut
        while let Some(e) = stack.pop() {
            for t in table.triangles[e].iter().flatten() {
                let r = table.tri_edges[*t][PEAK_SLOT];
                if !cut[r] {
                    cut[r] = true;
                    stack.push(r);
                }
            }
        }
        Ok(self.bisect_cut_edges(&table, &cut))
    }

    /// Splits every edge: each triangle is bisected three times into four
    /// children, halving the mesh size.
    pub fn refine_uniform(&self) -> Mesh {
        let table = self.edge_table();
        let cut = vec![true; table.edges.len()];
        self.bisect_cut_edges(&table, &cut)
    }

    /// Bisects every triangle at its refinement edge if that edge is cut,
    /// then each child again if the child's refinement edge (an edge of the
    /// parent) is cut. `cut` must be closed under the refinement-edge rule.
    fn bisect_cut_edges(&self, table: &EdgeTable, cut: &[bool]) -> Mesh {
        let level = self.level + 1;
        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; table.edges.len()];
        let mut triangles = Vec::with_capacity(self.triangles.len() * 2);

        let mut mid = |e: usize, vertices: &mut Vec<Vertex>| -> usize {
            if midpoint[e] == usize::MAX {
                let [a, b] = table.edges[e];
                let (va, vb) = (&vertices[a], &vertices[b]);
                vertices.push(Vertex {
                    x: 0.5 * (va.x + vb.x),
                    y: 0.5 * (va.y + vb.y),
                    boundary: table.is_boundary(e),
                    birth_level: level,
                    parent_edge: Some([a, b]),
                });
                midpoint[e] = vertices.len() - 1;
            }
            midpoint[e]
        };
        let split = |[p, a, b]: [usize; 3], m: usize| ([m, p, a], [m, b, p]);

        for (t, tri) in self.triangles.iter().enumerate() {
            let edges = table.tri_edges[t];
            let child = |vertices: [usize; 3]| Triangle {
                vertices,
                level,
                parent: Some(t),
                region: tri.region,
            };
            if !cut[edges[0]] {
                triangles.push(Triangle {
                    parent: Some(t),
                    ..tri.clone()
                });
                continue;
            }
            let m = mid(edges[0], &mut vertices);
            let (left, right) = split(tri.vertices, m);
            // left = [m, v0, v1] refines along (v0, v1), opposite slot 2 of the parent
            // right = [m, v2, v0] refines along (v2, v0), opposite slot 1
            for (c, e) in [(left, edges[2]), (right, edges[1])] {
                if cut[e] {
                    let m2 = mid(e, &mut vertices);
                    let (g1, g2) = split(c, m2);
                    triangles.push(child(g1));
                    triangles.push(child(g2));
                } else {
                    triangles.push(child(c));
                }
            }
        }
        Mesh::from_parts(vertices, triangles, level, false)
    }

    pub fn conformity_check(&self) -> QualityReport {
        let table = self.edge_table();
        let mut present: HashMap<(usize, usize), ()> = HashMap::with_capacity(table.edges.len());
        for e in &table.edges {
            present.insert((e[0], e[1]), ());
        }
        let hanging_nodes = self
            .vertices
            .iter()
            .filter(
                |v| matches!(v.parent_edge, Some([a, b]) if present.contains_key(&edge_key(a, b))),
            )
            .count();
        let open_interior_edges = (0..table.edges.len())
            .filter(|&e| table.is_boundary(e))
            .filter(|&e| {
                let [a, b] = table.edges[e];
                !self.vertices[a].boundary || !self.vertices[b].boundary
            })
            .count();
        let orientation_violations = (0..self.triangles.len())
            .filter(|&t| !(self.signed_area(t) > 0.0))
            .count();
        let min_angle = (0..self.triangles.len())
            .flat_map(|t| self.angles(t))
            .fold(f64::INFINITY, f64::min);
        QualityReport {
            hanging_nodes,
            open_interior_edges,
            overused_edges: table.overused.len(),
            orientation_violations,
            min_angle,
        }
    }

    /// Plain-text dump: a header line, one line per vertex, one per triangle.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vertices {} triangles {} level {}",
            self.vertices.len(),
            self.triangles.len(),
            self.level
        );
        for v in &self.vertices {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                v.x,
                v.y,
                u8::from(v.boundary),
                v.birth_level
            );
        }
        for t in &self.triangles {
            let parent = t.parent.map_or(-1, |p| p as i64);
            let [a, b, c] = t.vertices;
            let _ = writeln!(
                out,
                "{a} {b} {c} {PEAK_SLOT} {parent} {} {}",
                t.region, t.level
            );
        }
        out
    }

    /// Parses [`Mesh::dump`] output. Parent edges are not part of the format.
    pub fn load(text: &str) -> Result<Mesh> {
        let bad = |msg: &str| Error::Config(format!("mesh file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split_whitespace()
            .collect();
        if header.len() != 6
            || header[0] != "vertices"
            || header[2] != "triangles"
            || header[4] != "level"
        {
            return Err(bad("malformed header"));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(&format!("bad integer {s:?}")))
        };
        let nv = parse_usize(header[1])?;
        let nt = parse_usize(header[3])?;
        let level = parse_usize(header[5])?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f: Vec<&str> = lines
                .next()
                .ok_or_else(|| bad("missing vertex line"))?
                .split_whitespace()
                .collect();
            if f.len() != 4 {
                return Err(bad("vertex line needs 4 fields"));
            }
            let coord = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(&format!("bad coordinate {s:?}")))
            };
            vertices.push(Vertex {
                x: coord(f[0])?,
                y: coord(f[1])?,
                boundary: parse_usize(f[2])? != 0,
                birth_level: parse_usize(f[3])?,
                parent_edge: None,
            });
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f: Vec<&str> = lines
                .next()
                .ok_or_else(|| bad("missing triangle line"))?
                .split_whitespace()
                .collect();
            if f.len() != 7 {
                return Err(bad("triangle line needs 7 fields"));
            }
            let mut vs = [parse_usize(f[0])?, parse_usize(f[1])?, parse_usize(f[2])?];
            if vs.iter().any(|&v| v >= nv) {
                return Err(bad("triangle references a missing vertex"));
            }
            vs.rotate_left(parse_usize(f[3])? % 3);
            let parent = match f[4].parse::<i64>().map_err(|_| bad("bad parent"))? {
                p if p < 0 => None,
                p => Some(p as usize),
            };
            triangles.push(Triangle {
                vertices: vs,
                level: parse_usize(f[6])?,
                parent,
                region: parse_usize(f[5])?,
            });
        }
        Ok(Mesh::from_parts(vertices, triangles, level, false))
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// The problem domains known to the mesh generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// `(0,1)^2`.
    UnitSquare,
    /// `(-1,1)^2` without `[0,1) x (-1,0]`.
    LShape,
    /// `(-1,1)^2` without the slit `[0,1] x {0}`.
    Crack,
    /// `(0,1)^2` split into four labelled quadrants.
    FourQuadrant,
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::UnitSquare),
            "lshape" => Ok(Self::LShape),
            "crack" => Ok(Self::Crack),
            "fourquadrant" => Ok(Self::FourQuadrant),
            other => Err(Error::Config(format!(
                "unknown domain {other:?} (expected square, lshape, crack or fourquadrant)"
            ))),
        }
    }
}

/// Region labels of the four-quadrant domain.
pub mod region {
    /// `(0,0.5) x (0.5,1)`
    pub const Q1: usize = 1;
    /// `(0.5,1) x (0.5,1)`
    pub const Q2: usize = 2;
    /// `(0,0.5) x (0,0.5)`
    pub const Q3: usize = 3;
    /// `(0.5,1) x (0,0.5)`
    pub const Q4: usize = 4;
}

/// How each grid cell is cut into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellPattern {
    /// Every cell along its south-west/north-east diagonal.
    #[default]
    Diagonal,
    /// Diagonals alternate in a checkerboard, so the pattern reproduces
    /// itself under uniform bisection.
    UnionJack,
}

/// Coarse-mesh descriptor: a domain and the number of grid cells per unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub cells_per_unit: usize,
    pub pattern: CellPattern,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, cells_per_unit: usize) -> Self {
        Self {
            kind,
            cells_per_unit,
            pattern: CellPattern::Diagonal,
        }
    }
}

/// Builds the coarse structured triangulation of a domain: a grid of square
/// cells, each cut in two according to `spec.pattern`.
pub fn make_initial_mesh(spec: &DomainSpec) -> Result<Mesh> {
    let n = spec.cells_per_unit;
    if n == 0 {
        return Err(Error::Config("cells_per_unit must be positive".into()));
    }
    if spec.kind == DomainKind::FourQuadrant && n % 2 != 0 {
        return Err(Error::Config(
            "four-quadrant mesh needs an even cell count so quadrant interfaces are resolved"
                .into(),
        ));
    }
    let (origin, cells) = match spec.kind {
        DomainKind::UnitSquare | DomainKind::FourQuadrant => (0.0, n),
        DomainKind::LShape | DomainKind::Crack => (-1.0, 2 * n),
    };
    let h = 1.0 / n as f64;
    let coord = |i: usize| origin + i as f64 * h;
    let zero_row = match spec.kind {
        DomainKind::Crack => Some(n),
        _ => None,
    };

    // grid vertex (i, j, lower-slit copy?) -> id, created on first use
    let mut ids: HashMap<(usize, usize, bool), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    for j in 0..cells {
        for i in 0..cells {
            let cx = coord(i) + 0.5 * h;
            let cy = coord(j) + 0.5 * h;
            if spec.kind == DomainKind::LShape && cx > 0.0 && cy < 0.0 {
                continue;
            }
            let below_slit = cy < 0.0;
            let mut vid = |i: usize, j: usize| -> usize {
                // slit points with x > 0 get one vertex per face
                let lower = Some(j) == zero_row && coord(i) > 0.0 && below_slit;
                *ids.entry((i, j, lower)).or_insert_with(|| {
                    vertices.push(Vertex {
                        x: coord(i),
                        y: coord(j),
                        boundary: false,
                        birth_level: 0,
                        parent_edge: None,
                    });
                    vertices.len() - 1
                })
            };
            let p00 = vid(i, j);
            let p10 = vid(i + 1, j);
            let p11 = vid(i + 1, j + 1);
            let p01 = vid(i, j + 1);
            let region = match spec.kind {
                DomainKind::FourQuadrant => match (cx < 0.5, cy > 0.5) {
                    (true, true) => region::Q1,
                    (false, true) => region::Q2,
                    (true, false) => region::Q3,
                    (false, false) => region::Q4,
                },
                _ => 0,
            };
            let halves = match spec.pattern {
                CellPattern::UnionJack if (i + j) % 2 == 1 => [[p00, p10, p01], [p10, p11, p01]],
                _ => [[p00, p10, p11], [p00, p11, p01]],
            };
            for tri in halves {
                triangles.push(Triangle {
                    vertices: tri,
                    level: 0,
                    parent: None,
                    region,
                });
            }
        }
    }
    let mut mesh = Mesh::from_parts(vertices, triangles, 0, true);
    for t in 0..mesh.triangles.len() {
        orient_longest_edge(&mut mesh, t);
    }
    Ok(mesh)
}

/// Rotates triangle `t` so that its peak is opposite its longest edge.
fn orient_longest_edge(mesh: &mut Mesh, t: usize) {
    let vs = mesh.triangles[t].vertices;
    let len = |k: usize| {
        let [a, b] = [vs[(k + 1) % 3], vs[(k + 2) % 3]];
        mesh.edge_length([a, b])
    };
    let mut best = 0;
    for k in 1..3 {
        if len(k) > len(best) * (1.0 + 1e-12) {
            best = k;
        }
    }
    mesh.triangles[t].vertices.rotate_left(best);
}
