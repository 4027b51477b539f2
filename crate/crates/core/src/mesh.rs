//! Conforming 2D triangulations with tagged boundary edges.
//!
//! Meshes are immutable after construction; refinement returns a new mesh.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<([usize; 2], BoundaryTag)>,
}

/// Signed area of the triangle (a, b, c); positive for counter-clockwise order.
pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Undirected edges keyed by sorted vertex pair, with the triangles adjacent to each.
    pub fn edge_adjacency(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        map
    }

    /// Checks orientation, edge-manifoldness, boundary closure and index ranges.
    pub fn validate(&self) -> Result<()> {
        let nv = self.n_vertices();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v} (have {nv})"
                    )));
                }
            }
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area"
                )));
            }
        }
        let adjacency = self.edge_adjacency();
        for (edge, tris) in &adjacency {
            if tris.len() > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge {edge:?} belongs to {} triangles",
                    tris.len()
                )));
            }
        }
        let mut tagged: Vec<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|&([a, b], _)| edge_key(a, b))
            .collect();
        tagged.sort_unstable();
        if tagged.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMesh("duplicate boundary edge".into()));
        }
        let mut topological: Vec<(usize, usize)> = adjacency
            .iter()
            .filter(|(_, tris)| tris.len() == 1)
            .map(|(&edge, _)| edge)
            .collect();
        topological.sort_unstable();
        if tagged != topological {
            return Err(Error::InvalidMesh(
                "boundary edges do not cover the topological boundary".into(),
            ));
        }
        Ok(())
    }
}

/// Structured mesh of the unit square: `(n+1)^2` vertices, `2 n^2` triangles.
///
/// Every grid cell is split along the top-left-to-bottom-right diagonal and
/// all boundary edges are tagged Dirichlet.
pub fn generate_unit_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidMesh("unit square needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v01]);
            triangles.push([v10, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_edges.push(([idx(i, 0), idx(i + 1, 0)], BoundaryTag::Dirichlet));
        boundary_edges.push(([idx(i, n), idx(i + 1, n)], BoundaryTag::Dirichlet));
        boundary_edges.push(([idx(0, i), idx(0, i + 1)], BoundaryTag::Dirichlet));
        boundary_edges.push(([idx(n, i), idx(n, i + 1)], BoundaryTag::Dirichlet));
    }
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
    })
}

/// Splits every triangle into 4 congruent children via edge midpoints.
///
/// Boundary tags are inherited by the two child edges of each boundary edge.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
            let pa = vertices[a];
            let pb = vertices[b];
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, c] in &mesh.triangles {
        let mab = mid(a, b, &mut vertices);
        let mbc = mid(b, c, &mut vertices);
        let mca = mid(c, a, &mut vertices);
        triangles.push([a, mab, mca]);
        triangles.push([b, mbc, mab]);
        triangles.push([c, mca, mbc]);
        triangles.push([mab, mbc, mca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for &([a, b], tag) in &mesh.boundary_edges {
        let m = mid(a, b, &mut vertices);
        boundary_edges.push(([a, m], tag));
        boundary_edges.push(([m, b], tag));
    }
    Mesh {
        vertices,
        triangles,
        boundary_edges,
    }
}

/// Unit disk mesh: regular hexagon fan refined `level` times, boundary
/// vertices projected radially onto the unit circle after each refinement.
pub fn generate_unit_disk(level: usize) -> Mesh {
    let mut vertices = vec![[0.0, 0.0]];
    for k in 0..6 {
        let phi = std::f64::consts::FRAC_PI_3 * k as f64;
        vertices.push([phi.cos(), phi.sin()]);
    }
    let mut triangles = Vec::with_capacity(6);
    for k in 0..6 {
        triangles.push([0, 1 + k, 1 + (k + 1) % 6]);
    }
    let boundary_edges = (0..6)
        .map(|k| ([1 + k, 1 + (k + 1) % 6], BoundaryTag::Dirichlet))
        .collect();
    let mut mesh = Mesh {
        vertices,
        triangles,
        boundary_edges,
    };
    for _ in 0..level {
        mesh = refine_uniform(&mesh);
        for &([a, b], _) in &mesh.boundary_edges.clone() {
            for v in [a, b] {
                let p = mesh.vertices[v];
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                mesh.vertices[v] = [p[0] / r, p[1] / r];
            }
        }
    }
    mesh
}

/// Reads a Gmsh MSH 2.2 ASCII file with 2-node lines (boundary) and 3-node
/// triangles. Every physical group maps to a Dirichlet boundary unless listed
/// in `neumann_groups`.
pub fn read_msh_with(path: &Path, neumann_groups: &[i32]) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text, neumann_groups)
}

pub fn read_msh(path: &Path) -> Result<Mesh> {
    read_msh_with(path, &[])
}

pub fn parse_msh(text: &str, neumann_groups: &[i32]) -> Result<Mesh> {
    let mut lines = text.lines().map(str::trim);
    let mut vertices = Vec::new();
    let mut id_to_index: HashMap<usize, usize> = HashMap::new();
    let mut triangles = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut version_seen = false;

    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let header = lines
                    .next()
                    .ok_or_else(|| Error::MshParse("truncated $MeshFormat".into()))?;
                let version = header.split_whitespace().next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(Error::MshVersion(version.to_string()));
                }
                version_seen = true;
            }
            "$Nodes" => {
                let count: usize = lines
                    .next()
                    .and_then(|l| l.parse().ok())
                    .ok_or_else(|| Error::MshParse("bad node count".into()))?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::MshParse("truncated node block".into()))?;
                    let mut parts = line.split_whitespace();
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::MshParse(format!("bad node line: {line}")))?;
                    let x: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::MshParse(format!("bad node line: {line}")))?;
                    let y: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::MshParse(format!("bad node line: {line}")))?;
                    id_to_index.insert(id, vertices.len());
                    vertices.push([x, y]);
                }
            }
            "$Elements" => {
                let count: usize = lines
                    .next()
                    .and_then(|l| l.parse().ok())
                    .ok_or_else(|| Error::MshParse("bad element count".into()))?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::MshParse("truncated element block".into()))?;
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(Error::MshParse(format!("bad element line: {line}")));
                    }
                    let typ: i32 = fields[1]
                        .parse()
                        .map_err(|_| Error::MshParse(format!("bad element line: {line}")))?;
                    let n_tags: usize = fields[2]
                        .parse()
                        .map_err(|_| Error::MshParse(format!("bad element line: {line}")))?;
                    let physical: i32 = if n_tags > 0 {
                        fields
                            .get(3)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::MshParse(format!("bad element line: {line}")))?
                    } else {
                        0
                    };
                    let node_ids = &fields[3 + n_tags..];
                    let resolve = |s: &str| -> Result<usize> {
                        let id: usize = s
                            .parse()
                            .map_err(|_| Error::MshParse(format!("bad node ref: {s}")))?;
                        id_to_index
                            .get(&id)
                            .copied()
                            .ok_or(Error::MshDanglingNode { node: id })
                    };
                    match typ {
                        1 => {
                            if node_ids.len() != 2 {
                                return Err(Error::MshParse(format!("bad line element: {line}")));
                            }
                            let tag = if neumann_groups.contains(&physical) {
                                BoundaryTag::Neumann
                            } else {
                                BoundaryTag::Dirichlet
                            };
                            boundary_edges.push(([resolve(node_ids[0])?, resolve(node_ids[1])?], tag));
                        }
                        2 => {
                            if node_ids.len() != 3 {
                                return Err(Error::MshParse(format!("bad triangle: {line}")));
                            }
                            let mut tri = [
                                resolve(node_ids[0])?,
                                resolve(node_ids[1])?,
                                resolve(node_ids[2])?,
                            ];
                            // normalize to counter-clockwise
                            if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0
                            {
                                tri.swap(1, 2);
                            }
                            triangles.push(tri);
                        }
                        15 => {} // point elements carry no geometry we use
                        other => return Err(Error::MshElementType { typ: other }),
                    }
                }
            }
            _ => {}
        }
    }
    if !version_seen {
        return Err(Error::MshParse("missing $MeshFormat section".into()));
    }
    let mesh = Mesh {
        vertices,
        triangles,
        boundary_edges,
    };
    mesh.validate()?;
    Ok(mesh)
}
