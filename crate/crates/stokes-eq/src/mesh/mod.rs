//! Conforming 2D simplicial meshes.
//!
//! A [`Mesh`] stores vertices, counter-clockwise triangles and a derived
//! facet (edge) table with a global orientation convention:
//!
//! * every facet is stored with its vertex pair in ascending index order,
//!   and its unit tangent points from the lower to the higher vertex index;
//! * the unit normal points from the lower-index adjacent element (`left`)
//!   to the higher-index one (`right`), or outward on the boundary;
//! * jumps across a facet read `[g] := g_left - g_right`.
//!
//! Meshes are immutable after construction. Refinement
//! ([`Mesh::refine_marked`], [`Mesh::refine_uniform`],
//! [`Mesh::barycentric_refine`]) produces a new mesh that remembers the
//! parent element of each child in [`Mesh::parents`].

pub mod io;
mod patch;
mod refine;

pub use patch::VertexPatch;
pub use refine::{l_shape_mesh, unit_square_mesh};

use std::collections::HashMap;

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Marker for the missing neighbour of a boundary facet.
pub const BOUNDARY: usize = usize::MAX;

/// An edge of the triangulation together with its adjacency and orientation.
#[derive(Debug, Clone)]
pub struct Facet {
    /// Vertex indices, ascending.
    pub vertices: [usize; 2],
    /// Adjacent element with the lower index.
    pub left: usize,
    /// Adjacent element with the higher index, or [`BOUNDARY`].
    pub right: usize,
    /// Unit normal pointing from `left` to `right` (outward on the boundary).
    pub normal: [f64; 2],
    /// Unit tangent from `vertices[0]` to `vertices[1]`.
    pub tangent: [f64; 2],
    pub length: f64,
    /// Midpoint of the facet.
    pub midpoint: Point2,
    /// Tag for boundary facets (`None` in the interior).
    pub boundary_tag: Option<u32>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.right == BOUNDARY
    }
}

/// Conforming triangulation of a polygonal domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    /// Counter-clockwise vertex triples. The refinement edge used by
    /// newest-vertex bisection is the edge `(t[0], t[1])`.
    pub triangles: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Indices into `facets` of all boundary facets.
    pub boundary_facets: Vec<usize>,
    /// Per element: facet index opposite the local vertex `i`.
    pub element_facets: Vec<[usize; 3]>,
    /// Element diameters `h_T` (longest edge).
    pub element_diameters: Vec<f64>,
    /// Region tag per element.
    pub element_regions: Vec<u32>,
    /// Parent element in the mesh this one was refined from.
    pub parents: Option<Vec<usize>>,
    /// Whether a vertex lies on the domain boundary.
    pub boundary_vertex: Vec<bool>,
    /// Elements incident to each vertex (unordered).
    pub vertex_elements: Vec<Vec<usize>>,
}

/// A single invariant violation found by [`Mesh::validate`].
#[derive(Debug, Clone)]
pub struct MeshViolation(pub String);

impl std::fmt::Display for MeshViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn tri_signed_area(p0: &Point2, p1: &Point2, p2: &Point2) -> f64 {
    0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y))
}

impl Mesh {
    /// Builds a mesh from raw vertex and connectivity data.
    ///
    /// Triangles are rotated so that their longest edge becomes the
    /// refinement edge `(t[0], t[1])`; the cyclic order (and hence the
    /// orientation) is preserved. `boundary_tags` may assign tags to
    /// boundary facets by vertex pair; untagged boundary facets get tag 1.
    pub fn from_raw(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: &HashMap<(usize, usize), u32>,
        regions: Option<Vec<u32>>,
    ) -> Mesh {
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .map(|t| {
                let mut best = 0;
                let mut best_len = -1.0_f64;
                for i in 0..3 {
                    let (a, b) = (t[i], t[(i + 1) % 3]);
                    let len = vertices[a].dist(&vertices[b]);
                    if len > best_len + 1e-14 * best_len.abs() {
                        best_len = len;
                        best = i;
                    }
                }
                [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
            })
            .collect();

        let regions = regions.unwrap_or_else(|| vec![0; triangles.len()]);
        let mut mesh = Mesh {
            vertices,
            triangles,
            facets: Vec::new(),
            boundary_facets: Vec::new(),
            element_facets: Vec::new(),
            element_diameters: Vec::new(),
            element_regions: regions,
            parents: None,
            boundary_vertex: Vec::new(),
            vertex_elements: Vec::new(),
        };
        mesh.build_connectivity(boundary_tags);
        mesh
    }

    fn build_connectivity(&mut self, boundary_tags: &HashMap<(usize, usize), u32>) {
        let nv = self.vertices.len();
        let nt = self.triangles.len();
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut adj: Vec<Vec<usize>> = Vec::new();

        self.element_facets = vec![[usize::MAX; 3]; nt];
        let mut elem_edge_keys: Vec<[(usize, usize); 3]> = vec![[(0, 0); 3]; nt];
        for (e, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                let key = (a.min(b), a.max(b));
                elem_edge_keys[e][i] = key;
                let id = *edge_map.entry(key).or_insert_with(|| {
                    adj.push(Vec::new());
                    adj.len() - 1
                });
                adj[id].push(e);
            }
        }

        let mut keys: Vec<(&(usize, usize), &usize)> = edge_map.iter().collect();
        keys.sort_by_key(|(k, _)| **k);

        self.facets = Vec::with_capacity(keys.len());
        self.boundary_facets.clear();
        let mut facet_of_key: HashMap<(usize, usize), usize> = HashMap::new();
        for (key, &old_id) in keys {
            let mut elems = adj[old_id].clone();
            elems.sort_unstable();
            let left = elems[0];
            let right = if elems.len() > 1 { elems[1] } else { BOUNDARY };
            let (va, vb) = *key;
            let pa = self.vertices[va];
            let pb = self.vertices[vb];
            let length = pa.dist(&pb);
            let tangent = [(pb.x - pa.x) / length, (pb.y - pa.y) / length];
            // Candidate normal; flip so it points away from the left element.
            let mut normal = [tangent[1], -tangent[0]];
            let t = self.triangles[left];
            let opp = *t
                .iter()
                .find(|&&v| v != va && v != vb)
                .expect("degenerate triangle");
            let po = self.vertices[opp];
            let mid = Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
            let to_opp = [po.x - mid.x, po.y - mid.y];
            if normal[0] * to_opp[0] + normal[1] * to_opp[1] > 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            let boundary_tag = if right == BOUNDARY {
                Some(*boundary_tags.get(key).unwrap_or(&1))
            } else {
                None
            };
            let id = self.facets.len();
            facet_of_key.insert(*key, id);
            if right == BOUNDARY {
                self.boundary_facets.push(id);
            }
            self.facets.push(Facet {
                vertices: [va, vb],
                left,
                right,
                normal,
                tangent,
                length,
                midpoint: mid,
                boundary_tag,
            });
        }

        for e in 0..nt {
            for i in 0..3 {
                self.element_facets[e][i] = facet_of_key[&elem_edge_keys[e][i]];
            }
        }

        self.element_diameters = (0..nt)
            .map(|e| {
                let t = self.triangles[e];
                (0..3)
                    .map(|i| self.vertices[t[i]].dist(&self.vertices[t[(i + 1) % 3]]))
                    .fold(0.0, f64::max)
            })
            .collect();

        self.boundary_vertex = vec![false; nv];
        for &f in &self.boundary_facets {
            for &v in &self.facets[f].vertices {
                self.boundary_vertex[v] = true;
            }
        }

        self.vertex_elements = vec![Vec::new(); nv];
        for (e, t) in self.triangles.iter().enumerate() {
            for &v in t {
                self.vertex_elements[v].push(e);
            }
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    /// Physical coordinates of the three vertices of element `e`.
    pub fn element_coords(&self, e: usize) -> [Point2; 3] {
        let t = self.triangles[e];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [p0, p1, p2] = self.element_coords(e);
        tri_signed_area(&p0, &p1, &p2)
    }

    pub fn element_centroid(&self, e: usize) -> Point2 {
        let [p0, p1, p2] = self.element_coords(e);
        Point2::new((p0.x + p1.x + p2.x) / 3.0, (p0.y + p1.y + p2.y) / 3.0)
    }

    pub fn area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_area(e)).sum()
    }

    pub fn max_diameter(&self) -> f64 {
        self.element_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Local index of facet `f` within element `e`.
    pub fn local_facet_index(&self, e: usize, f: usize) -> usize {
        self.element_facets[e]
            .iter()
            .position(|&g| g == f)
            .expect("facet not part of element")
    }

    /// Outward normal of element `e` on its facet `f` (`±` the stored one).
    pub fn outward_normal(&self, e: usize, f: usize) -> [f64; 2] {
        let fa = &self.facets[f];
        if fa.left == e {
            fa.normal
        } else {
            [-fa.normal[0], -fa.normal[1]]
        }
    }

    /// Sign of the stored facet jump convention seen from element `e`:
    /// `+1` if `e` is the left element, `-1` otherwise.
    pub fn jump_sign(&self, e: usize, f: usize) -> f64 {
        if self.facets[f].left == e {
            1.0
        } else {
            -1.0
        }
    }

    /// Checks all mesh invariants and returns the list of violations.
    pub fn validate(&self) -> Vec<MeshViolation> {
        let mut out = Vec::new();
        let nv = self.num_vertices();
        let nt = self.num_elements();
        let nf = self.num_facets();

        for (i, p) in self.vertices.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                out.push(MeshViolation(format!("vertex {i} has non-finite coordinates")));
            }
        }

        for e in 0..nt {
            let a = self.element_area(e);
            if !(a > 0.0) {
                out.push(MeshViolation(format!(
                    "element {e} is not counter-clockwise (signed area {a:.3e})"
                )));
            }
        }

        // Facet sharing: rebuild the incidence count from the triangles.
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for f in &self.facets {
            let key = (f.vertices[0], f.vertices[1]);
            let c = count.get(&key).copied().unwrap_or(0);
            if f.is_boundary() && c != 1 {
                out.push(MeshViolation(format!(
                    "boundary facet {key:?} shared by {c} elements"
                )));
            }
            if !f.is_boundary() && c != 2 {
                out.push(MeshViolation(format!(
                    "interior facet {key:?} shared by {c} elements"
                )));
            }
        }
        if count.len() != nf {
            out.push(MeshViolation(format!(
                "facet table has {nf} entries but the triangles define {} edges (hanging nodes?)",
                count.len()
            )));
        }

        if (nv as i64) - (nf as i64) + (nt as i64) != 1 {
            out.push(MeshViolation(format!(
                "Euler relation violated: {nv} - {nf} + {nt} != 1"
            )));
        }

        for (i, f) in self.facets.iter().enumerate() {
            let norm = (f.normal[0].powi(2) + f.normal[1].powi(2)).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                out.push(MeshViolation(format!("facet {i} normal not unit: |n| = {norm}")));
            }
            // The stored normal must point away from the left element, i.e.
            // equal minus the outward normal of the right element.
            let pa = self.vertices[f.vertices[0]];
            let pb = self.vertices[f.vertices[1]];
            let mid = Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
            for (side, e) in [(1.0, f.left), (-1.0, f.right)] {
                if e == BOUNDARY {
                    continue;
                }
                let t = self.triangles[e];
                let opp = match t.iter().find(|&&v| v != f.vertices[0] && v != f.vertices[1]) {
                    Some(&v) => v,
                    None => continue,
                };
                let po = self.vertices[opp];
                let dot = side
                    * (f.normal[0] * (po.x - mid.x) + f.normal[1] * (po.y - mid.y));
                if dot > 0.0 {
                    out.push(MeshViolation(format!(
                        "facet {i} normal does not point from left to right element"
                    )));
                }
            }
        }

        for e in 0..nt {
            let t = self.triangles[e];
            let h = (0..3)
                .map(|i| self.vertices[t[i]].dist(&self.vertices[t[(i + 1) % 3]]))
                .fold(0.0, f64::max);
            if (h - self.element_diameters[e]).abs() > 1e-13 * h {
                out.push(MeshViolation(format!("element {e} stored diameter mismatch")));
            }
        }

        out
    }
}

#[cfg(test)]
mod tests;
