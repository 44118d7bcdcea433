//! Mesh constructors and refinement.
//!
//! Adaptive refinement uses newest-vertex bisection driven by a marked edge
//! set with a closure step: whenever any edge of an element is marked, the
//! element's refinement edge is marked as well. An edge of the old mesh is
//! split if and only if it is marked, which makes the refined mesh conforming
//! without any neighbour bookkeeping. Recursive bisection of an element
//! terminates after at most two levels because newly created edges are never
//! marked.

use super::{Mesh, Point2};
use std::collections::{HashMap, HashSet};

/// Structured mesh of the unit square with `n x n` cells, each split along
/// the diagonal from the lower-left to the upper-right corner.
pub fn unit_square_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "unit_square_mesh requires n >= 1");
    let mut vertices = Vec::new();
    let mut lookup = HashMap::new();
    let triangles = square_cells(n, 0.0, 0.0, &mut vertices, &mut lookup);
    Mesh::from_raw(vertices, triangles, &HashMap::new(), None)
}

/// Mesh of the L-shaped domain `(-1,1)^2 \ ((0,1) x (-1,0))`, assembled from
/// three unit squares each meshed like [`unit_square_mesh`].
pub fn l_shape_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "l_shape_mesh requires n >= 1");
    let mut vertices = Vec::new();
    let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for (region, (ox, oy)) in [(0.0, 0.0), (-1.0, 0.0), (-1.0, -1.0)].iter().enumerate() {
        let m = square_cells(n, *ox, *oy, &mut vertices, &mut lookup);
        for t in m {
            triangles.push(t);
            regions.push(region as u32);
        }
    }
    Mesh::from_raw(vertices, triangles, &HashMap::new(), Some(regions))
}

/// Triangles of one unit square `(ox, ox+1) x (oy, oy+1)`, merging vertices
/// through `lookup` keyed by integer grid coordinates (grid spacing `1/n`).
fn square_cells(
    n: usize,
    ox: f64,
    oy: f64,
    vertices: &mut Vec<Point2>,
    lookup: &mut HashMap<(i64, i64), usize>,
) -> Vec<[usize; 3]> {
    let gx = (ox * n as f64).round() as i64;
    let gy = (oy * n as f64).round() as i64;
    let mut vid = |i: i64, j: i64, vertices: &mut Vec<Point2>| -> usize {
        *lookup.entry((i, j)).or_insert_with(|| {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(2 * n * n);
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let v00 = vid(gx + i, gy + j, vertices);
            let v10 = vid(gx + i + 1, gy + j, vertices);
            let v11 = vid(gx + i + 1, gy + j + 1, vertices);
            let v01 = vid(gx + i, gy + j + 1, vertices);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    triangles
}

impl Mesh {
    /// Newest-vertex bisection of all `marked` elements plus the closure
    /// needed for a conforming result.
    pub fn refine_marked(&self, marked: &[usize]) -> Mesh {
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for &e in marked {
            edges.insert(self.refinement_edge_key(e));
        }
        self.refine_by_marked_edges(edges)
    }

    /// Splits every edge; on structured right-triangle meshes this halves
    /// all element diameters.
    pub fn refine_uniform(&self) -> Mesh {
        let edges: HashSet<(usize, usize)> = self
            .facets
            .iter()
            .map(|f| (f.vertices[0], f.vertices[1]))
            .collect();
        self.refine_by_marked_edges(edges)
    }

    fn refinement_edge_key(&self, e: usize) -> (usize, usize) {
        let t = self.triangles[e];
        (t[0].min(t[1]), t[0].max(t[1]))
    }

    fn refine_by_marked_edges(&self, mut edges: HashSet<(usize, usize)>) -> Mesh {
        if edges.is_empty() {
            let mut m = self.clone();
            m.parents = Some((0..self.num_elements()).collect());
            return m;
        }

        // Closure: an element with any marked edge gets its refinement edge
        // marked too. Terminates because the marked set only grows.
        loop {
            let mut changed = false;
            for t in &self.triangles {
                let refine_edge = (t[0].min(t[1]), t[0].max(t[1]));
                if edges.contains(&refine_edge) {
                    continue;
                }
                let any = (0..3).any(|i| {
                    let (a, b) = (t[i], t[(i + 1) % 3]);
                    edges.contains(&(a.min(b), a.max(b)))
                });
                if any {
                    edges.insert(refine_edge);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut sorted_edges: Vec<(usize, usize)> = edges.iter().copied().collect();
        sorted_edges.sort_unstable();
        for key in sorted_edges {
            let (a, b) = key;
            let pa = vertices[a];
            let pb = vertices[b];
            vertices.push(Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
            midpoint.insert(key, vertices.len() - 1);
        }

        let mut triangles = Vec::with_capacity(2 * self.num_elements());
        let mut regions = Vec::new();
        let mut parents = Vec::new();
        for (e, t) in self.triangles.iter().enumerate() {
            bisect(*t, e, self.element_regions[e], &edges, &midpoint, &mut |tri, parent, region| {
                triangles.push(tri);
                parents.push(parent);
                regions.push(region);
            });
        }

        let tags = self.boundary_tag_map();
        let mut mesh = Mesh::from_raw_preserving_refinement_edges(
            vertices, triangles, &tags, Some(regions),
        );
        mesh.parents = Some(parents);
        mesh
    }

    /// Splits every triangle into three by its barycenter.
    pub fn barycentric_refine(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut triangles = Vec::with_capacity(3 * self.num_elements());
        let mut regions = Vec::new();
        let mut parents = Vec::new();
        for (e, t) in self.triangles.iter().enumerate() {
            let z = self.element_centroid(e);
            vertices.push(z);
            let zi = vertices.len() - 1;
            for k in 0..3 {
                triangles.push([t[k], t[(k + 1) % 3], zi]);
                regions.push(self.element_regions[e]);
                parents.push(e);
            }
        }
        let tags = self.boundary_tag_map();
        let mut mesh = Mesh::from_raw(vertices, triangles, &tags, Some(regions));
        mesh.parents = Some(parents);
        mesh
    }

    /// Children of each parent element, computed from [`Mesh::parents`].
    pub fn children_of_parents(&self, num_parents: usize) -> Vec<Vec<usize>> {
        let parents = self
            .parents
            .as_ref()
            .expect("mesh has no refinement genealogy");
        let mut children = vec![Vec::new(); num_parents];
        for (c, &p) in parents.iter().enumerate() {
            children[p].push(c);
        }
        children
    }

    /// Boundary tags keyed by (sub-)edge vertex pairs, with midpoints of
    /// boundary edges inheriting the parent tag.
    fn boundary_tag_map(&self) -> HashMap<(usize, usize), u32> {
        let mut tags = HashMap::new();
        for &f in &self.boundary_facets {
            let fa = &self.facets[f];
            let tag = fa.boundary_tag.unwrap_or(1);
            tags.insert((fa.vertices[0], fa.vertices[1]), tag);
        }
        tags
    }

    fn from_raw_preserving_refinement_edges(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: &HashMap<(usize, usize), u32>,
        regions: Option<Vec<u32>>,
    ) -> Mesh {
        // Like `from_raw`, but keeps the (t[0], t[1]) refinement edges
        // produced by the bisection instead of re-deriving them from edge
        // lengths.
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
        mesh.build_connectivity_with_splits(boundary_tags);
        mesh
    }

    fn build_connectivity_with_splits(&mut self, tags: &HashMap<(usize, usize), u32>) {
        // Boundary tags of the parent mesh are keyed by parent vertex pairs;
        // child boundary edges are halves of those, so look up tags by
        // checking both for the exact pair and for a parent pair through the
        // shared midpoint. Collinearity makes an exact lookup impossible, so
        // tag lookup falls back to geometric matching: a child boundary edge
        // inherits the tag of the (unique) parent boundary edge containing it.
        let mut expanded = tags.clone();
        // Midpoint-split parent edges: keys (a, m) and (m, b) for parent (a, b).
        // Midpoints always have indices >= the parent's vertex count, and the
        // bisection inserts them consecutively, so reconstruct pairs by
        // geometric containment over the small set of tagged parent edges.
        let tagged: Vec<((usize, usize), u32)> = tags.iter().map(|(k, v)| (*k, *v)).collect();
        let contains = |a: Point2, b: Point2, p: Point2| -> bool {
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            let scale = a.dist(&b).max(1.0);
            if cross.abs() > 1e-12 * scale * scale {
                return false;
            }
            let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
            dot >= -1e-12 * scale * scale && dot <= a.dist(&b).powi(2) + 1e-12 * scale * scale
        };
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&key, &c) in &count {
            if c == 1 && !expanded.contains_key(&key) {
                let pa = self.vertices[key.0];
                let pb = self.vertices[key.1];
                for ((ta, tb), tag) in &tagged {
                    let qa = self.vertices[*ta];
                    let qb = self.vertices[*tb];
                    if contains(qa, qb, pa) && contains(qa, qb, pb) {
                        expanded.insert(key, *tag);
                        break;
                    }
                }
            }
        }
        self.build_connectivity(&expanded);
    }
}

/// Recursively bisects `tri` at its refinement edge while that edge is
/// marked. Children are `(c, a, m)` and `(b, c, m)` for a triangle
/// `(a, b, c)` with refinement edge `(a, b)` and midpoint `m`; both keep the
/// counter-clockwise orientation and have the expected newest-vertex
/// refinement edges `(c, a)` and `(b, c)`.
fn bisect(
    tri: [usize; 3],
    parent: usize,
    region: u32,
    edges: &HashSet<(usize, usize)>,
    midpoint: &HashMap<(usize, usize), usize>,
    emit: &mut impl FnMut([usize; 3], usize, u32),
) {
    let [a, b, c] = tri;
    let key = (a.min(b), a.max(b));
    if edges.contains(&key) {
        let m = midpoint[&key];
        bisect([c, a, m], parent, region, edges, midpoint, emit);
        bisect([b, c, m], parent, region, edges, midpoint, emit);
    } else {
        emit(tri, parent, region);
    }
}
