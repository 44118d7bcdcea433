//! Vertex patches, the supports of the local equilibration problems.

use super::Mesh;

/// The patch `omega_V` of a vertex: all elements containing the vertex,
/// ordered by walking around it, plus every facet of those elements
/// (the interior "spokes" and the patch boundary).
#[derive(Debug, Clone)]
pub struct VertexPatch {
    pub vertex: usize,
    /// Elements of the patch, ordered counter-clockwise around the vertex
    /// (starting at a boundary element for boundary vertices).
    pub elements: Vec<usize>,
    /// All facets of the patch elements, ascending.
    pub facets: Vec<usize>,
    pub is_boundary_vertex: bool,
    /// Diameter of the patch (maximal vertex distance).
    pub diameter: f64,
}

impl Mesh {
    pub fn vertex_patch(&self, v: usize) -> VertexPatch {
        assert!(v < self.num_vertices(), "vertex index out of range");
        let incident = &self.vertex_elements[v];
        assert!(!incident.is_empty(), "isolated vertex {v}");

        // Facets around v ("spokes") connect consecutive patch elements.
        let spoke_of = |e: usize| -> Vec<usize> {
            self.element_facets[e]
                .iter()
                .copied()
                .filter(|&f| self.facets[f].vertices.contains(&v))
                .collect()
        };

        let is_boundary_vertex = self.boundary_vertex[v];
        // Start the walk at an element owning a boundary spoke if there is
        // one, otherwise anywhere.
        let start = if is_boundary_vertex {
            *incident
                .iter()
                .find(|&&e| {
                    spoke_of(e)
                        .iter()
                        .any(|&f| self.facets[f].is_boundary())
                })
                .expect("boundary vertex without boundary spoke")
            } else {
            incident[0]
        };

        let mut elements = vec![start];
        let mut prev_facet = if is_boundary_vertex {
            spoke_of(start)
                .into_iter()
                .find(|&f| self.facets[f].is_boundary())
                .unwrap()
        } else {
            usize::MAX
        };
        loop {
            let e = *elements.last().unwrap();
            let next_facet = spoke_of(e)
                .into_iter()
                .find(|&f| f != prev_facet)
                .expect("element has two spokes at an incident vertex");
            let fa = &self.facets[next_facet];
            let other = if fa.left == e { fa.right } else { fa.left };
            if other == super::BOUNDARY || other == start {
                break;
            }
            if elements.contains(&other) {
                break;
            }
            elements.push(other);
            prev_facet = next_facet;
        }
        debug_assert_eq!(elements.len(), incident.len(), "patch walk incomplete");

        let mut facets: Vec<usize> = elements
            .iter()
            .flat_map(|&e| self.element_facets[e].iter().copied())
            .collect();
        facets.sort_unstable();
        facets.dedup();

        let mut verts: Vec<usize> = elements
            .iter()
            .flat_map(|&e| self.triangles[e].iter().copied())
            .collect();
        verts.sort_unstable();
        verts.dedup();
        let mut diameter = 0.0;
        for i in 0..verts.len() {
            for j in (i + 1)..verts.len() {
                diameter = f64::max(
                    diameter,
                    self.vertices[verts[i]].dist(&self.vertices[verts[j]]),
                );
            }
        }

        VertexPatch {
            vertex: v,
            elements,
            facets,
            is_boundary_vertex,
            diameter,
        }
    }

    pub fn vertex_patches(&self) -> Vec<VertexPatch> {
        (0..self.num_vertices()).map(|v| self.vertex_patch(v)).collect()
    }
}
