//! Conforming triangulations of rectangular domains.
//!
//! A [`TriMesh`] stores node coordinates, counterclockwise triangles and the
//! ordered boundary loop used by the perimeter objective. Boundary-condition
//! tags (clamped nodes, Neumann edges) are attached after construction with
//! [`TriMesh::with_tags`].
//!
//! The plain-text format written by [`write_mesh`] is
//!
//! ```text
//! N N_e N_b
//! x y            (N lines)
//! i j k          (N_e lines, 0-based)
//! b              (N_b lines, boundary loop)
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Relative threshold (times the domain area) below which a triangle counts as degenerate.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-14;

/// A boundary edge on the Neumann part, optionally carrying the surface traction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeumannEdge {
    pub nodes: [usize; 2],
    pub loaded: bool,
}

/// Area and hat-function gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the three nodal hat functions, in local node order.
    pub grads: [[f64; 2]; 3],
}

/// Diagonal split used by the structured generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshPattern {
    /// Every cell split along the diagonal from its lower-left to upper-right corner.
    #[default]
    RightDiagonal,
    /// Every cell split into four triangles around an added center node.
    Crossed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_loop: Vec<usize>,
    dirichlet_nodes: Vec<usize>,
    neumann_edges: Vec<NeumannEdge>,
    domain_area: f64,
}

impl TriMesh {
    /// Builds a mesh from raw nodes and triangles, validating orientation and
    /// conformity and computing the counterclockwise boundary loop.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let domain_area = validate_elements(&nodes, &triangles)?;
        let boundary_loop = compute_boundary_loop(&nodes, &triangles)?;
        Ok(Self {
            nodes,
            triangles,
            boundary_loop,
            dirichlet_nodes: Vec::new(),
            neumann_edges: Vec::new(),
            domain_area,
        })
    }

    /// Like [`TriMesh::new`] but with a caller-supplied boundary loop, which
    /// must be a valid cyclic traversal of the boundary nodes.
    pub fn with_boundary_loop(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_loop: Vec<usize>,
    ) -> Result<Self> {
        let domain_area = validate_elements(&nodes, &triangles)?;
        check_boundary_loop(&triangles, &boundary_loop)?;
        Ok(Self {
            nodes,
            triangles,
            boundary_loop,
            dirichlet_nodes: Vec::new(),
            neumann_edges: Vec::new(),
            domain_area,
        })
    }

    /// Attaches boundary-condition tags. Every boundary edge not lying on the
    /// clamped part becomes a Neumann edge; `loaded` decides which of them carry traction.
    pub fn with_tags<F>(mut self, dirichlet_nodes: Vec<usize>, loaded: F) -> Result<Self>
    where
        F: Fn(&[f64; 2], &[f64; 2]) -> bool,
    {
        let mut dirichlet = dirichlet_nodes;
        dirichlet.sort_unstable();
        dirichlet.dedup();
        if let Some(&bad) = dirichlet.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(Error::InvalidInput(format!(
                "dirichlet node {bad} out of range"
            )));
        }
        let clamped = |n: usize| dirichlet.binary_search(&n).is_ok();
        let nb = self.boundary_loop.len();
        let mut edges = Vec::new();
        for j in 0..nb {
            let a = self.boundary_loop[j];
            let b = self.boundary_loop[(j + 1) % nb];
            if clamped(a) && clamped(b) {
                continue;
            }
            edges.push(NeumannEdge {
                nodes: [a, b],
                loaded: loaded(&self.nodes[a], &self.nodes[b]),
            });
        }
        self.dirichlet_nodes = dirichlet;
        self.neumann_edges = edges;
        Ok(self)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    /// Cyclic boundary traversal; the edge closing the loop is implied.
    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet_nodes
    }

    pub fn neumann_edges(&self) -> &[NeumannEdge] {
        &self.neumann_edges
    }

    /// Sum of element areas.
    pub fn domain_area(&self) -> f64 {
        self.domain_area
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Index of the node closest to `target` (first one on ties).
    pub fn nearest_node(&self, target: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [
            (pa[0] + pb[0] + pc[0]) / 3.0,
            (pa[1] + pb[1] + pc[1]) / 3.0,
        ]
    }

    /// Area-weighted centroid of the domain.
    pub fn area_centroid(&self) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for e in 0..self.n_elements() {
            let area = signed_area(&self.nodes, self.triangles[e]);
            let c = self.element_centroid(e);
            acc[0] += area * c[0];
            acc[1] += area * c[1];
        }
        [acc[0] / self.domain_area, acc[1] / self.domain_area]
    }

    /// Largest edge length over all elements.
    pub fn max_element_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| {
                    let p = self.nodes[t[k]];
                    let q = self.nodes[t[(k + 1) % 3]];
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
                })
            })
            .fold(0.0, f64::max)
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| nodes[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn validate_elements(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> Result<f64> {
    if nodes.is_empty() || triangles.is_empty() {
        return Err(Error::InvalidInput("mesh has no nodes or no triangles".into()));
    }
    if let Some(p) = nodes.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite node coordinate {p:?}")));
    }
    let mut used = vec![false; nodes.len()];
    for (e, t) in triangles.iter().enumerate() {
        for &i in t {
            if i >= nodes.len() {
                return Err(Error::InvalidInput(format!(
                    "triangle {e} references node {i} out of range"
                )));
            }
            used[i] = true;
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::InvalidInput(format!("triangle {e} repeats a node")));
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::InvalidInput(format!("node {i} belongs to no triangle")));
    }
    let areas: Vec<f64> = triangles.iter().map(|&t| signed_area(nodes, t)).collect();
    let total: f64 = areas.iter().map(|a| a.abs()).sum();
    let threshold = DEGENERATE_AREA_FACTOR * total;
    for (e, &area) in areas.iter().enumerate() {
        if area <= threshold {
            return Err(Error::DegenerateElement {
                element: e,
                area,
                threshold,
            });
        }
    }
    Ok(areas.iter().sum())
}

/// Directed boundary edges: an edge is on the boundary iff exactly one
/// triangle owns it. Fails on non-manifold edges.
fn boundary_edges(triangles: &[[usize; 3]]) -> Result<Vec<(usize, usize)>> {
    let mut count: HashMap<(usize, usize), (usize, (usize, usize))> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = count.entry(key).or_insert((0, (a, b)));
            entry.0 += 1;
        }
    }
    let mut edges = Vec::new();
    for (key, (n, dir)) in count {
        match n {
            1 => edges.push(dir),
            2 => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "edge {key:?} shared by {n} triangles"
                )))
            }
        }
    }
    edges.sort_unstable();
    Ok(edges)
}

fn compute_boundary_loop(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> Result<Vec<usize>> {
    let edges = boundary_edges(triangles)?;
    let mut next: HashMap<usize, usize> = HashMap::with_capacity(edges.len());
    for &(a, b) in &edges {
        if next.insert(a, b).is_some() {
            return Err(Error::DisconnectedBoundary(format!(
                "boundary node {a} has two outgoing boundary edges"
            )));
        }
    }
    // Start at the lexicographically smallest (x, y) boundary node: (0, 0) for a rectangle.
    let start = *next
        .keys()
        .min_by(|&&i, &&j| {
            let (p, q) = (nodes[i], nodes[j]);
            p[0].total_cmp(&q[0])
                .then(p[1].total_cmp(&q[1]))
                .then(i.cmp(&j))
        })
        .ok_or_else(|| Error::DisconnectedBoundary("no boundary edges".into()))?;
    let mut loop_nodes = Vec::with_capacity(edges.len());
    let mut cur = start;
    loop {
        loop_nodes.push(cur);
        cur = *next.get(&cur).ok_or_else(|| {
            Error::DisconnectedBoundary(format!("boundary chain breaks at node {cur}"))
        })?;
        if cur == start {
            break;
        }
        if loop_nodes.len() > edges.len() {
            return Err(Error::DisconnectedBoundary("boundary walk does not close".into()));
        }
    }
    if loop_nodes.len() != edges.len() {
        return Err(Error::DisconnectedBoundary(format!(
            "loop visits {} of {} boundary edges",
            loop_nodes.len(),
            edges.len()
        )));
    }
    Ok(loop_nodes)
}

fn check_boundary_loop(triangles: &[[usize; 3]], boundary_loop: &[usize]) -> Result<()> {
    let edges = boundary_edges(triangles)?;
    if boundary_loop.len() != edges.len() {
        return Err(Error::DisconnectedBoundary(format!(
            "loop has {} nodes but the boundary has {} edges",
            boundary_loop.len(),
            edges.len()
        )));
    }
    let mut set: HashMap<(usize, usize), bool> = edges
        .iter()
        .map(|&(a, b)| ((a.min(b), a.max(b)), false))
        .collect();
    let nb = boundary_loop.len();
    for j in 0..nb {
        let (a, b) = (boundary_loop[j], boundary_loop[(j + 1) % nb]);
        match set.get_mut(&(a.min(b), a.max(b))) {
            Some(seen) if !*seen => *seen = true,
            _ => {
                return Err(Error::DisconnectedBoundary(format!(
                    "loop step {a} -> {b} is not a fresh boundary edge"
                )))
            }
        }
    }
    Ok(())
}

/// Structured triangulation of `[0, length] x [0, height]` with every element
/// diameter at most `target_h`.
pub fn generate_rect_mesh(length: f64, height: f64, target_h: f64) -> Result<TriMesh> {
    generate_rect_mesh_with(length, height, target_h, MeshPattern::RightDiagonal)
}

pub fn generate_rect_mesh_with(
    length: f64,
    height: f64,
    target_h: f64,
    pattern: MeshPattern,
) -> Result<TriMesh> {
    for (name, v) in [("length", length), ("height", height), ("target_h", target_h)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    // Right-diagonal cells have diameter equal to the cell diagonal; crossed
    // cells have diameter max(dx, dy) as long as the aspect ratio stays below sqrt(3).
    let spacing = match pattern {
        MeshPattern::RightDiagonal => target_h / std::f64::consts::SQRT_2,
        MeshPattern::Crossed => target_h,
    };
    let cells = |extent: f64| ((extent / spacing) - 1e-9).ceil().max(1.0) as usize;
    let (nx, ny) = (cells(length), cells(height));
    let (nx, ny) = match pattern {
        MeshPattern::Crossed => {
            // keep the cell aspect ratio in [1/sqrt(3), sqrt(3)]
            let mut nx = nx;
            let mut ny = ny;
            let ratio = |nx: usize, ny: usize| (length / nx as f64) / (height / ny as f64);
            while ratio(nx, ny) > 3f64.sqrt() {
                nx += 1;
            }
            while ratio(nx, ny) < 1.0 / 3f64.sqrt() {
                ny += 1;
            }
            (nx, ny)
        }
        MeshPattern::RightDiagonal => (nx, ny),
    };
    rect_mesh_grid(length, height, nx, ny, pattern)
}

/// Structured triangulation on an explicit `nx x ny` cell grid.
///
/// Nodes are numbered column by column (x outer, y inner) to keep the
/// stiffness profile narrow for slender domains.
pub fn rect_mesh_grid(
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    pattern: MeshPattern,
) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("grid needs at least one cell per direction".into()));
    }
    if !(length > 0.0 && height > 0.0) {
        return Err(Error::InvalidInput("non-positive domain dimensions".into()));
    }
    let dx = length / nx as f64;
    let dy = height / ny as f64;
    let coord = |i: usize, j: usize| {
        // exact endpoints so boundary detection by coordinate is robust
        let x = if i == nx { length } else { i as f64 * dx };
        let y = if j == ny { height } else { j as f64 * dy };
        [x, y]
    };
    let mut nodes = Vec::new();
    let mut grid = vec![vec![0usize; ny + 1]; nx + 1];
    let mut center = vec![vec![0usize; ny]; nx];
    for i in 0..=nx {
        for j in 0..=ny {
            grid[i][j] = nodes.len();
            nodes.push(coord(i, j));
        }
        if pattern == MeshPattern::Crossed && i < nx {
            for j in 0..ny {
                center[i][j] = nodes.len();
                let p = coord(i, j);
                nodes.push([p[0] + 0.5 * dx, p[1] + 0.5 * dy]);
            }
        }
    }
    let mut triangles = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let n00 = grid[i][j];
            let n10 = grid[i + 1][j];
            let n01 = grid[i][j + 1];
            let n11 = grid[i + 1][j + 1];
            match pattern {
                MeshPattern::RightDiagonal => {
                    triangles.push([n00, n10, n11]);
                    triangles.push([n00, n11, n01]);
                }
                MeshPattern::Crossed => {
                    let c = center[i][j];
                    triangles.push([n00, n10, c]);
                    triangles.push([n10, n11, c]);
                    triangles.push([n11, n01, c]);
                    triangles.push([n01, n00, c]);
                }
            }
        }
    }
    TriMesh::new(nodes, triangles)
}

/// Cyclic counterclockwise list of boundary node indices.
pub fn boundary_loop(mesh: &TriMesh) -> &[usize] {
    mesh.boundary_loop()
}

/// Area and hat-function gradients of element `e`.
pub fn element_geometry(mesh: &TriMesh, e: usize) -> Result<ElementGeometry> {
    let tri = *mesh
        .triangles
        .get(e)
        .ok_or_else(|| Error::InvalidInput(format!("element index {e} out of range")))?;
    let [a, b, c] = tri.map(|i| mesh.nodes[i]);
    let two_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * two_area;
    let threshold = DEGENERATE_AREA_FACTOR * mesh.domain_area;
    if area <= threshold {
        return Err(Error::DegenerateElement {
            element: e,
            area,
            threshold,
        });
    }
    let grads = [
        [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
        [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
        [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
    ];
    Ok(ElementGeometry { area, grads })
}

/// Writes the plain-text mesh format. Coordinates use shortest round-trip
/// formatting, so [`read_mesh`] reproduces them bit for bit.
pub fn write_mesh<W: Write>(mesh: &TriMesh, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "{} {} {}",
        mesh.n_nodes(),
        mesh.n_elements(),
        mesh.boundary_loop.len()
    )?;
    for p in &mesh.nodes {
        writeln!(out, "{:?} {:?}", p[0], p[1])?;
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    for b in &mesh.boundary_loop {
        writeln!(out, "{b}")?;
    }
    Ok(())
}

pub fn mesh_to_string(mesh: &TriMesh) -> String {
    let mut buf = Vec::new();
    write_mesh(mesh, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("mesh text is ASCII")
}

/// Reads the plain-text mesh format; `source` names the input in error messages.
pub fn read_mesh<R: BufRead>(input: R, source: &str) -> Result<TriMesh> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let parse_err = |line: usize, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let mut next_fields = |expected: usize| -> Result<(usize, Vec<String>)> {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file".into()))?;
        let line = line.map_err(|e| parse_err(ln, e.to_string()))?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if fields.len() != expected {
            return Err(parse_err(
                ln,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        Ok((ln, fields))
    };
    fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
        s.parse::<T>().map_err(|_| format!("cannot parse '{s}'"))
    }

    let (ln, header) = next_fields(3)?;
    let counts: Vec<usize> = header
        .iter()
        .map(|s| num(s))
        .collect::<std::result::Result<_, _>>()
        .map_err(|m| parse_err(ln, m))?;
    let (n, ne, nb) = (counts[0], counts[1], counts[2]);
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, f) = next_fields(2)?;
        let x = num::<f64>(&f[0]).map_err(|m| parse_err(ln, m))?;
        let y = num::<f64>(&f[1]).map_err(|m| parse_err(ln, m))?;
        nodes.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, f) = next_fields(3)?;
        let mut t = [0usize; 3];
        for k in 0..3 {
            t[k] = num::<usize>(&f[k]).map_err(|m| parse_err(ln, m))?;
        }
        triangles.push(t);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, f) = next_fields(1)?;
        boundary.push(num::<usize>(&f[0]).map_err(|m| parse_err(ln, m))?);
    }
    TriMesh::with_boundary_loop(nodes, triangles, boundary)
}
