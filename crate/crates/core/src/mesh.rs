//! Structured triangulations of rectangles and point location.

use crate::error::{invalid, Error, Result};
use crate::sparse::SparseMat;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return invalid(format!("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn unit() -> Self {
        Self { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn grown(&self, e: f64) -> Self {
        Self { x0: self.x0 - e, y0: self.y0 - e, x1: self.x1 + e, y1: self.y1 + e }
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// How a mesh was generated; enough to rebuild it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub extension: f64,
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Nodes on the outer boundary of the meshed rectangle.
    pub boundary_nodes: Vec<usize>,
    /// Nodes inside the (unextended) region of interest.
    pub core_nodes: Vec<usize>,
    pub spec: Option<MeshSpec>,
}

/// Uniform triangulation of `rect` grown by `extension` on every side, with
/// `nx` by `ny` cells on the grown rectangle. Every cell is split along its
/// lower-left to upper-right diagonal. Nodes are numbered row by row.
pub fn build_rect_mesh(rect: Rect, nx: usize, ny: usize, extension: f64) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return invalid("mesh needs at least one cell per direction");
    }
    if !(extension >= 0.0) || !extension.is_finite() {
        return invalid(format!("extension must be non-negative, got {extension}"));
    }
    let r = Rect::new(rect.x0, rect.y0, rect.x1, rect.y1)?;
    let outer = r.grown(extension);
    let hx = outer.width() / nx as f64;
    let hy = outer.height() / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { outer.x1 } else { outer.x0 + i as f64 * hx };
            let y = if j == ny { outer.y1 } else { outer.y0 + j as f64 * hy };
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = id(i, j);
            let q = id(i + 1, j);
            let rr = id(i, j + 1);
            let s = id(i + 1, j + 1);
            triangles.push([p, q, s]);
            triangles.push([p, s, rr]);
        }
    }
    let mut boundary_nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if i == 0 || j == 0 || i == nx || j == ny {
                boundary_nodes.push(id(i, j));
            }
        }
    }
    let tol = 1e-12 * outer.width().max(outer.height());
    let core_nodes = (0..nodes.len()).filter(|&k| r.contains(nodes[k], tol)).collect();
    Ok(TriMesh { nodes, triangles, boundary_nodes, core_nodes, spec: Some(MeshSpec { rect: r, nx, ny, extension }) })
}

/// Unit-square style mesh with `n` nodes per side.
pub fn square_mesh_nodes_per_side(rect: Rect, n: usize) -> Result<TriMesh> {
    if n < 2 {
        return invalid("need at least two nodes per side");
    }
    build_rect_mesh(rect, n - 1, n - 1, 0.0)
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Longest edge.
    pub fn max_edge(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let a = self.nodes[t[k]];
                let b = self.nodes[t[(k + 1) % 3]];
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect { x0: f64::INFINITY, y0: f64::INFINITY, x1: f64::NEG_INFINITY, y1: f64::NEG_INFINITY };
        for p in &self.nodes {
            r.x0 = r.x0.min(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.x1 = r.x1.max(p[0]);
            r.y1 = r.y1.max(p[1]);
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return invalid(format!("triangle {k} references a missing node"));
            }
            if !(self.triangle_area(k) > 0.0) {
                return invalid(format!("triangle {k} is degenerate or clockwise"));
            }
        }
        Ok(())
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, q) in self.nodes.iter().enumerate() {
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let l1 = ((pb[0] - p[0]) * (pc[1] - p[1]) - (pc[0] - p[0]) * (pb[1] - p[1])) / det;
        let l2 = ((pc[0] - p[0]) * (pa[1] - p[1]) - (pa[0] - p[0]) * (pc[1] - p[1])) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Sparse matrix of P1 basis values: row k holds the barycentric weights of
    /// `points[k]` in the first triangle that contains it.
    pub fn basis_eval_matrix(&self, points: &[[f64; 2]]) -> Result<SparseMat> {
        let locator = Locator::new(self);
        let mut trip = Vec::with_capacity(3 * points.len());
        for (k, &p) in points.iter().enumerate() {
            let (t, lam) = locator.locate(self, p).ok_or(Error::OutsideMesh { x: p[0], y: p[1] })?;
            for v in 0..3 {
                trip.push((k, self.triangles[t][v], lam[v]));
            }
        }
        SparseMat::from_triplets(points.len(), self.nodes.len(), &trip)
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ratfield mesh v1")?;
        if let Some(s) = &self.spec {
            writeln!(
                w,
                "# rect {} {} {} {} nx {} ny {} extension {}",
                s.rect.x0, s.rect.y0, s.rect.x1, s.rect.y1, s.nx, s.ny, s.extension
            )?;
        }
        writeln!(w, "nodes {}", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary {}", self.boundary_nodes.len())?;
        for b in &self.boundary_nodes {
            writeln!(w, "{b}")?;
        }
        writeln!(w, "core {}", self.core_nodes.len())?;
        for c in &self.core_nodes {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<TriMesh> {
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect();
        let mut pos = 0;
        let mut section = |name: &str| -> Result<(usize, usize)> {
            let line = lines.get(pos).ok_or_else(|| Error::Parse(format!("missing section {name}")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(name) {
                return Err(Error::Parse(format!("expected section {name}, got {line}")));
            }
            let count: usize =
                it.next().and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse(format!("bad count in {line}")))?;
            let start = pos + 1;
            pos = start + count;
            if pos > lines.len() {
                return Err(Error::Parse(format!("section {name} is truncated")));
            }
            Ok((start, count))
        };
        let (ns, nn) = section("nodes")?;
        let (ts, nt) = section("triangles")?;
        let (bs, nb) = section("boundary")?;
        let (cs, nc) = section("core")?;
        let nums = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")))).collect()
        };
        let idx = |line: &str| -> Result<Vec<usize>> {
            line.split_whitespace().map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")))).collect()
        };
        let mut nodes = Vec::with_capacity(nn);
        for l in &lines[ns..ns + nn] {
            let v = nums(l)?;
            if v.len() != 2 {
                return Err(Error::Parse(format!("bad node line {l}")));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for l in &lines[ts..ts + nt] {
            let v = idx(l)?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("bad triangle line {l}")));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let single = |range: &[String]| -> Result<Vec<usize>> {
            range.iter().map(|l| l.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{l}: {e}")))).collect()
        };
        let boundary_nodes = single(&lines[bs..bs + nb])?;
        let core_nodes = single(&lines[cs..cs + nc])?;
        let mesh = TriMesh { nodes, triangles, boundary_nodes, core_nodes, spec: None };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Bucket grid over triangle bounding boxes. Buckets list triangles in
/// increasing index order, so the first hit equals a brute-force scan.
struct Locator {
    bbox: Rect,
    nbx: usize,
    nby: usize,
    buckets: Vec<Vec<usize>>,
    tol: f64,
}

impl Locator {
    fn new(mesh: &TriMesh) -> Self {
        let bbox = mesh.bounding_box();
        let diam = (bbox.width().powi(2) + bbox.height().powi(2)).sqrt();
        let nb = ((mesh.n_triangles() as f64).sqrt().ceil() as usize).max(1);
        let (nbx, nby) = (nb, nb);
        let mut buckets = vec![Vec::new(); nbx * nby];
        let tol = 1e-10 * diam;
        let loc = Self { bbox, nbx, nby, buckets: Vec::new(), tol };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let xs = tri.map(|v| mesh.nodes[v][0]);
            let ys = tri.map(|v| mesh.nodes[v][1]);
            let (bx0, by0) = loc.cell(
                xs.iter().cloned().fold(f64::INFINITY, f64::min) - tol,
                ys.iter().cloned().fold(f64::INFINITY, f64::min) - tol,
            );
            let (bx1, by1) = loc.cell(
                xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + tol,
                ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + tol,
            );
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    buckets[by * nbx + bx].push(t);
                }
            }
        }
        Self { buckets, ..loc }
    }

    fn cell(&self, x: f64, y: f64) -> (usize, usize) {
        let fx = ((x - self.bbox.x0) / self.bbox.width() * self.nbx as f64).floor();
        let fy = ((y - self.bbox.y0) / self.bbox.height() * self.nby as f64).floor();
        (fx.clamp(0.0, (self.nbx - 1) as f64) as usize, fy.clamp(0.0, (self.nby - 1) as f64) as usize)
    }

    fn locate(&self, mesh: &TriMesh, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        if !p[0].is_finite() || !p[1].is_finite() || !self.bbox.contains(p, self.tol) {
            return None;
        }
        let (bx, by) = self.cell(p[0], p[1]);
        for &t in &self.buckets[by * self.nbx + bx] {
            let lam = mesh.barycentric(t, p);
            if lam.iter().all(|&l| l >= -1e-10) {
                let mut l = lam.map(|v| v.max(0.0));
                let s: f64 = l.iter().sum();
                l.iter_mut().for_each(|v| *v /= s);
                return Some((t, l));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_areas() {
        let m = build_rect_mesh(Rect::unit(), 4, 3, 0.0).unwrap();
        assert_eq!(m.n_nodes(), 20);
        assert_eq!(m.n_triangles(), 24);
        let area: f64 = (0..m.n_triangles()).map(|t| m.triangle_area(t)).sum();
        assert!((area - 1.0).abs() < 1e-14);
        m.validate().unwrap();
        assert_eq!(m.boundary_nodes.len(), 2 * 5 + 2 * 2);
    }

    #[test]
    fn extension_and_core_nodes() {
        let m = build_rect_mesh(Rect::unit(), 8, 8, 0.5).unwrap();
        // outer [-0.5, 1.5], spacing 1/4: core nodes at 0, 1/4, ..., 1
        assert_eq!(m.core_nodes.len(), 25);
    }

    #[test]
    fn point_on_node_gets_unit_weight() {
        let m = build_rect_mesh(Rect::unit(), 4, 4, 0.0).unwrap();
        let a = m.basis_eval_matrix(&[[0.5, 0.5], [0.25, 0.0]]).unwrap();
        let k = m.nearest_node([0.5, 0.5]);
        assert!((a.get(0, k) - 1.0).abs() < 1e-12);
        let s: f64 = a.row(1).1.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn outside_point_is_rejected() {
        let m = build_rect_mesh(Rect::unit(), 2, 2, 0.0).unwrap();
        assert!(matches!(m.basis_eval_matrix(&[[1.5, 0.5]]), Err(Error::OutsideMesh { .. })));
    }
}
