//! Nodal clouds, overlapping subdomain covers, and their quadrature.
//!
//! Everything here is immutable once built. Subdomains are axis-aligned
//! boxes `center ± r` clipped to the (box-shaped) reference domain, so a
//! face either lies entirely on one domain edge or entirely inside the
//! domain.

pub mod gauss;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// A position in the reference configuration. 1D problems leave the second
/// coordinate at zero.
pub type Point = [f64; MAX_DIM];

const ON_BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    lower: Point,
    upper: Point,
}

impl Domain {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_DIM {
            return Err(Error::config(format!(
                "domain must have 1 or 2 axes, got {}",
                bounds.len()
            )));
        }
        let mut lower = [0.0; MAX_DIM];
        let mut upper = [0.0; MAX_DIM];
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "domain axis {d}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
            lower[d] = lo;
            upper[d] = hi;
        }
        Ok(Self {
            dim: bounds.len(),
            lower,
            upper,
        })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(&[(lo, hi)])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Self::new(&[x, y])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|d| self.extent(d)).product()
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|d| {
            let tol = ON_BOUNDARY_TOL * self.extent(d);
            x[d] >= self.lower[d] - tol && x[d] <= self.upper[d] + tol
        })
    }

    pub fn edges(&self) -> Vec<Edge> {
        Edge::all(self.dim)
    }

    /// Uniform tensor grid of `counts` points including both ends of each axis.
    pub fn uniform_grid(&self, counts: &[usize]) -> Result<Vec<Point>> {
        check_counts(self, counts)?;
        let nx = counts[0];
        let ny = if self.dim == 2 { counts[1] } else { 1 };
        let mut pts = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let mut p = [0.0; MAX_DIM];
                p[0] = lerp(self.lower[0], self.upper[0], i, nx);
                if self.dim == 2 {
                    p[1] = lerp(self.lower[1], self.upper[1], j, ny);
                }
                pts.push(p);
            }
        }
        Ok(pts)
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

fn check_counts(domain: &Domain, counts: &[usize]) -> Result<()> {
    if counts.len() != domain.dim() {
        return Err(Error::config(format!(
            "expected {} per-axis counts, got {}",
            domain.dim(),
            counts.len()
        )));
    }
    if let Some(c) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::config(format!("per-axis count must be at least 2, got {c}")));
    }
    Ok(())
}

/// One side of the box-shaped domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub fn all(dim: usize) -> Vec<Edge> {
        if dim == 1 {
            vec![Edge::Left, Edge::Right]
        } else {
            vec![Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
        }
    }

    pub fn axis(self) -> usize {
        match self {
            Edge::Left | Edge::Right => 0,
            Edge::Bottom | Edge::Top => 1,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Edge::Right | Edge::Top)
    }

    pub fn from_side(axis: usize, upper: bool) -> Edge {
        match (axis, upper) {
            (0, false) => Edge::Left,
            (0, true) => Edge::Right,
            (_, false) => Edge::Bottom,
            (_, true) => Edge::Top,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }

    pub fn outward_normal(self) -> Point {
        let mut n = [0.0; MAX_DIM];
        n[self.axis()] = if self.is_upper() { 1.0 } else { -1.0 };
        n
    }
}

/// Uniform tensor-product nodal cloud. Node `(i, j)` has index `i + nx * j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    domain: Domain,
    counts: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    positions: Vec<Point>,
    h: f64,
}

pub fn build_node_grid(domain: &Domain, counts: &[usize]) -> Result<NodeSet> {
    let positions = domain.uniform_grid(counts)?;
    let mut c = [1; MAX_DIM];
    let mut spacing = [0.0; MAX_DIM];
    for d in 0..domain.dim() {
        c[d] = counts[d];
        spacing[d] = domain.extent(d) / (counts[d] - 1) as f64;
    }
    let h = spacing[..domain.dim()]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(NodeSet {
        domain: domain.clone(),
        counts: c,
        spacing,
        positions,
        h,
    })
}

impl NodeSet {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim()]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim()]
    }

    /// Characteristic nodal spacing (smallest per-axis spacing).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, index: usize) -> Point {
        self.positions[index]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    /// Indices of the nodes lying on `edge`.
    pub fn on_edge(&self, edge: Edge) -> Vec<usize> {
        let axis = edge.axis();
        if axis >= self.dim() {
            return Vec::new();
        }
        let fixed = if edge.is_upper() {
            self.counts[axis] - 1
        } else {
            0
        };
        let other = 1 - axis;
        (0..self.counts[other])
            .map(|k| {
                if axis == 0 {
                    self.index(fixed, k)
                } else {
                    self.index(k, fixed)
                }
            })
            .collect()
    }

    /// Calls `f` for every node within Euclidean distance `radius` of `x`,
    /// in ascending index order.
    pub fn for_each_within(&self, x: &Point, radius: f64, mut f: impl FnMut(usize)) {
        let lower = self.domain.lower();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for d in 0..MAX_DIM {
            if d >= self.dim() {
                lo[d] = 0;
                hi[d] = 0;
                continue;
            }
            let s = self.spacing[d];
            let a = ((x[d] - radius - lower[d]) / s).ceil().max(0.0);
            let b = ((x[d] + radius - lower[d]) / s).floor();
            let last = (self.counts[d] - 1) as f64;
            if b < 0.0 || a > last {
                return;
            }
            lo[d] = a as usize;
            hi[d] = b.min(last) as usize;
        }
        let r2 = radius * radius;
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let idx = self.index(i, j);
                let p = self.positions[idx];
                let d2: f64 = (0..self.dim()).map(|d| (p[d] - x[d]).powi(2)).sum();
                if d2 <= r2 {
                    f(idx);
                }
            }
        }
    }
}

/// Classification of a subdomain boundary segment for one displacement
/// component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentClass {
    /// L_s: inside the domain.
    Interior,
    /// Γ_sg: on an edge where this component is prescribed.
    Essential,
    /// Γ_st: on an edge where this component's traction is prescribed.
    Natural,
}

/// Per-edge, per-component boundary kinds used to classify faces lying on Γ.
pub type EdgeKinds = BTreeMap<Edge, [SegmentClass; MAX_DIM]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Axis the face is normal to.
    pub axis: usize,
    pub upper: bool,
    pub normal: Point,
    /// Domain edge the face lies on, if any.
    pub edge: Option<Edge>,
    /// True when the face was produced by clipping the box against Γ.
    pub clipped: bool,
    /// Segment class per displacement component.
    pub classes: [SegmentClass; MAX_DIM],
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.edge.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub center: Point,
    pub half_width: Point,
    /// Clipped box.
    pub lower: Point,
    pub upper: Point,
    pub faces: Vec<Face>,
    dim: usize,
}

impl Subdomain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|d| self.upper[d] - self.lower[d]).product()
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|d| x[d] >= self.lower[d] && x[d] <= self.upper[d])
    }

    /// Measure of a face: 1 for the point faces of a 1D subdomain.
    pub fn face_measure(&self, face: &Face) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let t = 1 - face.axis;
            self.upper[t] - self.lower[t]
        }
    }

    /// Sum of face measures (the perimeter in 2D, 2 in 1D).
    pub fn boundary_measure(&self) -> f64 {
        self.faces.iter().map(|f| self.face_measure(f)).sum()
    }
}

/// Builds the tensor grid of subdomains, each the box `center ± r_bar·h`
/// clipped to the domain, with faces on Γ classified through `kinds`.
pub fn build_subdomains(
    domain: &Domain,
    counts: &[usize],
    r_bar: f64,
    h: f64,
    kinds: &EdgeKinds,
) -> Result<Vec<Subdomain>> {
    if !(r_bar > 0.0 && r_bar.is_finite()) {
        return Err(Error::config(format!("r_bar must be positive, got {r_bar}")));
    }
    if !(h > 0.0) {
        return Err(Error::config(format!("h must be positive, got {h}")));
    }
    let centers = domain.uniform_grid(counts)?;
    let r = r_bar * h;
    let dim = domain.dim();
    let dl = domain.lower();
    let du = domain.upper();
    centers
        .into_iter()
        .map(|c| {
            let mut half_width = [0.0; MAX_DIM];
            let mut lower = [0.0; MAX_DIM];
            let mut upper = [0.0; MAX_DIM];
            for d in 0..dim {
                half_width[d] = r;
                lower[d] = (c[d] - r).max(dl[d]);
                upper[d] = (c[d] + r).min(du[d]);
            }
            let mut faces = Vec::with_capacity(2 * dim);
            for axis in 0..dim {
                for upper_side in [false, true] {
                    let (coord, bound, raw) = if upper_side {
                        (upper[axis], du[axis], c[axis] + r)
                    } else {
                        (lower[axis], dl[axis], c[axis] - r)
                    };
                    let tol = ON_BOUNDARY_TOL * domain.extent(axis);
                    let on_gamma = (coord - bound).abs() <= tol;
                    let clipped = (raw - coord).abs() > tol;
                    let edge = on_gamma.then(|| Edge::from_side(axis, upper_side));
                    let classes = match edge {
                        None => [SegmentClass::Interior; MAX_DIM],
                        Some(e) => *kinds.get(&e).ok_or_else(|| {
                            Error::config(format!(
                                "boundary condition map does not cover the {} edge",
                                e.name()
                            ))
                        })?,
                    };
                    let mut normal = [0.0; MAX_DIM];
                    normal[axis] = if upper_side { 1.0 } else { -1.0 };
                    faces.push(Face {
                        axis,
                        upper: upper_side,
                        normal,
                        edge,
                        clipped,
                        classes,
                    });
                }
            }
            Ok(Subdomain {
                center: c,
                half_width,
                lower,
                upper,
                faces,
                dim,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: Point,
    pub weight: f64,
    pub normal: Point,
    /// Index into the owning subdomain's `faces`.
    pub face: usize,
    pub classes: [SegmentClass; MAX_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSet {
    pub domain_points: Vec<QuadPoint>,
    pub boundary_points: Vec<BoundaryPoint>,
    pub cells_per_axis: usize,
    pub gauss_order: usize,
}

/// Composite Gauss–Legendre quadrature over the clipped subdomain and its
/// faces: the unclipped box is split into `cells_per_axis` equal cells per
/// axis, cells are clipped to the domain (empty ones dropped), and each
/// carries `gauss_order` points per direction.
pub fn build_quadrature(
    sub: &Subdomain,
    cells_per_axis: usize,
    gauss_order: usize,
) -> Result<QuadratureSet> {
    if cells_per_axis == 0 || gauss_order == 0 {
        return Err(Error::config(
            "cells_per_axis and gauss_order must be at least 1",
        ));
    }
    let dim = sub.dim();
    for d in 0..dim {
        if !(sub.upper[d] - sub.lower[d] > 0.0) {
            return Err(Error::config(format!(
                "degenerate subdomain centered at {:?}: zero extent along axis {d}",
                &sub.center[..dim]
            )));
        }
    }
    // Cells follow the grid of the unclipped box, then get clipped, so cell
    // edges stay on the test-function knots near the boundary too.
    let axis_rule = |d: usize| -> Vec<(f64, f64)> {
        let r = sub.half_width[d];
        let len = 2.0 * r / cells_per_axis as f64;
        let tol = 1e-12 * r;
        (0..cells_per_axis)
            .filter_map(|c| {
                let a = (sub.center[d] - r + len * c as f64).max(sub.lower[d]);
                let b = (sub.center[d] - r + len * (c + 1) as f64).min(sub.upper[d]);
                (b - a > tol).then(|| gauss::mapped_rule(gauss_order, a, b))
            })
            .flatten()
            .collect()
    };

    let rx = axis_rule(0);
    let mut domain_points = Vec::new();
    let mut boundary_points = Vec::new();
    if dim == 1 {
        domain_points.extend(rx.iter().map(|&(x, w)| QuadPoint {
            x: [x, 0.0],
            weight: w,
        }));
        for (fi, face) in sub.faces.iter().enumerate() {
            let x = if face.upper { sub.upper[0] } else { sub.lower[0] };
            boundary_points.push(BoundaryPoint {
                x: [x, 0.0],
                weight: 1.0,
                normal: face.normal,
                face: fi,
                classes: face.classes,
            });
        }
    } else {
        let ry = axis_rule(1);
        for &(y, wy) in &ry {
            for &(x, wx) in &rx {
                domain_points.push(QuadPoint {
                    x: [x, y],
                    weight: wx * wy,
                });
            }
        }
        for (fi, face) in sub.faces.iter().enumerate() {
            let fixed = if face.upper {
                sub.upper[face.axis]
            } else {
                sub.lower[face.axis]
            };
            let along = if face.axis == 0 { &ry } else { &rx };
            for &(t, w) in along {
                let x = if face.axis == 0 { [fixed, t] } else { [t, fixed] };
                boundary_points.push(BoundaryPoint {
                    x,
                    weight: w,
                    normal: face.normal,
                    face: fi,
                    classes: face.classes,
                });
            }
        }
    }
    Ok(QuadratureSet {
        domain_points,
        boundary_points,
        cells_per_axis,
        gauss_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_natural(dim: usize) -> EdgeKinds {
        Edge::all(dim)
            .into_iter()
            .map(|e| (e, [SegmentClass::Natural; MAX_DIM]))
            .collect()
    }

    #[test]
    fn bar_node_grid() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let n = build_node_grid(&d, &[41]).unwrap();
        assert_eq!(n.len(), 41);
        assert!((n.h() - 0.05).abs() < 1e-15);
        assert_eq!(n.position(0)[0], -1.0);
        assert_eq!(n.position(40)[0], 1.0);
    }

    #[test]
    fn plate_node_grid() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let n = build_node_grid(&d, &[21, 21]).unwrap();
        assert_eq!(n.len(), 441);
        assert!((n.h() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn two_endpoint_grid() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let n = build_node_grid(&d, &[2]).unwrap();
        assert_eq!(n.positions(), &[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(n.h(), 1.0);
    }

    #[test]
    fn rejects_small_counts_and_bad_bounds() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert!(matches!(build_node_grid(&d, &[1]), Err(Error::Config(_))));
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::rectangle((0.0, 1.0), (2.0, -1.0)).is_err());
    }

    #[test]
    fn bar_subdomains_clip_at_boundary() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let subs = build_subdomains(&d, &[101], 2.5, 0.05, &all_natural(1)).unwrap();
        assert_eq!(subs.len(), 101);
        let first = &subs[0];
        assert!((first.half_width[0] - 0.125).abs() < 1e-15);
        assert_eq!(first.lower[0], -1.0);
        assert!((first.upper[0] + 0.875).abs() < 1e-15);
        assert!(first.faces[0].clipped);
        assert_eq!(first.faces[0].edge, Some(Edge::Left));
        assert_eq!(first.faces[1].edge, None);
    }

    #[test]
    fn interior_plate_subdomain_is_unclipped() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let subs = build_subdomains(&d, &[41, 41], 2.5, 0.05, &all_natural(2)).unwrap();
        let mid = &subs[20 + 41 * 20];
        assert!((mid.upper[0] - mid.lower[0] - 0.25).abs() < 1e-14);
        assert!((mid.upper[1] - mid.lower[1] - 0.25).abs() < 1e-14);
        assert!(mid.faces.iter().all(|f| f.is_interior() && !f.clipped));
        assert!(mid
            .faces
            .iter()
            .all(|f| f.classes == [SegmentClass::Interior; 2]));
    }

    #[test]
    fn missing_edge_kind_is_config_error() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let mut kinds = all_natural(1);
        kinds.remove(&Edge::Right);
        let err = build_subdomains(&d, &[5], 2.5, 0.25, &kinds).unwrap_err();
        assert!(err.to_string().contains("right"));
    }

    #[test]
    fn quadrature_point_counts() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let subs = build_subdomains(&d, &[41, 41], 2.5, 0.05, &all_natural(2)).unwrap();
        let q = build_quadrature(&subs[500], 4, 5).unwrap();
        assert_eq!(q.domain_points.len(), 400);
        assert_eq!(q.boundary_points.len(), 80);

        let d1 = Domain::interval(-1.0, 1.0).unwrap();
        let subs1 = build_subdomains(&d1, &[101], 2.5, 0.05, &all_natural(1)).unwrap();
        let q1 = build_quadrature(&subs1[50], 4, 5).unwrap();
        assert_eq!(q1.domain_points.len(), 20);
        assert_eq!(q1.boundary_points.len(), 2);
        assert!(q1.boundary_points.iter().all(|b| b.weight == 1.0));
    }

    #[test]
    fn quadrature_weights_sum_to_measures() {
        let d = Domain::rectangle((0.0, 2.0), (0.0, 1.0)).unwrap();
        let subs = build_subdomains(&d, &[9, 5], 1.7, 0.2, &all_natural(2)).unwrap();
        for s in &subs {
            let q = build_quadrature(s, 4, 5).unwrap();
            let w: f64 = q.domain_points.iter().map(|p| p.weight).sum();
            assert!((w - s.measure()).abs() <= 1e-13 * s.measure());
            assert!(q.domain_points.iter().all(|p| p.weight > 0.0));
            for (fi, f) in s.faces.iter().enumerate() {
                let fw: f64 = q
                    .boundary_points
                    .iter()
                    .filter(|b| b.face == fi)
                    .map(|b| b.weight)
                    .sum();
                assert!((fw - s.face_measure(f)).abs() <= 1e-13 * s.face_measure(f));
            }
            let total: f64 = q.boundary_points.iter().map(|b| b.weight).sum();
            let perimeter = 2.0 * (s.upper[0] - s.lower[0] + s.upper[1] - s.lower[1]);
            assert!((total - perimeter).abs() <= 1e-12 * perimeter);
        }
    }

    #[test]
    fn degenerate_subdomain_rejected() {
        let mut s = build_subdomains(
            &Domain::interval(0.0, 1.0).unwrap(),
            &[3],
            1.0,
            0.5,
            &all_natural(1),
        )
        .unwrap()
        .remove(1);
        s.upper[0] = s.lower[0];
        assert!(matches!(build_quadrature(&s, 4, 5), Err(Error::Config(_))));
    }

    #[test]
    fn subdomains_cover_probe_grid() {
        let d = Domain::rectangle((0.0, 4.0), (0.0, 1.0)).unwrap();
        let subs = build_subdomains(&d, &[41, 21], 2.5, 0.2, &all_natural(2)).unwrap();
        for j in 0..100 {
            for i in 0..100 {
                let x = [4.0 * i as f64 / 99.0, j as f64 / 99.0];
                assert!(subs.iter().any(|s| s.contains(&x)), "{x:?} uncovered");
            }
        }
    }

    #[test]
    fn neighbor_search_matches_brute_force() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 2.0)).unwrap();
        let n = build_node_grid(&d, &[11, 15]).unwrap();
        for &x in &[[0.33, 0.71], [0.0, 0.0], [1.0, 2.0], [0.5, 1.999]] {
            let mut fast = Vec::new();
            n.for_each_within(&x, 0.27, |i| fast.push(i));
            let slow: Vec<usize> = (0..n.len())
                .filter(|&i| {
                    let p = n.position(i);
                    ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt() <= 0.27
                })
                .collect();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn edge_nodes() {
        let d = Domain::rectangle((0.0, 4.0), (0.0, 1.0)).unwrap();
        let n = build_node_grid(&d, &[21, 11]).unwrap();
        let right = n.on_edge(Edge::Right);
        assert_eq!(right.len(), 11);
        assert!(right.iter().all(|&i| n.position(i)[0] == 4.0));
        assert_eq!(n.on_edge(Edge::Top).len(), 21);
    }
}
