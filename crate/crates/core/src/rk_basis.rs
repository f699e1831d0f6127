//! Reproducing-kernel shape functions with optional boundary singular kernels.
//!
//! For a point `x` the shape function of node `I` is
//! `Ψ_I(x) = p(y_I)ᵀ b(x) φ(z_I)` with `y_I = (x_I - x)/a`, `z_I = |y_I|`,
//! `b = A⁻¹ p(0)` and moment matrix `A = Σ_I p(y_I) p(y_I)ᵀ φ(z_I)`.
//! The monomial basis is evaluated in the scaled coordinate `y`, which gives
//! the same functions as the unscaled form but a far better conditioned `A`.
//! Gradients are the exact derivatives of that expression.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::discretization::{NodeSet, Point, MAX_DIM};
use crate::error::{Error, Result};

/// Moment matrices whose equilibrated condition estimate exceeds this are
/// rejected.
pub const MAX_MOMENT_CONDITION: f64 = 1e12;

/// Cubic B-spline kernel and its derivative with respect to `z`.
pub fn cubic_bspline(z: f64) -> Result<(f64, f64)> {
    if z < 0.0 || z.is_nan() {
        return Err(Error::Argument(format!(
            "kernel argument must be non-negative, got {z}"
        )));
    }
    Ok(bspline(z))
}

#[inline]
pub(crate) fn bspline(z: f64) -> (f64, f64) {
    if z <= 0.5 {
        (
            2.0 / 3.0 - 4.0 * z * z * (1.0 - z),
            z * (12.0 * z - 8.0),
        )
    } else if z <= 1.0 {
        (
            4.0 / 3.0 * (1.0 - z).powi(3),
            -4.0 * (1.0 - z).powi(2),
        )
    } else {
        (0.0, 0.0)
    }
}

/// `cubic_bspline(z) / max(z, z_floor)^exponent`, with derivative.
pub fn singular_kernel(z: f64, exponent: i32, z_floor: f64) -> (f64, f64) {
    let (phi, dphi) = bspline(z.max(0.0));
    if phi == 0.0 && dphi == 0.0 {
        return (0.0, 0.0);
    }
    if z < z_floor {
        let s = z_floor.powi(-exponent);
        (phi * s, dphi * s)
    } else {
        let s = z.powi(-exponent);
        (phi * s, (dphi - exponent as f64 * phi / z) * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkConfig {
    /// Order of monomial completeness.
    pub order: usize,
    /// Support radius normalized by the nodal spacing.
    pub a_bar: f64,
    /// Nodes whose kernel is replaced by the singular kernel, with exponent.
    pub singular: BTreeMap<usize, i32>,
    pub z_floor: f64,
}

impl RkConfig {
    pub const DEFAULT_SINGULAR_EXPONENT: i32 = 2;
    pub const DEFAULT_Z_FLOOR: f64 = 1e-8;

    pub fn new(order: usize, a_bar: f64) -> Self {
        Self {
            order,
            a_bar,
            singular: BTreeMap::new(),
            z_floor: Self::DEFAULT_Z_FLOOR,
        }
    }

    pub fn with_singular_nodes(mut self, nodes: impl IntoIterator<Item = usize>) -> Self {
        for n in nodes {
            self.singular.insert(n, Self::DEFAULT_SINGULAR_EXPONENT);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("RK order must be at least 1"));
        }
        if !(self.a_bar > 1.0) {
            return Err(Error::config(format!(
                "normalized support a_bar must exceed 1, got {}",
                self.a_bar
            )));
        }
        if !(self.z_floor > 0.0) {
            return Err(Error::config("z_floor must be positive"));
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.order.hash(&mut h);
        self.a_bar.to_bits().hash(&mut h);
        self.z_floor.to_bits().hash(&mut h);
        self.singular.hash(&mut h);
        h.finish()
    }
}

/// Exponents of the complete monomial basis of total degree ≤ `order`,
/// ordered by degree: 1, x, y, x², xy, y², ...
pub fn monomial_exponents(dim: usize, order: usize) -> Vec<[u32; MAX_DIM]> {
    let mut out = Vec::new();
    for t in 0..=order as u32 {
        if dim == 1 {
            out.push([t, 0]);
        } else {
            for i in (0..=t).rev() {
                out.push([i, t - i]);
            }
        }
    }
    out
}

fn eval_basis(exps: &[[u32; MAX_DIM]], y: &Point, p: &mut [f64], dp: &mut [[f64; MAX_DIM]]) {
    for (k, e) in exps.iter().enumerate() {
        let px = y[0].powi(e[0] as i32);
        let py = y[1].powi(e[1] as i32);
        p[k] = px * py;
        let dx = if e[0] == 0 {
            0.0
        } else {
            e[0] as f64 * y[0].powi(e[0] as i32 - 1) * py
        };
        let dy = if e[1] == 0 {
            0.0
        } else {
            e[1] as f64 * y[1].powi(e[1] as i32 - 1) * px
        };
        dp[k] = [dx, dy];
    }
}

/// Shape functions at one point: the nodes with nonzero kernel, their
/// values, and spatial gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub gradients: Vec<Point>,
}

struct Neighbor {
    index: usize,
    w: f64,
    dw: Point,
}

pub fn evaluate_shape(x: &Point, nodes: &NodeSet, cfg: &RkConfig) -> Result<ShapeSample> {
    let dim = nodes.dim();
    let a = cfg.a_bar * nodes.h();
    let exps = monomial_exponents(dim, cfg.order);
    let m = exps.len();

    let mut nbrs: Vec<Neighbor> = Vec::new();
    nodes.for_each_within(x, a, |i| {
        let xi = nodes.position(i);
        let mut y = [0.0; MAX_DIM];
        for d in 0..dim {
            y[d] = (xi[d] - x[d]) / a;
        }
        let z = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if z >= 1.0 {
            return;
        }
        let (w, wz) = match cfg.singular.get(&i) {
            Some(&e) => singular_kernel(z, e, cfg.z_floor),
            None => bspline(z),
        };
        let mut dw = [0.0; MAX_DIM];
        if z > 0.0 {
            for d in 0..dim {
                dw[d] = wz * (-y[d] / (a * z));
            }
        }
        nbrs.push(Neighbor { index: i, w, dw });
    });
    if nbrs.len() < m {
        return Err(Error::SupportCoverage {
            point: *x,
            detail: format!(
                "{} nodes within support radius {a:.4e}, need at least {m}",
                nbrs.len()
            ),
        });
    }

    let n = nbrs.len();
    let mut pvals = vec![0.0; n * m];
    let mut pders = vec![[0.0; MAX_DIM]; n * m];
    let mut amat = DMatrix::<f64>::zeros(m, m);
    let mut damat: Vec<DMatrix<f64>> = (0..dim).map(|_| DMatrix::zeros(m, m)).collect();
    for (k, nb) in nbrs.iter().enumerate() {
        let xi = nodes.position(nb.index);
        let mut y = [0.0; MAX_DIM];
        for d in 0..dim {
            y[d] = (xi[d] - x[d]) / a;
        }
        let p = &mut pvals[k * m..(k + 1) * m];
        let dp = &mut pders[k * m..(k + 1) * m];
        eval_basis(&exps, &y, p, dp);
        // d/dx = -(1/a) d/dy
        for v in dp.iter_mut() {
            for c in v.iter_mut() {
                *c *= -1.0 / a;
            }
        }
        for r in 0..m {
            for c in 0..m {
                amat[(r, c)] += nb.w * p[r] * p[c];
                for d in 0..dim {
                    damat[d][(r, c)] +=
                        nb.w * (dp[r][d] * p[c] + p[r] * dp[c][d]) + nb.dw[d] * p[r] * p[c];
                }
            }
        }
    }

    // Symmetric diagonal equilibration before factoring.
    let scale: Vec<f64> = (0..m)
        .map(|i| {
            let d = amat[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut ahat = amat.clone();
    for r in 0..m {
        for c in 0..m {
            ahat[(r, c)] *= scale[r] * scale[c];
        }
    }
    let chol = ahat.cholesky().ok_or_else(|| Error::SupportCoverage {
        point: *x,
        detail: "moment matrix is not positive definite".into(),
    })?;
    let l = chol.l_dirty();
    let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
    for i in 0..m {
        let v = l[(i, i)].abs();
        lmin = lmin.min(v);
        lmax = lmax.max(v);
    }
    let cond = (lmax / lmin).powi(2);
    if !(cond <= MAX_MOMENT_CONDITION) {
        return Err(Error::SupportCoverage {
            point: *x,
            detail: format!("moment matrix condition estimate {cond:.3e} exceeds 1e12"),
        });
    }
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let scaled = DVector::from_iterator(m, (0..m).map(|i| rhs[i] * scale[i]));
        let s = chol.solve(&scaled);
        DVector::from_iterator(m, (0..m).map(|i| s[i] * scale[i]))
    };
    let mut e1 = DVector::zeros(m);
    e1[0] = 1.0;
    let b = solve(&e1);
    let db: Vec<DVector<f64>> = (0..dim).map(|d| -solve(&(&damat[d] * &b))).collect();

    let mut sample = ShapeSample {
        indices: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        gradients: Vec::with_capacity(n),
    };
    for (k, nb) in nbrs.iter().enumerate() {
        let p = &pvals[k * m..(k + 1) * m];
        let dp = &pders[k * m..(k + 1) * m];
        let pb: f64 = (0..m).map(|r| p[r] * b[r]).sum();
        let mut g = [0.0; MAX_DIM];
        for d in 0..dim {
            let dpb: f64 = (0..m).map(|r| dp[r][d] * b[r]).sum();
            let pdb: f64 = (0..m).map(|r| p[r] * db[d][r]).sum();
            g[d] = nb.dw[d] * pb + nb.w * (dpb + pdb);
        }
        sample.indices.push(nb.index);
        sample.values.push(nb.w * pb);
        sample.gradients.push(g);
    }
    Ok(sample)
}

/// Borrowed view of one row of a [`ShapeTable`].
#[derive(Debug, Clone, Copy)]
pub struct ShapeRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
    pub gradients: &'a [Point],
}

/// Shape-function samples at a fixed list of points, stored row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    points: Vec<Point>,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    gradients: Vec<Point>,
    node_count: usize,
    dim: usize,
    /// Fingerprint of the node set used to build the table.
    pub node_set_id: u64,
    /// Fingerprint of the RK configuration used to build the table.
    pub config_id: u64,
}

pub fn node_set_fingerprint(nodes: &NodeSet) -> u64 {
    let mut h = DefaultHasher::new();
    nodes.dim().hash(&mut h);
    nodes.counts().hash(&mut h);
    for p in nodes.positions() {
        p[0].to_bits().hash(&mut h);
        p[1].to_bits().hash(&mut h);
    }
    h.finish()
}

const TABLE_CHUNK: usize = 4096;

pub fn build_shape_table(points: &[Point], nodes: &NodeSet, cfg: &RkConfig) -> Result<ShapeTable> {
    cfg.validate()?;
    let mut table = ShapeTable {
        points: points.to_vec(),
        offsets: Vec::with_capacity(points.len() + 1),
        indices: Vec::new(),
        values: Vec::new(),
        gradients: Vec::new(),
        node_count: nodes.len(),
        dim: nodes.dim(),
        node_set_id: node_set_fingerprint(nodes),
        config_id: cfg.fingerprint(),
    };
    table.offsets.push(0);
    for (c, chunk) in points.chunks(TABLE_CHUNK).enumerate() {
        let samples: Vec<ShapeSample> = chunk
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                evaluate_shape(x, nodes, cfg).map_err(|e| {
                    e.context(format!("shape table point {}", c * TABLE_CHUNK + k))
                })
            })
            .collect::<Result<_>>()?;
        for s in samples {
            table.indices.extend(s.indices.iter().map(|&i| i as u32));
            table.values.extend_from_slice(&s.values);
            table.gradients.extend_from_slice(&s.gradients);
            table.offsets.push(table.indices.len());
        }
    }
    Ok(table)
}

impl ShapeTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> ShapeRow<'_> {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        ShapeRow {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
            gradients: &self.gradients[a..b],
        }
    }

    pub fn sample(&self, i: usize) -> ShapeSample {
        let r = self.row(i);
        ShapeSample {
            indices: r.indices.iter().map(|&k| k as usize).collect(),
            values: r.values.to_vec(),
            gradients: r.gradients.to_vec(),
        }
    }

    /// `Σ_I Ψ_I(x_i) c_I` at every table point.
    pub fn interpolate(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let r = self.row(i);
                r.indices
                    .iter()
                    .zip(r.values)
                    .map(|(&k, &v)| v * coeffs[k as usize])
                    .sum()
            })
            .collect()
    }

    /// Debug dump: one line per (point, node) pair.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("point,node,psi,dpsi_dx,dpsi_dy\n");
        for i in 0..self.len() {
            let r = self.row(i);
            for k in 0..r.indices.len() {
                out.push_str(&format!(
                    "{},{},{:.17e},{:.17e},{:.17e}\n",
                    i, r.indices[k], r.values[k], r.gradients[k][0], r.gradients[k][1]
                ));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_node_grid, Domain, Edge};

    #[test]
    fn bspline_branch_values() {
        let (v, d) = cubic_bspline(0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15 && d == 0.0);
        let (lo, _) = bspline(0.5);
        let (hi, _) = bspline(0.5 + 1e-15);
        assert!((lo - 1.0 / 6.0).abs() < 1e-15);
        assert!((hi - 1.0 / 6.0).abs() < 1e-13);
        assert_eq!(cubic_bspline(1.2).unwrap(), (0.0, 0.0));
        assert!(matches!(cubic_bspline(-0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn bspline_derivative_continuous_and_matches_fd() {
        for &z in &[0.5, 1.0] {
            let l = bspline(z - 1e-12).1;
            let r = bspline(z + 1e-12).1;
            assert!((l - r).abs() < 1e-9, "z={z}: {l} vs {r}");
        }
        for k in 1..100 {
            let z = k as f64 / 100.0 * 1.1;
            let h = 1e-6;
            let fd = (bspline(z + h).0 - bspline(z - h).0) / (2.0 * h);
            assert!((fd - bspline(z).1).abs() < 1e-8, "z={z}");
        }
    }

    #[test]
    fn singular_kernel_values() {
        let (v, _) = singular_kernel(0.5, 2, 1e-8);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(singular_kernel(1.5, 2, 1e-8), (0.0, 0.0));
        let (v0, d0) = singular_kernel(0.0, 2, 1e-8);
        assert!((v0 - (2.0 / 3.0) * 1e16).abs() < 1e3);
        assert!(v0.is_finite() && d0.is_finite());
        let z = 0.3;
        let h = 1e-7;
        let fd = (singular_kernel(z + h, 2, 1e-8).0 - singular_kernel(z - h, 2, 1e-8).0) / (2.0 * h);
        assert!((fd - singular_kernel(z, 2, 1e-8).1).abs() < 1e-6 * fd.abs());
    }

    #[test]
    fn reproduces_quadratics_in_1d() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let nodes = build_node_grid(&d, &[41]).unwrap();
        let cfg = RkConfig::new(2, 2.5);
        for k in 0..=200 {
            let x = -1.0 + 2.0 * k as f64 / 200.0;
            let s = evaluate_shape(&[x, 0.0], &nodes, &cfg).unwrap();
            let m0: f64 = s.values.iter().sum();
            let m1: f64 = s
                .indices
                .iter()
                .zip(&s.values)
                .map(|(&i, v)| v * nodes.position(i)[0])
                .sum();
            let m2: f64 = s
                .indices
                .iter()
                .zip(&s.values)
                .map(|(&i, v)| v * nodes.position(i)[0].powi(2))
                .sum();
            assert!((m0 - 1.0).abs() < 1e-10);
            assert!((m1 - x).abs() < 1e-10);
            assert!((m2 - x * x).abs() < 1e-10);
        }
    }

    #[test]
    fn point_outside_support_is_coverage_error() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let nodes = build_node_grid(&d, &[11]).unwrap();
        let cfg = RkConfig::new(2, 2.5);
        let err = evaluate_shape(&[3.0, 0.0], &nodes, &cfg).unwrap_err();
        assert!(matches!(err, Error::SupportCoverage { .. }));
    }

    #[test]
    fn gradients_match_finite_differences_2d() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let nodes = build_node_grid(&d, &[11, 11]).unwrap();
        let mut sing: Vec<usize> = nodes.on_edge(Edge::Left);
        sing.extend(nodes.on_edge(Edge::Bottom));
        let cfg = RkConfig::new(2, 2.5).with_singular_nodes(sing);
        let h = 1e-6 * nodes.h();
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = [0.02 + 0.96 * rnd(), 0.02 + 0.96 * rnd()];
            let s = evaluate_shape(&x, &nodes, &cfg).unwrap();
            for dir in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[dir] += h;
                xm[dir] -= h;
                let sp = evaluate_shape(&xp, &nodes, &cfg).unwrap();
                let sm = evaluate_shape(&xm, &nodes, &cfg).unwrap();
                let scale = s.gradients.iter().map(|g| g[dir].abs()).fold(0.0, f64::max);
                for (k, &i) in s.indices.iter().enumerate() {
                    let vp = lookup(&sp, i);
                    let vm = lookup(&sm, i);
                    let fd = (vp - vm) / (2.0 * h);
                    let an = s.gradients[k][dir];
                    assert!(
                        (fd - an).abs() <= 1e-6 * scale.max(an.abs()),
                        "x={x:?} node {i} dir {dir}: analytic {an} fd {fd}"
                    );
                }
            }
        }
    }

    fn lookup(s: &ShapeSample, node: usize) -> f64 {
        s.indices
            .iter()
            .position(|&i| i == node)
            .map(|k| s.values[k])
            .unwrap_or(0.0)
    }

    #[test]
    fn table_is_deterministic_and_sized() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        let nodes = build_node_grid(&d, &[41]).unwrap();
        let cfg = RkConfig::new(2, 2.5).with_singular_nodes([0]);
        let pts: Vec<Point> = (0..2020).map(|k| [-1.0 + 2.0 * (k as f64 + 0.5) / 2020.0, 0.0]).collect();
        let t1 = build_shape_table(&pts, &nodes, &cfg).unwrap();
        let t2 = build_shape_table(&pts, &nodes, &cfg).unwrap();
        assert_eq!(t1.len(), 2020);
        assert_eq!(t1, t2);
        for i in 0..t1.len() {
            let s: f64 = t1.row(i).values.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(RkConfig::new(0, 2.5).validate().is_err());
        assert!(RkConfig::new(2, 1.0).validate().is_err());
        let mut c = RkConfig::new(2, 2.5);
        c.z_floor = 0.0;
        assert!(c.validate().is_err());
    }
}
