//! Local Petrov–Galerkin residuals, the subdomain-averaged loss, and the
//! strain-data misfit used for inverse problems.
//!
//! Stress tensors are stored row-major in a 2×2 array; in 1D only entry 0
//! is meaningful.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::{
    BoundaryPoint, Edge, Point, QuadratureSet, SegmentClass, Subdomain, MAX_DIM,
};
use crate::error::{Error, Result};
use crate::rk_basis::bspline;

pub type Tensor = [f64; 4];

/// Body force as a function of reference position.
pub type BodyForce = dyn Fn(&Point) -> [f64; MAX_DIM] + Send + Sync;

/// Prescribed tractions per edge and component; `None` where the component
/// is not traction-controlled.
pub type TractionMap = BTreeMap<Edge, [Option<f64>; MAX_DIM]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Heaviside test function.
    #[serde(rename = "h")]
    NimH,
    /// Cubic B-spline test function.
    #[serde(rename = "c")]
    NimC,
}

impl Scheme {
    pub fn test_family(self) -> TestFunctionFamily {
        match self {
            Scheme::NimH => TestFunctionFamily::Heaviside,
            Scheme::NimC => TestFunctionFamily::CubicBspline,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::NimH => "h",
            Scheme::NimC => "c",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h" | "nim_h" | "nim/h" => Ok(Scheme::NimH),
            "c" | "nim_c" | "nim/c" => Ok(Scheme::NimC),
            _ => Err(Error::Argument(format!("unknown scheme `{s}`, expected h or c"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunctionFamily {
    Heaviside,
    CubicBspline,
}

impl TestFunctionFamily {
    /// `(v, ∇v)` of the subdomain's test function at `x`.
    pub fn evaluate(self, x: &Point, sub: &Subdomain) -> (f64, Point) {
        match self {
            TestFunctionFamily::Heaviside => (if sub.contains(x) { 1.0 } else { 0.0 }, [0.0; MAX_DIM]),
            TestFunctionFamily::CubicBspline => test_function_c(x, sub),
        }
    }
}

/// Tensor product of cubic B-splines centered on the unclipped subdomain.
pub fn test_function_c(x: &Point, sub: &Subdomain) -> (f64, Point) {
    let dim = sub.dim();
    let mut vals = [1.0; MAX_DIM];
    let mut ders = [0.0; MAX_DIM];
    for d in 0..dim {
        let r = sub.half_width[d];
        let s = x[d] - sub.center[d];
        let (v, dv) = bspline(s.abs() / r);
        vals[d] = v;
        ders[d] = dv * s.signum() / r;
    }
    let v: f64 = vals[..dim].iter().product();
    let mut g = [0.0; MAX_DIM];
    for d in 0..dim {
        g[d] = ders[d] * (0..dim).filter(|&e| e != d).map(|e| vals[e]).product::<f64>();
    }
    (v, g)
}

/// One residual component per test direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalResidual {
    pub components: [f64; MAX_DIM],
    pub dim: usize,
}

impl LocalResidual {
    pub fn new(components: [f64; MAX_DIM], dim: usize) -> Self {
        Self { components, dim }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components[..self.dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.as_slice().iter().map(|r| r * r).sum()
    }
}

fn traction(tractions: &TractionMap, bp: &BoundaryPoint, sub: &Subdomain, k: usize) -> Result<f64> {
    let edge = sub.faces[bp.face]
        .edge
        .ok_or_else(|| Error::config("natural class on an interior face"))?;
    tractions
        .get(&edge)
        .and_then(|t| t[k])
        .ok_or_else(|| {
            Error::config(format!(
                "no traction given for component {k} on the {} edge",
                edge.name()
            ))
        })
}

#[inline]
fn normal_component(p: &Tensor, n: &Point, k: usize, dim: usize) -> f64 {
    (0..dim).map(|j| p[k * MAX_DIM + j] * n[j]).sum()
}

fn check_aligned(quad: &QuadratureSet, domain: Option<&[Tensor]>, boundary: &[Tensor]) -> Result<()> {
    if boundary.len() != quad.boundary_points.len()
        || domain.is_some_and(|d| d.len() != quad.domain_points.len())
    {
        return Err(Error::Argument(
            "stress samples are not aligned with the quadrature set".into(),
        ));
    }
    Ok(())
}

/// Heaviside-tested residual: body force over the box plus the boundary flux.
pub fn local_residual_h(
    sub: &Subdomain,
    quad: &QuadratureSet,
    boundary_stress: &[Tensor],
    body_force: &BodyForce,
    tractions: &TractionMap,
) -> Result<LocalResidual> {
    check_aligned(quad, None, boundary_stress)?;
    let dim = sub.dim();
    let mut r = [0.0; MAX_DIM];
    for qp in &quad.domain_points {
        let f = body_force(&qp.x);
        for k in 0..dim {
            r[k] += qp.weight * f[k];
        }
    }
    for (bp, p) in quad.boundary_points.iter().zip(boundary_stress) {
        for k in 0..dim {
            r[k] += bp.weight
                * match bp.classes[k] {
                    SegmentClass::Interior | SegmentClass::Essential => normal_component(p, &bp.normal, k, dim),
                    SegmentClass::Natural => traction(tractions, bp, sub, k)?,
                };
        }
    }
    Ok(LocalResidual::new(r, dim))
}

/// B-spline-tested residual. Faces inside the domain carry no term since the
/// test function vanishes there.
pub fn local_residual_c(
    sub: &Subdomain,
    quad: &QuadratureSet,
    domain_stress: &[Tensor],
    boundary_stress: &[Tensor],
    body_force: &BodyForce,
    tractions: &TractionMap,
) -> Result<LocalResidual> {
    check_aligned(quad, Some(domain_stress), boundary_stress)?;
    let dim = sub.dim();
    let mut r = [0.0; MAX_DIM];
    for (qp, p) in quad.domain_points.iter().zip(domain_stress) {
        let (v, g) = test_function_c(&qp.x, sub);
        let f = body_force(&qp.x);
        for k in 0..dim {
            let div: f64 = (0..dim).map(|j| g[j] * p[k * MAX_DIM + j]).sum();
            r[k] += qp.weight * (div - v * f[k]);
        }
    }
    for (bp, p) in quad.boundary_points.iter().zip(boundary_stress) {
        let (v, _) = test_function_c(&bp.x, sub);
        for k in 0..dim {
            match bp.classes[k] {
                SegmentClass::Interior => {}
                SegmentClass::Essential => r[k] -= bp.weight * v * normal_component(p, &bp.normal, k, dim),
                SegmentClass::Natural => r[k] -= bp.weight * v * traction(tractions, bp, sub, k)?,
            }
        }
    }
    Ok(LocalResidual::new(r, dim))
}

/// The residual of one subdomain as an affine map of the stresses at its
/// stress points: `R_k = constant_k + Σ_q Σ_J coeffs[q][kJ] P_q[kJ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOperator {
    pub points: Vec<Point>,
    pub coeffs: Vec<Tensor>,
    pub constant: [f64; MAX_DIM],
    pub dim: usize,
}

impl ResidualOperator {
    pub fn apply(&self, stresses: &[Tensor]) -> LocalResidual {
        let mut r = self.constant;
        for (c, p) in self.coeffs.iter().zip(stresses) {
            for k in 0..self.dim {
                for j in 0..self.dim {
                    r[k] += c[k * MAX_DIM + j] * p[k * MAX_DIM + j];
                }
            }
        }
        LocalResidual::new(r, self.dim)
    }
}

/// Precompiles the residual of `sub` under `scheme`, dropping points whose
/// coefficients are all zero.
pub fn compile_operator(
    sub: &Subdomain,
    quad: &QuadratureSet,
    scheme: Scheme,
    body_force: &BodyForce,
    tractions: &TractionMap,
) -> Result<ResidualOperator> {
    let dim = sub.dim();
    let mut op = ResidualOperator {
        points: Vec::new(),
        coeffs: Vec::new(),
        constant: [0.0; MAX_DIM],
        dim,
    };
    let push = |op: &mut ResidualOperator, x: Point, c: Tensor| {
        if c.iter().any(|&v| v != 0.0) {
            op.points.push(x);
            op.coeffs.push(c);
        }
    };
    match scheme {
        Scheme::NimH => {
            for qp in &quad.domain_points {
                let f = body_force(&qp.x);
                for k in 0..dim {
                    op.constant[k] += qp.weight * f[k];
                }
            }
            for bp in &quad.boundary_points {
                let mut c = [0.0; 4];
                for k in 0..dim {
                    match bp.classes[k] {
                        SegmentClass::Natural => op.constant[k] += bp.weight * traction(tractions, bp, sub, k)?,
                        _ => {
                            for j in 0..dim {
                                c[k * MAX_DIM + j] = bp.weight * bp.normal[j];
                            }
                        }
                    }
                }
                push(&mut op, bp.x, c);
            }
        }
        Scheme::NimC => {
            for qp in &quad.domain_points {
                let (v, g) = test_function_c(&qp.x, sub);
                let f = body_force(&qp.x);
                let mut c = [0.0; 4];
                for k in 0..dim {
                    op.constant[k] -= qp.weight * v * f[k];
                    for j in 0..dim {
                        c[k * MAX_DIM + j] = qp.weight * g[j];
                    }
                }
                push(&mut op, qp.x, c);
            }
            for bp in &quad.boundary_points {
                let (v, _) = test_function_c(&bp.x, sub);
                let mut c = [0.0; 4];
                for k in 0..dim {
                    match bp.classes[k] {
                        SegmentClass::Interior => {}
                        SegmentClass::Essential => {
                            for j in 0..dim {
                                c[k * MAX_DIM + j] = -bp.weight * v * bp.normal[j];
                            }
                        }
                        SegmentClass::Natural => {
                            op.constant[k] -= bp.weight * v * traction(tractions, bp, sub, k)?
                        }
                    }
                }
                push(&mut op, bp.x, c);
            }
        }
    }
    Ok(op)
}

/// `(1/N_T) Σ_s ‖R_s‖²`, summed in order.
pub fn assemble_loss(residuals: &[LocalResidual]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    residuals.iter().map(LocalResidual::norm_sq).sum::<f64>() / residuals.len() as f64
}

/// Deformation-gradient samples used as inverse-problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainDataSet {
    pub dim: usize,
    pub positions: Vec<Point>,
    pub f: Vec<Tensor>,
    pub alpha: f64,
}

impl StrainDataSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn header(dim: usize) -> &'static [&'static str] {
        if dim == 1 {
            &["X", "Fxx"]
        } else {
            &["X", "Y", "Fxx", "Fxy", "Fyx", "Fyy"]
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        w.write_record(Self::header(self.dim)).map_err(io)?;
        for (x, f) in self.positions.iter().zip(&self.f) {
            let row: Vec<String> = if self.dim == 1 {
                vec![crate::io::fmt_f64(x[0]), crate::io::fmt_f64(f[0])]
            } else {
                [x[0], x[1], f[0], f[1], f[2], f[3]].iter().map(|&v| crate::io::fmt_f64(v)).collect()
            };
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        crate::io::write_atomic(path, &bytes)
    }

    /// Reads a data file; the header decides the dimension.
    pub fn read_csv(path: &Path, alpha: f64) -> Result<Self> {
        let schema = |detail: String| Error::Schema {
            path: path.to_path_buf(),
            detail,
        };
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => schema(format!("cannot read data file: {io}")),
                other => schema(format!("{other:?}")),
            })?;
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| schema(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(schema("file is empty (missing header)".into()));
        }
        let dim = if headers.len() == 2 { 1 } else { 2 };
        let expected = Self::header(dim);
        if headers.len() != expected.len() {
            return Err(schema(format!(
                "expected columns {}, found {}",
                expected.join(","),
                headers.join(",")
            )));
        }
        for (h, e) in headers.iter().zip(expected) {
            if h != e {
                return Err(schema(format!("unexpected column `{h}` where `{e}` was expected")));
            }
        }
        let mut data = StrainDataSet {
            dim,
            positions: Vec::new(),
            f: Vec::new(),
            alpha,
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| schema(format!("row {}: {e}", i + 1)))?;
            let mut vals = [0.0; 6];
            for (c, field) in rec.iter().enumerate() {
                vals[c] = field
                    .parse()
                    .map_err(|_| schema(format!("row {}: column `{}` is not a number", i + 1, expected[c])))?;
            }
            if dim == 1 {
                data.positions.push([vals[0], 0.0]);
                data.f.push([vals[1], 0.0, 0.0, 0.0]);
            } else {
                data.positions.push([vals[0], vals[1]]);
                data.f.push([vals[2], vals[3], vals[4], vals[5]]);
            }
        }
        if data.is_empty() {
            return Err(schema("no data rows".into()));
        }
        Ok(data)
    }
}

/// `(α/N) Σ_j ‖F_j − F̂_j‖²` over the tensor components.
pub fn data_loss(f_hat: &[Tensor], data: &StrainDataSet) -> Result<f64> {
    if f_hat.len() != data.len() {
        return Err(Error::Argument(format!(
            "{} deformation gradients for {} data points",
            f_hat.len(),
            data.len()
        )));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let n = if data.dim == 1 { 1 } else { 4 };
    let sum: f64 = f_hat
        .iter()
        .zip(&data.f)
        .map(|(a, b)| (0..n).map(|c| (b[c] - a[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(data.alpha * sum / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_quadrature, build_subdomains, Domain, EdgeKinds};

    fn plate_subs(kinds: &EdgeKinds) -> (Domain, Vec<Subdomain>) {
        let dom = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let subs = build_subdomains(&dom, &[5, 5], 1.5, 0.2, kinds).unwrap();
        (dom, subs)
    }

    fn all_kinds(class: SegmentClass) -> EdgeKinds {
        Edge::all(2).into_iter().map(|e| (e, [class; 2])).collect()
    }

    fn zero_force(_: &Point) -> [f64; 2] {
        [0.0; 2]
    }

    #[test]
    fn test_function_values() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let kinds: EdgeKinds = Edge::all(1).into_iter().map(|e| (e, [SegmentClass::Essential; 2])).collect();
        let subs = build_subdomains(&dom, &[5], 1.0, 0.2, &kinds).unwrap();
        let s = &subs[2];
        let (v, g) = test_function_c(&s.center, s);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g[0], 0.0);
        let (v, _) = test_function_c(&[s.center[0] + 0.1, 0.0], s);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        let (v, _) = test_function_c(&[s.center[0] + 0.2, 0.0], s);
        assert_eq!(v, 0.0);

        let (_, subs2) = plate_subs(&all_kinds(SegmentClass::Essential));
        let s = &subs2[12];
        let (v, g) = test_function_c(&s.center, s);
        assert!((v - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(g, [0.0, 0.0]);
        let (v, _) = test_function_c(&[s.upper[0], s.center[1]], s);
        assert_eq!(v, 0.0);
        let h = 1e-6;
        let x = [s.center[0] + 0.07, s.center[1] - 0.11];
        let (_, g) = test_function_c(&x, s);
        let fd0 = (test_function_c(&[x[0] + h, x[1]], s).0 - test_function_c(&[x[0] - h, x[1]], s).0) / (2.0 * h);
        let fd1 = (test_function_c(&[x[0], x[1] + h], s).0 - test_function_c(&[x[0], x[1] - h], s).0) / (2.0 * h);
        assert!((fd0 - g[0]).abs() < 1e-7 && (fd1 - g[1]).abs() < 1e-7);
    }

    #[test]
    fn uniform_stress_on_closed_box_gives_zero() {
        let (_, subs) = plate_subs(&all_kinds(SegmentClass::Essential));
        let s = &subs[12];
        assert!(s.faces.iter().all(|f| f.is_interior()));
        let q = build_quadrature(s, 2, 5).unwrap();
        let p = [1.3, -0.4, 2.2, 0.7];
        let dom_p = vec![p; q.domain_points.len()];
        let bnd_p = vec![p; q.boundary_points.len()];
        let t = TractionMap::new();
        let rh = local_residual_h(s, &q, &bnd_p, &zero_force, &t).unwrap();
        assert!(rh.as_slice().iter().all(|r| r.abs() < 1e-12));
        let rc = local_residual_c(s, &q, &dom_p, &bnd_p, &zero_force, &t).unwrap();
        assert!(rc.as_slice().iter().all(|r| r.abs() < 1e-10));
        assert_eq!(rh.as_slice().len(), 2);
        let zero = vec![[0.0; 4]; q.domain_points.len()];
        let zb = vec![[0.0; 4]; q.boundary_points.len()];
        assert_eq!(local_residual_c(s, &q, &zero, &zb, &zero_force, &t).unwrap().components, [0.0; 2]);
    }

    #[test]
    fn missing_traction_is_config_error() {
        let (_, subs) = plate_subs(&all_kinds(SegmentClass::Natural));
        let s = &subs[0];
        let q = build_quadrature(s, 1, 3).unwrap();
        let bnd = vec![[0.0; 4]; q.boundary_points.len()];
        let err = local_residual_h(s, &q, &bnd, &zero_force, &TractionMap::new()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(compile_operator(s, &q, Scheme::NimC, &zero_force, &TractionMap::new()).is_err());
        // zero traction contributes exactly nothing
        let t: TractionMap = Edge::all(2).into_iter().map(|e| (e, [Some(0.0); 2])).collect();
        let r = local_residual_h(s, &q, &bnd, &zero_force, &t).unwrap();
        assert_eq!(r.components, [0.0; 2]);
    }

    #[test]
    fn bar_exact_stress_gives_small_residuals() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let kinds: EdgeKinds = Edge::all(1).into_iter().map(|e| (e, [SegmentClass::Essential; 2])).collect();
        let subs = build_subdomains(&dom, &[101], 2.5, 0.05, &kinds).unwrap();
        let f = |x: &Point| [x[0], 0.0];
        let sigma = |x: &Point| [(1.0 - x[0] * x[0]) / 2.0, 0.0, 0.0, 0.0];
        let t = TractionMap::new();
        for s in &subs {
            let q = build_quadrature(s, 4, 5).unwrap();
            let dp: Vec<Tensor> = q.domain_points.iter().map(|p| sigma(&p.x)).collect();
            let bp: Vec<Tensor> = q.boundary_points.iter().map(|p| sigma(&p.x)).collect();
            let rh = local_residual_h(s, &q, &bp, &f, &t).unwrap();
            let rc = local_residual_c(s, &q, &dp, &bp, &f, &t).unwrap();
            assert!(rh.components[0].abs() <= 1e-6, "{:?}", rh);
            assert!(rc.components[0].abs() <= 1e-6, "{:?}", rc);
        }
    }

    #[test]
    fn compiled_operator_matches_direct_evaluation() {
        let mut kinds = all_kinds(SegmentClass::Natural);
        kinds.insert(Edge::Left, [SegmentClass::Essential; 2]);
        kinds.insert(Edge::Right, [SegmentClass::Natural, SegmentClass::Essential]);
        let (_, subs) = plate_subs(&kinds);
        let t: TractionMap = Edge::all(2).into_iter().map(|e| (e, [Some(0.3), Some(-1.1)])).collect();
        let f = |x: &Point| [x[0] * x[1], 1.0 - x[0]];
        let stress = |x: &Point| [x[0] + 1.0, x[1] * x[0], (3.0 * x[1]).sin(), x[0] - x[1]];
        for s in &subs {
            let q = build_quadrature(s, 2, 4).unwrap();
            let dp: Vec<Tensor> = q.domain_points.iter().map(|p| stress(&p.x)).collect();
            let bp: Vec<Tensor> = q.boundary_points.iter().map(|p| stress(&p.x)).collect();
            for scheme in [Scheme::NimH, Scheme::NimC] {
                let direct = match scheme {
                    Scheme::NimH => local_residual_h(s, &q, &bp, &f, &t).unwrap(),
                    Scheme::NimC => local_residual_c(s, &q, &dp, &bp, &f, &t).unwrap(),
                };
                let op = compile_operator(s, &q, scheme, &f, &t).unwrap();
                let ps: Vec<Tensor> = op.points.iter().map(stress).collect();
                let r = op.apply(&ps);
                for k in 0..2 {
                    assert!((r.components[k] - direct.components[k]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn loss_arithmetic() {
        assert_eq!(assemble_loss(&[LocalResidual::new([3.0, 4.0], 2)]), 25.0);
        assert_eq!(assemble_loss(&[LocalResidual::new([0.0, 0.0], 2); 4]), 0.0);
        let rs: Vec<LocalResidual> = (0..100)
            .map(|i| LocalResidual::new([(i as f64 * 0.77).sin(), (i as f64 * 1.3).cos()], 2))
            .collect();
        let neg: Vec<LocalResidual> = rs.iter().map(|r| LocalResidual::new([-r.components[0], -r.components[1]], 2)).collect();
        let mut brute = 0.0;
        for k in 0..2 {
            for r in &rs {
                brute += r.components[k] * r.components[k];
            }
        }
        brute /= 100.0;
        let l = assemble_loss(&rs);
        assert!((l - brute).abs() <= 1e-15 * brute);
        assert_eq!(assemble_loss(&neg), l);
    }

    #[test]
    fn data_loss_arithmetic_and_csv() {
        let data = StrainDataSet {
            dim: 2,
            positions: (0..10).map(|i| [i as f64 * 0.1, 0.05 * i as f64]).collect(),
            f: (0..10).map(|i| [1.0 + 0.01 * i as f64, 0.02, -0.03, 1.0 / 3.0]).collect(),
            alpha: 10.0,
        };
        assert_eq!(data_loss(&data.f, &data).unwrap(), 0.0);
        let fh: Vec<Tensor> = data.f.iter().map(|f| [f[0] + 0.1, f[1], f[2] - 0.2, f[3]]).collect();
        let l = data_loss(&fh, &data).unwrap();
        let mut brute = 0.0;
        for j in 0..10 {
            for c in 0..4 {
                brute += (data.f[j][c] - fh[j][c]).powi(2);
            }
        }
        brute *= 10.0 / 10.0;
        assert!((l - brute).abs() <= 1e-15 * brute);
        let d2 = StrainDataSet { alpha: 20.0, ..data.clone() };
        assert!((data_loss(&fh, &d2).unwrap() - 2.0 * l).abs() < 1e-14);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        data.write_csv(&p).unwrap();
        let back = StrainDataSet::read_csv(&p, 10.0).unwrap();
        assert_eq!(back, data);

        std::fs::write(&p, "X,Y,Fxx,Fxy,Fyx,Fzz\n0,0,1,0,0,1\n").unwrap();
        let e = StrainDataSet::read_csv(&p, 1.0).unwrap_err();
        assert!(e.to_string().contains("Fzz"), "{e}");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(StrainDataSet::read_csv(&p, 1.0), Err(Error::Schema { .. })));
        std::fs::write(&p, "X,Y,Fxx,Fxy,Fyx,Fyy\n").unwrap();
        assert!(matches!(StrainDataSet::read_csv(&p, 1.0), Err(Error::Schema { .. })));
    }
}
