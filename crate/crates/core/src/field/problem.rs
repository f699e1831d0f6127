//! The assembled discrete problem: stress points, residual operators and
//! the loss with its exact gradient.

use std::sync::Arc;

use rayon::prelude::*;

use super::{def_gradient_at, MlpCache, NeuroPuField};
use crate::discretization::{build_quadrature, NodeSet, Point, Subdomain, MAX_DIM};
use crate::error::{Error, Result};
use crate::materials::MaterialModel;
use crate::residual::{compile_operator, BodyForce, LocalResidual, Scheme, StrainDataSet, Tensor, TractionMap};
use crate::rk_basis::{build_shape_table, RkConfig, ShapeTable};

/// How Young's modulus enters the residual.
#[derive(Clone)]
pub enum ModulusInput {
    Uniform(f64),
    /// Known spatial field, sampled once at the stress points.
    Pointwise(Arc<dyn Fn(&Point) -> f64 + Send + Sync>),
    /// Trainable NeuroPU field on its own node set.
    Trainable {
        field: NeuroPuField,
        nodes: NodeSet,
        rk: RkConfig,
    },
}

impl std::fmt::Debug for ModulusInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModulusInput::Uniform(e) => write!(f, "Uniform({e})"),
            ModulusInput::Pointwise(_) => write!(f, "Pointwise(..)"),
            ModulusInput::Trainable { nodes, .. } => write!(f, "Trainable({} nodes)", nodes.len()),
        }
    }
}

/// A measured resultant force `∫ P·n ds` over part of the boundary, given by
/// its quadrature points and weights. Penalized as `weight·|R̂ - value|²`.
/// Strain data and displacement conditions fix the modulus only up to a
/// constant factor; one force measurement fixes the factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceMeasurement {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub normal: Point,
    pub value: [f64; 2],
    pub weight: f64,
}

/// Everything needed to assemble a [`NimProblem`].
pub struct ProblemSpec<'a> {
    pub nodes: &'a NodeSet,
    pub rk: RkConfig,
    pub subdomains: &'a [Subdomain],
    pub cells_per_axis: usize,
    pub gauss_order: usize,
    pub scheme: Scheme,
    pub material: MaterialModel,
    pub body_force: &'a BodyForce,
    pub tractions: &'a TractionMap,
    pub displacement: NeuroPuField,
    pub modulus: ModulusInput,
    pub data: Option<StrainDataSet>,
    pub force: Option<ForceMeasurement>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub residual: f64,
    pub data: f64,
}

#[derive(Debug, Clone)]
enum Modulus {
    Fixed(Vec<f64>),
    Trainable { field: NeuroPuField, table: ShapeTable },
}

#[derive(Debug, Clone)]
struct ForceTerm {
    m: ForceMeasurement,
    table: ShapeTable,
    /// Fixed modulus values at the points, or the modulus shape table.
    modulus: Result<Vec<f64>, ShapeTable>,
}

#[derive(Debug, Clone)]
struct DataTerm {
    table: ShapeTable,
    set: StrainDataSet,
}

/// Subdomains processed per reduction chunk. Fixed so that the summation
/// order, and hence every bit of the result, is independent of thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone)]
pub struct NimProblem {
    dim: usize,
    n_nodes: usize,
    unit_material: MaterialModel,
    displacement: NeuroPuField,
    modulus: Modulus,
    table: ShapeTable,
    coeffs: Vec<Tensor>,
    offsets: Vec<usize>,
    constants: Vec<[f64; MAX_DIM]>,
    data: Option<DataTerm>,
    force: Option<ForceTerm>,
}

struct ChunkOut {
    sq: Vec<f64>,
    gd: Vec<f64>,
    ge: Vec<f64>,
}

impl NimProblem {
    pub fn assemble(spec: ProblemSpec<'_>) -> Result<Self> {
        let dim = spec.nodes.dim();
        if spec.material.dim() != dim {
            return Err(Error::config(format!(
                "{:?} material is {}D but the domain is {dim}D",
                spec.material.kind,
                spec.material.dim()
            )));
        }
        if spec.subdomains.is_empty() {
            return Err(Error::config("at least one subdomain is required"));
        }
        let n_nodes = spec.nodes.len();
        if spec.displacement.n_nodes() != n_nodes || spec.displacement.channels() != dim {
            return Err(Error::config(format!(
                "displacement network must have {dim} channels of {n_nodes} outputs"
            )));
        }
        spec.displacement.mask.validate(&spec.rk, n_nodes, dim)?;

        let ops = spec
            .subdomains
            .par_iter()
            .enumerate()
            .map(|(s, sub)| {
                let q = build_quadrature(sub, spec.cells_per_axis, spec.gauss_order)?;
                compile_operator(sub, &q, spec.scheme, spec.body_force, spec.tractions)
                    .map_err(|e| e.context(format!("subdomain {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut points = Vec::new();
        let mut coeffs = Vec::new();
        let mut offsets = vec![0];
        let mut constants = Vec::with_capacity(ops.len());
        for op in ops {
            points.extend_from_slice(&op.points);
            coeffs.extend_from_slice(&op.coeffs);
            offsets.push(points.len());
            constants.push(op.constant);
        }
        let table = build_shape_table(&points, spec.nodes, &spec.rk)
            .map_err(|e| e.context("building stress-point shape table"))?;

        let force = match spec.force {
            None => None,
            Some(m) => {
                if dim != 2 {
                    return Err(Error::config("force measurements need a 2D problem"));
                }
                if m.points.is_empty() || m.points.len() != m.weights.len() {
                    return Err(Error::config("force measurement needs matching, non-empty points and weights"));
                }
                if !(m.weight >= 0.0 && m.weight.is_finite()) {
                    return Err(Error::config(format!("force weight must be non-negative, got {}", m.weight)));
                }
                let table = build_shape_table(&m.points, spec.nodes, &spec.rk)
                    .map_err(|e| e.context("building force-point shape table"))?;
                let modulus = match &spec.modulus {
                    ModulusInput::Uniform(e) => Ok(vec![*e; m.points.len()]),
                    ModulusInput::Pointwise(f) => Ok(m.points.iter().map(|p| f(p)).collect()),
                    ModulusInput::Trainable { nodes, rk, .. } => Err(build_shape_table(&m.points, nodes, rk)
                        .map_err(|e| e.context("building force-point modulus table"))?),
                };
                Some(ForceTerm { m, table, modulus })
            }
        };

        let modulus = match spec.modulus {
            ModulusInput::Uniform(e) => {
                check_modulus(e)?;
                Modulus::Fixed(vec![e; points.len()])
            }
            ModulusInput::Pointwise(f) => {
                let vals: Vec<f64> = points.iter().map(|p| f(p)).collect();
                for &e in &vals {
                    check_modulus(e)?;
                }
                Modulus::Fixed(vals)
            }
            ModulusInput::Trainable { field, nodes, rk } => {
                if field.channels() != 1 || field.n_nodes() != nodes.len() {
                    return Err(Error::config(format!(
                        "modulus network must have 1 channel of {} outputs",
                        nodes.len()
                    )));
                }
                let table = build_shape_table(&points, &nodes, &rk)
                    .map_err(|e| e.context("building modulus shape table"))?;
                Modulus::Trainable { field, table }
            }
        };

        let data = match spec.data {
            None => None,
            Some(set) => {
                if set.dim != dim {
                    return Err(Error::config(format!("strain data is {}D, problem is {dim}D", set.dim)));
                }
                if set.is_empty() {
                    return Err(Error::config("strain data set has no rows"));
                }
                let table = build_shape_table(&set.positions, spec.nodes, &spec.rk)
                    .map_err(|e| e.context("building data-point shape table"))?;
                Some(DataTerm { table, set })
            }
        };

        Ok(Self {
            dim,
            n_nodes,
            unit_material: spec.material.with_youngs(1.0)?,
            displacement: spec.displacement,
            modulus,
            table,
            coeffs,
            offsets,
            constants,
            data,
            force,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subdomain_count(&self) -> usize {
        self.constants.len()
    }

    pub fn stress_point_count(&self) -> usize {
        self.table.len()
    }

    pub fn stress_table(&self) -> &ShapeTable {
        &self.table
    }

    pub fn displacement(&self) -> &NeuroPuField {
        &self.displacement
    }

    pub fn modulus_field(&self) -> Option<&NeuroPuField> {
        match &self.modulus {
            Modulus::Trainable { field, .. } => Some(field),
            Modulus::Fixed(_) => None,
        }
    }

    /// Measured resultant, if a force measurement is configured.
    pub fn force_target(&self) -> Option<[f64; 2]> {
        self.force.as_ref().map(|f| f.m.value)
    }

    /// Model resultant force for the configured measurement.
    pub fn force_resultant(&self, params: &[f64]) -> Result<Option<[f64; 2]>> {
        let Some(ft) = &self.force else {
            return Ok(None);
        };
        let (theta, gamma) = self.split(params)?;
        let d = self.displacement.coefficients(theta)?;
        let e = self.modulus_field().map(|f| f.coefficients(gamma)).transpose()?;
        Ok(Some(self.force_pass(ft, &d, e.as_deref())?.0))
    }

    pub fn data(&self) -> Option<&StrainDataSet> {
        self.data.as_ref().map(|d| &d.set)
    }

    /// Replaces the data penalty without reassembling.
    pub fn set_data_penalty(&mut self, alpha: f64) {
        if let Some(d) = &mut self.data {
            d.set.alpha = alpha;
        }
    }

    pub fn n_theta(&self) -> usize {
        self.displacement.param_count()
    }

    pub fn n_gamma(&self) -> usize {
        self.modulus_field().map_or(0, NeuroPuField::param_count)
    }

    pub fn n_params(&self) -> usize {
        self.n_theta() + self.n_gamma()
    }

    fn split<'p>(&self, params: &'p [f64]) -> Result<(&'p [f64], &'p [f64])> {
        if params.len() != self.n_params() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, problem needs {}",
                params.len(),
                self.n_params()
            )));
        }
        Ok(params.split_at(self.n_theta()))
    }

    /// Displacement nodal coefficients `d̂′`, channel-major.
    pub fn displacement_coefficients(&self, params: &[f64]) -> Result<Vec<f64>> {
        let (theta, _) = self.split(params)?;
        self.displacement.coefficients(theta)
    }

    /// Modulus nodal coefficients, if the modulus is trainable.
    pub fn modulus_coefficients(&self, params: &[f64]) -> Result<Option<Vec<f64>>> {
        let (_, gamma) = self.split(params)?;
        self.modulus_field().map(|f| f.coefficients(gamma)).transpose()
    }

    pub fn loss(&self, params: &[f64]) -> Result<LossParts> {
        self.evaluate(params, None)
    }

    /// Loss and its exact gradient with respect to `params = [θ, γ]`.
    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> Result<LossParts> {
        if grad.len() != params.len() {
            return Err(Error::Argument("gradient buffer has the wrong length".into()));
        }
        self.evaluate(params, Some(grad))
    }

    /// Per-subdomain residual vectors at `params`.
    pub fn residuals(&self, params: &[f64]) -> Result<Vec<LocalResidual>> {
        let (theta, gamma) = self.split(params)?;
        let d = self.displacement.coefficients(theta)?;
        let e = self.modulus_field().map(|f| f.coefficients(gamma)).transpose()?;
        (0..self.subdomain_count())
            .into_par_iter()
            .map(|s| {
                let mut scratch = Scratch::default();
                let r = match self.dim {
                    1 => self.subdomain_residual::<1>(s, &d, e.as_deref(), &mut scratch)?,
                    _ => self.subdomain_residual::<4>(s, &d, e.as_deref(), &mut scratch)?,
                };
                Ok(LocalResidual::new(r, self.dim))
            })
            .collect()
    }

    fn evaluate(&self, params: &[f64], grad: Option<&mut [f64]>) -> Result<LossParts> {
        let (theta, gamma) = self.split(params)?;
        let want = grad.is_some();
        let (d, d_raw, d_cache) = self.displacement.coefficients_cached(theta)?;
        let e_state: Option<(Vec<f64>, Vec<f64>, MlpCache)> = match &self.modulus {
            Modulus::Trainable { field, .. } => Some(field.coefficients_cached(gamma)?),
            Modulus::Fixed(_) => None,
        };
        let e_coef = e_state.as_ref().map(|s| s.0.as_slice());

        let n_sub = self.subdomain_count();
        let n_chunks = n_sub.div_ceil(CHUNK);
        let outs = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let range = c * CHUNK..((c + 1) * CHUNK).min(n_sub);
                match self.dim {
                    1 => self.chunk_pass::<1>(range, &d, e_coef, want),
                    _ => self.chunk_pass::<4>(range, &d, e_coef, want),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut sum_sq = 0.0;
        for o in &outs {
            for v in &o.sq {
                sum_sq += v;
            }
        }
        let residual = sum_sq / n_sub as f64;

        let mut gd = if want { vec![0.0; d.len()] } else { Vec::new() };
        let mut ge = match (&e_state, want) {
            (Some(s), true) => vec![0.0; s.0.len()],
            _ => Vec::new(),
        };
        if want {
            for o in &outs {
                for (a, b) in gd.iter_mut().zip(&o.gd) {
                    *a += b;
                }
                for (a, b) in ge.iter_mut().zip(&o.ge) {
                    *a += b;
                }
            }
        }

        let mut data = match &self.data {
            Some(dt) => self.data_term(dt, &d, want.then_some(&mut gd)),
            None => 0.0,
        };
        if let Some(ft) = &self.force {
            data += self.force_term(ft, &d, e_coef, want.then_some((&mut gd, &mut ge)))?;
        }
        let total = residual + data;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss = {total} (residual {residual}, data {data})"
            )));
        }

        if let Some(grad) = grad {
            let (g_theta, g_gamma) = grad.split_at_mut(self.n_theta());
            g_theta.copy_from_slice(&self.displacement.pullback(theta, &d_raw, &d_cache, gd));
            if let (Some((_, raw, cache)), Some(field)) = (&e_state, self.modulus_field()) {
                g_gamma.copy_from_slice(&field.pullback(gamma, raw, cache, ge));
            }
            if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient component {k} is {}", grad[k])));
            }
        }
        Ok(LossParts { total, residual, data })
    }

    fn data_term(&self, dt: &DataTerm, d: &[f64], gd: Option<&mut Vec<f64>>) -> f64 {
        let n = dt.set.len() as f64;
        let comps = if self.dim == 1 { 1 } else { 4 };
        let mut sum = 0.0;
        let mut diffs = Vec::with_capacity(if gd.is_some() { dt.set.len() } else { 0 });
        for (j, target) in dt.set.f.iter().enumerate() {
            let f = def_gradient_at(d, self.n_nodes, &dt.table, j, self.dim);
            let mut diff = [0.0; 4];
            for c in 0..comps {
                diff[c] = f[c] - target[c];
                sum += diff[c] * diff[c];
            }
            if gd.is_some() {
                diffs.push(diff);
            }
        }
        if let Some(gd) = gd {
            let scale = 2.0 * dt.set.alpha / n;
            for (j, diff) in diffs.iter().enumerate() {
                let row = dt.table.row(j);
                for (k, &node) in row.indices.iter().enumerate() {
                    let g = row.gradients[k];
                    for c in 0..self.dim {
                        let mut acc = 0.0;
                        for jj in 0..self.dim {
                            acc += diff[c * MAX_DIM + jj] * g[jj];
                        }
                        gd[c * self.n_nodes + node as usize] += scale * acc;
                    }
                }
            }
        }
        dt.set.alpha * sum / n
    }

    /// Resultant `Σ w_q E_q P(F_q)·n` plus the per-point F, unit stress and E.
    #[allow(clippy::type_complexity)]
    fn force_pass(&self, ft: &ForceTerm, d: &[f64], e_coef: Option<&[f64]>) -> Result<([f64; 2], Vec<([f64; 4], [f64; 4], f64)>)> {
        let mut r = [0.0; 2];
        let mut states = Vec::with_capacity(ft.m.points.len());
        for q in 0..ft.m.points.len() {
            let f = def_gradient_at(d, self.n_nodes, &ft.table, q, 2);
            let p = self.unit_material.stress_fixed::<4>(&f).map_err(|e| match e {
                Error::Inadmissible { detail, .. } => Error::Inadmissible {
                    point: ft.m.points[q],
                    detail,
                },
                other => other,
            })?;
            let e = match (&ft.modulus, e_coef) {
                (Ok(v), _) => v[q],
                (Err(table), Some(c)) => {
                    let row = table.row(q);
                    row.indices.iter().zip(row.values).map(|(&i, &v)| v * c[i as usize]).sum()
                }
                (Err(_), None) => unreachable!("modulus coefficients missing"),
            };
            let w = ft.m.weights[q];
            for (c, rc) in r.iter_mut().enumerate() {
                for j in 0..2 {
                    *rc += w * e * p[c * MAX_DIM + j] * ft.m.normal[j];
                }
            }
            states.push((f, p, e));
        }
        Ok((r, states))
    }

    fn force_term(
        &self,
        ft: &ForceTerm,
        d: &[f64],
        e_coef: Option<&[f64]>,
        grads: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
    ) -> Result<f64> {
        let (r, states) = self.force_pass(ft, d, e_coef)?;
        let diff = [r[0] - ft.m.value[0], r[1] - ft.m.value[1]];
        let loss = ft.m.weight * (diff[0] * diff[0] + diff[1] * diff[1]);
        let Some((gd, ge)) = grads else {
            return Ok(loss);
        };
        for (q, (f, p, e)) in states.iter().enumerate() {
            // ∂loss/∂P at this point
            let mut g4 = [0.0; 4];
            for c in 0..2 {
                for j in 0..2 {
                    g4[c * MAX_DIM + j] = 2.0 * ft.m.weight * diff[c] * ft.m.weights[q] * ft.m.normal[j];
                }
            }
            if let (Err(table), false) = (&ft.modulus, ge.is_empty()) {
                let ge_q: f64 = (0..4).map(|i| g4[i] * p[i]).sum();
                let row = table.row(q);
                for (&i, &v) in row.indices.iter().zip(row.values) {
                    ge[i as usize] += v * ge_q;
                }
            }
            let (_, h) = self.unit_material.stress_vjp_fixed::<4>(f, &g4.map(|v| v * e))?;
            let row = ft.table.row(q);
            for (m, &node) in row.indices.iter().enumerate() {
                let grad = row.gradients[m];
                for c in 0..2 {
                    gd[c * self.n_nodes + node as usize] += h[c * MAX_DIM] * grad[0] + h[c * MAX_DIM + 1] * grad[1];
                }
            }
        }
        Ok(loss)
    }

    #[inline]
    fn modulus_at(&self, q: usize, e_coef: Option<&[f64]>) -> f64 {
        match (&self.modulus, e_coef) {
            (Modulus::Fixed(v), _) => v[q],
            (Modulus::Trainable { table, .. }, Some(c)) => {
                let row = table.row(q);
                row.indices.iter().zip(row.values).map(|(&i, &v)| v * c[i as usize]).sum()
            }
            (Modulus::Trainable { .. }, None) => unreachable!("modulus coefficients missing"),
        }
    }

    fn locate(&self, err: Error, q: usize) -> Error {
        match err {
            Error::Inadmissible { detail, .. } => Error::Inadmissible {
                point: self.table.points()[q],
                detail,
            },
            other => other,
        }
    }

    /// Residual of subdomain `s`, leaving per-point F, unit stress and modulus in `scratch`.
    fn subdomain_residual<const N: usize>(
        &self,
        s: usize,
        d: &[f64],
        e_coef: Option<&[f64]>,
        scratch: &mut Scratch,
    ) -> Result<[f64; MAX_DIM]> {
        let dim = self.dim;
        let mut r = self.constants[s];
        scratch.clear();
        for q in self.offsets[s]..self.offsets[s + 1] {
            let f4 = def_gradient_at(d, self.n_nodes, &self.table, q, dim);
            let f: [f64; N] = pack(&f4);
            let p = self
                .unit_material
                .stress_fixed::<N>(&f)
                .map_err(|e| self.locate(e, q))?;
            let p4 = unpack(&p);
            let e = self.modulus_at(q, e_coef);
            let c = &self.coeffs[q];
            for k in 0..dim {
                for j in 0..dim {
                    r[k] += e * c[k * MAX_DIM + j] * p4[k * MAX_DIM + j];
                }
            }
            scratch.f.push(f4);
            scratch.p.push(p4);
            scratch.e.push(e);
        }
        Ok(r)
    }

    fn chunk_pass<const N: usize>(
        &self,
        subs: std::ops::Range<usize>,
        d: &[f64],
        e_coef: Option<&[f64]>,
        want: bool,
    ) -> Result<ChunkOut> {
        let dim = self.dim;
        let n_t = self.subdomain_count() as f64;
        let mut out = ChunkOut {
            sq: Vec::with_capacity(subs.len()),
            gd: if want { vec![0.0; d.len()] } else { Vec::new() },
            ge: match (&self.modulus, want) {
                (Modulus::Trainable { field, .. }, true) => vec![0.0; field.n_nodes()],
                _ => Vec::new(),
            },
        };
        let mut scratch = Scratch::default();
        for s in subs {
            let r = self.subdomain_residual::<N>(s, d, e_coef, &mut scratch)?;
            out.sq.push(r[..dim].iter().map(|v| v * v).sum());
            if !want {
                continue;
            }
            for (k, q) in (self.offsets[s]..self.offsets[s + 1]).enumerate() {
                let c = &self.coeffs[q];
                // G = ∂L/∂P at this point
                let mut g4 = [0.0; 4];
                for kk in 0..dim {
                    for j in 0..dim {
                        g4[kk * MAX_DIM + j] = 2.0 / n_t * r[kk] * c[kk * MAX_DIM + j];
                    }
                }
                let e = scratch.e[k];
                if !out.ge.is_empty() {
                    let p4 = &scratch.p[k];
                    let ge_q: f64 = (0..4).map(|i| g4[i] * p4[i]).sum();
                    if let Modulus::Trainable { table, .. } = &self.modulus {
                        let row = table.row(q);
                        for (&i, &v) in row.indices.iter().zip(row.values) {
                            out.ge[i as usize] += v * ge_q;
                        }
                    }
                }
                let f: [f64; N] = pack(&scratch.f[k]);
                let ge: [f64; 4] = g4.map(|v| v * e);
                let (_, h) = self
                    .unit_material
                    .stress_vjp_fixed::<N>(&f, &pack(&ge))
                    .map_err(|err| self.locate(err, q))?;
                let h4 = unpack(&h);
                let row = self.table.row(q);
                for (m, &node) in row.indices.iter().enumerate() {
                    let grad = row.gradients[m];
                    for cc in 0..dim {
                        let mut acc = 0.0;
                        for j in 0..dim {
                            acc += h4[cc * MAX_DIM + j] * grad[j];
                        }
                        out.gd[cc * self.n_nodes + node as usize] += acc;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct Scratch {
    f: Vec<[f64; 4]>,
    p: Vec<[f64; 4]>,
    e: Vec<f64>,
}

impl Scratch {
    fn clear(&mut self) {
        self.f.clear();
        self.p.clear();
        self.e.clear();
    }
}

fn check_modulus(e: f64) -> Result<()> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::config(format!("Young's modulus must be positive, got {e}")));
    }
    Ok(())
}

#[inline]
fn pack<const N: usize>(t: &[f64; 4]) -> [f64; N] {
    std::array::from_fn(|i| t[i])
}

#[inline]
fn unpack<const N: usize>(t: &[f64; N]) -> [f64; 4] {
    let mut o = [0.0; 4];
    o[..N].copy_from_slice(t);
    o
}
