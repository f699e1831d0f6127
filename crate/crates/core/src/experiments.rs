//! Experiment drivers: building problems from configs, forward and inverse
//! solves, strain-data generation, exports and diagnostics.

pub mod config;
pub mod diagnostics;
pub mod modulus;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{
    BcValue, BodyForceSpec, DataGenConfig, DiscretizationConfig, DomainConfig, EdgeBc, ForceConfig, InverseConfig,
    MaterialConfig, ModulusSpec, NetworkConfig, OutputConfig, PatchConfig, ProblemConfig, ReferenceSpec,
};
pub use modulus::{grf_modulus, symmetric_modulus, GridField, ModulusFn};

use crate::discretization::gauss::mapped_rule;
use crate::discretization::{
    build_node_grid, build_subdomains, Domain, Edge, EdgeKinds, NodeSet, Point, SegmentClass, Subdomain,
    MAX_DIM,
};
use crate::error::{Error, Result};
use crate::field::{
    def_gradient_at, def_gradients, write_checkpoint, ConstraintMask, ForceMeasurement, LossParts, MaskEntry, Mlp,
    ModulusInput, NeuroPuField, NimProblem, OutputTransform, ProblemSpec,
};
use crate::io::{fmt_f64, write_atomic};
use crate::materials::{Kinematics, MaterialModel};
use crate::optimizer::{lbfgs_minimize, relative_l2, RecordExtras, StopReason, TrainingHistory};
use crate::residual::{BodyForce, Scheme, StrainDataSet, Tensor, TractionMap};
use crate::rk_basis::{build_shape_table, RkConfig, ShapeTable};

/// Closed-form displacement and strain of the bar with body force `x` and
/// end displacements `0` and `136/135`.
pub fn analytic_bar_solution(x: f64) -> (f64, f64) {
    let u = (68.0 + 105.0 * x - 40.0 * x.powi(3) + 3.0 * x.powi(5)) / 135.0;
    let eps = (x.powi(4) - 8.0 * x * x + 7.0) / 9.0;
    (u, eps)
}

/// Overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub scheme: Option<Scheme>,
    pub seed: Option<u64>,
    /// Print a progress line to stderr every this many iterations.
    pub progress: Option<usize>,
}

/// Discretization and boundary data derived from a config.
pub struct Setup {
    pub config: ProblemConfig,
    pub scheme: Scheme,
    pub seed: u64,
    pub progress: Option<usize>,
    pub domain: Domain,
    pub nodes: NodeSet,
    pub rk: RkConfig,
    pub kinds: EdgeKinds,
    pub subdomains: Vec<Subdomain>,
    pub mask: ConstraintMask,
    pub tractions: TractionMap,
    pub material: MaterialModel,
    /// Known modulus field, if the config defines one.
    pub truth_modulus: Option<ModulusFn>,
    pub body_force: Box<BodyForce>,
}

impl Setup {
    pub fn new(config: &ProblemConfig, opts: RunOptions) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let dim = cfg.dim();
        let d = &cfg.discretization;
        let domain = match cfg.domain.y {
            None => Domain::interval(cfg.domain.x[0], cfg.domain.x[1])?,
            Some(y) => Domain::rectangle((cfg.domain.x[0], cfg.domain.x[1]), (y[0], y[1]))?,
        };
        let nodes = build_node_grid(&domain, &d.nodes)?;
        let material = MaterialModel::new(cfg.material.kind, cfg.material.youngs, cfg.material.poisson)?;

        let mut kinds = EdgeKinds::new();
        let mut tractions = TractionMap::new();
        let mut mask_values: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut singular = Vec::new();
        for edge in Edge::all(dim) {
            let bc = cfg.bc[&edge];
            let mut classes = [SegmentClass::Natural; MAX_DIM];
            let mut t = [None; MAX_DIM];
            let edge_nodes = nodes.on_edge(edge);
            for k in 0..dim {
                match bc.displacement(k) {
                    Some(v) => {
                        classes[k] = SegmentClass::Essential;
                        for &i in &edge_nodes {
                            let x = nodes.position(i);
                            let value = match v {
                                BcValue::Value(v) => v,
                                BcValue::Keyword(_) => affine_displacement(&cfg, &x)[k],
                            };
                            if let Some(old) = mask_values.insert((k, i), value) {
                                if (old - value).abs() > 1e-12 * (1.0 + old.abs()) {
                                    return Err(Error::config(format!(
                                        "conflicting u{} values {old} and {value} at node {i} (bc.{})",
                                        ["x", "y"][k],
                                        edge.name()
                                    )));
                                }
                            }
                            singular.push(i);
                        }
                    }
                    None => {
                        t[k] = Some(match bc.traction(k) {
                            None => 0.0,
                            Some(BcValue::Value(v)) => v,
                            Some(BcValue::Keyword(_)) => affine_traction(&cfg, &material, edge)?[k],
                        });
                    }
                }
            }
            kinds.insert(edge, classes);
            tractions.insert(edge, t);
        }
        let mask = ConstraintMask::new(
            mask_values
                .into_iter()
                .map(|((component, node), value)| MaskEntry { node, component, value })
                .collect(),
        );
        let mut rk = RkConfig::new(d.order, d.a_bar).with_singular_nodes(singular);
        rk.z_floor = d.z_floor;
        rk.validate()?;
        let subdomains = build_subdomains(&domain, &d.subdomains, d.r_bar, nodes.h(), &kinds)?;
        let truth_modulus = cfg.material.modulus.as_ref().map(modulus_fn).transpose()?;
        let body_force: Box<BodyForce> = match cfg.body_force {
            BodyForceSpec::None => Box::new(|_: &Point| [0.0; MAX_DIM]),
            BodyForceSpec::Bar => Box::new(|x: &Point| [x[0], 0.0]),
            BodyForceSpec::Constant { value } => Box::new(move |_: &Point| value),
        };
        Ok(Self {
            scheme: opts.scheme.unwrap_or(d.scheme),
            seed: opts.seed.unwrap_or(cfg.network.seed),
            progress: opts.progress,
            config: cfg,
            domain,
            nodes,
            rk,
            kinds,
            subdomains,
            mask,
            tractions,
            material,
            truth_modulus,
            body_force,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn displacement_field(&self) -> NeuroPuField {
        NeuroPuField::new(
            Mlp::new(self.config.network.hidden.clone(), self.nodes.len(), self.dim()),
            self.mask.clone(),
            OutputTransform::Identity,
        )
    }

    /// Modulus used by forward solves.
    pub fn forward_modulus(&self) -> ModulusInput {
        match &self.truth_modulus {
            Some(f) => ModulusInput::Pointwise(f.clone()),
            None => ModulusInput::Uniform(self.material.youngs),
        }
    }

    pub fn problem(&self, modulus: ModulusInput, data: Option<StrainDataSet>) -> Result<NimProblem> {
        self.problem_with_force(modulus, data, None)
    }

    pub fn problem_with_force(
        &self,
        modulus: ModulusInput,
        data: Option<StrainDataSet>,
        force: Option<ForceMeasurement>,
    ) -> Result<NimProblem> {
        NimProblem::assemble(ProblemSpec {
            nodes: &self.nodes,
            rk: self.rk.clone(),
            subdomains: &self.subdomains,
            cells_per_axis: self.config.discretization.cells_per_axis,
            gauss_order: self.config.discretization.gauss_order,
            scheme: self.scheme,
            material: self.material,
            body_force: self.body_force.as_ref(),
            tractions: &self.tractions,
            displacement: self.displacement_field(),
            modulus,
            data,
            force,
        })
    }

    pub fn force_measurement(&self, fc: &ForceConfig) -> Result<ForceMeasurement> {
        if self.dim() != 2 {
            return Err(Error::config("inverse.force needs a 2D problem"));
        }
        let (points, weights) = edge_quadrature(&self.domain, fc.edge);
        Ok(ForceMeasurement {
            points,
            weights,
            normal: fc.edge.outward_normal(),
            value: fc.value,
            weight: fc.weight,
        })
    }

    /// Resultant `∫ P·n ds` on every edge for displacement coefficients `d`
    /// under the forward modulus. 2D only.
    pub fn edge_resultants(&self, d: &[f64]) -> Result<BTreeMap<Edge, [f64; 2]>> {
        let unit = self.material.with_youngs(1.0)?;
        let mut out = BTreeMap::new();
        for edge in Edge::all(2) {
            let (points, weights) = edge_quadrature(&self.domain, edge);
            let table = build_shape_table(&points, &self.nodes, &self.rk)?;
            let n = edge.outward_normal();
            let mut r = [0.0; 2];
            for (q, p) in points.iter().enumerate() {
                let e = match &self.truth_modulus {
                    Some(f) => f(p),
                    None => self.material.youngs,
                };
                let f = def_gradient_at(d, self.nodes.len(), &table, q, 2);
                let stress = unit.pk1_stress(&f)?;
                for (c, rc) in r.iter_mut().enumerate() {
                    *rc += weights[q] * e * (stress[c * MAX_DIM] * n[0] + stress[c * MAX_DIM + 1] * n[1]);
                }
            }
            out.insert(edge, r);
        }
        Ok(out)
    }

    pub fn eval_points(&self) -> Result<Vec<Point>> {
        self.domain.uniform_grid(&self.config.eval_counts())
    }

    /// Harmonic extension of the essential boundary values over the node
    /// grid, channel-major. Free boundary nodes get a zero-flux condition.
    /// Components without essential data are zero.
    pub fn lift_coefficients(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let dim = self.dim();
        let counts = self.nodes.counts().to_vec();
        let (nx, ny) = (counts[0], if dim == 2 { counts[1] } else { 1 });
        let mut out = vec![0.0; dim * n];
        for k in 0..dim {
            let mut fixed = vec![None; n];
            for e in &self.mask.entries {
                if e.component == k {
                    fixed[e.node] = Some(e.value);
                }
            }
            let u = &mut out[k * n..(k + 1) * n];
            if fixed.iter().all(Option::is_none) {
                continue;
            }
            for i in 0..n {
                if let Some(v) = fixed[i] {
                    u[i] = v;
                }
            }
            // Gauss-Seidel with over-relaxation; tiny grids, so a fixed
            // sweep budget with a tolerance is plenty.
            let omega = 2.0 / (1.0 + (std::f64::consts::PI / nx.max(ny) as f64).sin());
            for _ in 0..20_000 {
                let mut change = 0.0f64;
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = j * nx + i;
                        if fixed[idx].is_some() {
                            continue;
                        }
                        let mut sum = 0.0;
                        let mut cnt = 0.0;
                        if i > 0 {
                            sum += u[idx - 1];
                            cnt += 1.0;
                        }
                        if i + 1 < nx {
                            sum += u[idx + 1];
                            cnt += 1.0;
                        }
                        if j > 0 {
                            sum += u[idx - nx];
                            cnt += 1.0;
                        }
                        if j + 1 < ny {
                            sum += u[idx + nx];
                            cnt += 1.0;
                        }
                        let new = u[idx] + omega * (sum / cnt - u[idx]);
                        change = change.max((new - u[idx]).abs());
                        u[idx] = new;
                    }
                }
                if change < 1e-13 {
                    break;
                }
            }
        }
        out
    }

    /// Nodal values of the affine patch field, channel-major.
    pub fn affine_coefficients(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut d = vec![0.0; self.dim() * n];
        for i in 0..n {
            let u = affine_displacement(&self.config, &self.nodes.position(i));
            for k in 0..self.dim() {
                d[k * n + i] = u[k];
            }
        }
        d
    }
}

fn affine_displacement(cfg: &ProblemConfig, x: &Point) -> [f64; MAX_DIM] {
    let f = cfg.patch.map(|p| p.f).unwrap_or([1.0, 0.0, 0.0, 1.0]);
    let dim = cfg.dim();
    let mut u = [0.0; MAX_DIM];
    for k in 0..dim {
        for j in 0..dim {
            let delta = if k == j { 1.0 } else { 0.0 };
            u[k] += (f[k * MAX_DIM + j] - delta) * x[j];
        }
    }
    u
}

fn affine_traction(cfg: &ProblemConfig, material: &MaterialModel, edge: Edge) -> Result<[f64; MAX_DIM]> {
    let f = cfg.patch.map(|p| p.f).unwrap_or([1.0, 0.0, 0.0, 1.0]);
    let dim = cfg.dim();
    let fv: Vec<f64> = if dim == 1 { vec![f[0]] } else { f.to_vec() };
    let p = material.pk1_stress(&fv)?;
    let n = edge.outward_normal();
    let mut t = [0.0; MAX_DIM];
    for k in 0..dim {
        for j in 0..dim {
            t[k] += p[k * dim + j] * n[j];
        }
    }
    Ok(t)
}

pub fn modulus_fn(spec: &ModulusSpec) -> Result<ModulusFn> {
    Ok(match *spec {
        ModulusSpec::Uniform { value } => Arc::new(move |_: &Point| value),
        ModulusSpec::Symmetric => Arc::new(|x: &Point| symmetric_modulus(x[0], x[1])),
        ModulusSpec::Grf { alpha, seed, grid } => {
            let g = Arc::new(grf_modulus(grid, alpha, seed)?);
            Arc::new(move |x: &Point| g.sample(x[0], x[1]))
        }
    })
}

/// Field values on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExport {
    pub dim: usize,
    pub points: Vec<Point>,
    pub u: Vec<[f64; MAX_DIM]>,
    pub f: Vec<Tensor>,
    /// Green strain `(Exx, Eyy, Exy)`.
    pub green: Vec<[f64; 3]>,
    pub p: Vec<Tensor>,
    pub w: Vec<f64>,
    pub e_hat: Option<Vec<f64>>,
}

impl FieldExport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("X,Y,ux,uy,Fxx,Fxy,Fyx,Fyy,Exx,Eyy,Exy,Pxx,Pxy,Pyx,Pyy,W");
        if self.e_hat.is_some() {
            s.push_str(",E_hat");
        }
        s.push('\n');
        for q in 0..self.points.len() {
            let mut row = vec![self.points[q][0], self.points[q][1], self.u[q][0], self.u[q][1]];
            row.extend_from_slice(&self.f[q]);
            row.extend_from_slice(&self.green[q]);
            row.extend_from_slice(&self.p[q]);
            row.push(self.w[q]);
            if let Some(e) = &self.e_hat {
                row.push(e[q]);
            }
            let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Displacements stacked component-major for error norms.
    pub fn stacked_u(&self) -> Vec<f64> {
        (0..self.dim).flat_map(|k| self.u.iter().map(move |u| u[k])).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub train_seconds: f64,
    pub export_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Counts {
    pub nodes: usize,
    pub modulus_nodes: usize,
    pub subdomains: usize,
    pub stress_points: usize,
    pub parameters: usize,
    pub masked_coefficients: usize,
    pub data_points: usize,
}

/// Gauss segments along an edge for resultant forces.
pub const FORCE_SEGMENTS: usize = 64;
const FORCE_GAUSS_ORDER: usize = 5;

/// Composite Gauss rule along one edge of a 2D box.
pub fn edge_quadrature(domain: &Domain, edge: Edge) -> (Vec<Point>, Vec<f64>) {
    let (lo, hi) = (domain.lower(), domain.upper());
    let along = 1 - edge.axis();
    let fixed = if edge.is_upper() { hi[edge.axis()] } else { lo[edge.axis()] };
    let h = (hi[along] - lo[along]) / FORCE_SEGMENTS as f64;
    let mut points = Vec::with_capacity(FORCE_SEGMENTS * FORCE_GAUSS_ORDER);
    let mut weights = Vec::with_capacity(points.capacity());
    for k in 0..FORCE_SEGMENTS {
        let a = lo[along] + k as f64 * h;
        for (x, w) in mapped_rule(FORCE_GAUSS_ORDER, a, a + h) {
            let mut p = [0.0; MAX_DIM];
            p[edge.axis()] = fixed;
            p[along] = x;
            points.push(p);
            weights.push(w);
        }
    }
    (points, weights)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub config: ProblemConfig,
    pub scheme: Scheme,
    pub seed: u64,
    pub params: Vec<f64>,
    pub displacement_mlp: Mlp,
    pub modulus_mlp: Option<Mlp>,
    pub stop: StopReason,
    pub iterations: usize,
    pub evaluations: usize,
    pub loss: LossParts,
    pub initial_loss: f64,
    pub history: TrainingHistory,
    pub fields: FieldExport,
    pub e_l2_u: Option<f64>,
    pub e_l2_u_absolute: bool,
    pub e_l2_e: Option<f64>,
    /// Bar only: max |dû/dx − ε_ext| on the evaluation grid.
    pub max_strain_error: Option<f64>,
    /// Forward 2D solves: resultant force on each edge.
    pub reactions: Option<BTreeMap<Edge, [f64; 2]>>,
    /// Inverse solves with a force measurement: the model's resultant.
    pub force_resultant: Option<[f64; 2]>,
    pub timings: Timings,
    pub counts: Counts,
}

impl Solution {
    pub fn report(&self) -> serde_json::Value {
        let num = |v: Option<f64>| v.map_or(serde_json::Value::Null, |x| serde_json::json!(x));
        serde_json::json!({
            "name": self.config.name,
            "scheme": self.scheme.tag(),
            "seed": self.seed,
            "stop_reason": self.stop.to_string(),
            "converged": self.stop.converged(),
            "iterations": self.iterations,
            "function_evals": self.evaluations,
            "initial_loss": self.initial_loss,
            "final_loss": self.loss.total,
            "final_residual_loss": self.loss.residual,
            "final_data_loss": self.loss.data,
            "e_l2_u": num(self.e_l2_u),
            "e_l2_u_absolute": self.e_l2_u_absolute,
            "e_l2_E": num(self.e_l2_e),
            "max_strain_error": num(self.max_strain_error),
            "reactions": self.reactions,
            "force_resultant": self.force_resultant,
            "counts": self.counts,
            "timings": self.timings,
            "config": self.config,
        })
    }

    /// Writes fields.csv, history.csv, report.json and checkpoint.txt.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fields = dir.join("fields.csv");
        write_atomic(&fields, self.fields.to_csv().as_bytes())?;
        let history = dir.join("history.csv");
        self.history.write_csv(&history)?;
        let report = dir.join("report.json");
        let text = serde_json::to_string_pretty(&self.report())
            .map_err(|e| Error::Solver(format!("serializing report: {e}")))?;
        write_atomic(&report, text.as_bytes())?;
        let ckpt = dir.join("checkpoint.txt");
        let n_theta = self.displacement_mlp.param_count();
        let mut parts: Vec<(&str, &Mlp, &[f64])> = vec![("displacement", &self.displacement_mlp, &self.params[..n_theta])];
        if let Some(m) = &self.modulus_mlp {
            parts.push(("modulus", m, &self.params[n_theta..]));
        }
        write_checkpoint(&ckpt, &parts)?;
        Ok(vec![fields, history, report, ckpt])
    }
}

/// Reference displacements on the evaluation grid, stacked component-major.
fn reference_displacement(setup: &Setup, points: &[Point]) -> Result<Option<Vec<f64>>> {
    let dim = setup.dim();
    let cfg = &setup.config;
    let stack = |f: &dyn Fn(&Point) -> [f64; MAX_DIM]| -> Vec<f64> {
        let vals: Vec<[f64; MAX_DIM]> = points.iter().map(f).collect();
        (0..dim).flat_map(|k| vals.iter().map(move |v| v[k])).collect()
    };
    Ok(match &cfg.reference {
        None => None,
        Some(ReferenceSpec::Bar) => Some(stack(&|x| [analytic_bar_solution(x[0]).0, 0.0])),
        Some(ReferenceSpec::Affine) => Some(stack(&|x| affine_displacement(cfg, x))),
        Some(ReferenceSpec::Csv { path }) => Some(read_reference_csv(&cfg.resolve(path), points, dim)?),
    })
}

/// Reads `X,Y,ux,uy` columns (any extra columns are ignored).
pub fn read_reference_csv(path: &Path, points: &[Point], dim: usize) -> Result<Vec<f64>> {
    let schema = |detail: String| Error::Schema {
        path: path.to_path_buf(),
        detail,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => schema(format!("{other:?}")),
    })?;
    let headers = r.headers().map_err(|e| schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(format!("missing column `{name}`")))
    };
    let cx = col("X")?;
    let cy = if dim == 2 { Some(col("Y")?) } else { headers.iter().position(|h| h.trim() == "Y") };
    let cu = [col("ux")?, if dim == 2 { col("uy")? } else { 0 }];
    let mut out = vec![0.0; dim * points.len()];
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(format!("row {}: {e}", i + 1)))?;
        let get = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| schema(format!("row {}: column {} is not a number", i + 1, &headers[c])))
        };
        if i >= points.len() {
            return Err(schema(format!("more rows than the {} evaluation points", points.len())));
        }
        let x = [get(cx)?, cy.map(get).transpose()?.unwrap_or(0.0)];
        let p = points[i];
        if (x[0] - p[0]).abs() > 1e-9 || (dim == 2 && (x[1] - p[1]).abs() > 1e-9) {
            return Err(schema(format!(
                "row {} at ({}, {}) does not match evaluation point ({}, {})",
                i + 1,
                x[0],
                x[1],
                p[0],
                p[1]
            )));
        }
        for k in 0..dim {
            out[k * points.len() + i] = get(cu[k])?;
        }
        rows += 1;
    }
    if rows != points.len() {
        return Err(schema(format!("{rows} rows, expected {}", points.len())));
    }
    Ok(out)
}

struct Evaluator {
    table: ShapeTable,
    modulus_table: Option<ShapeTable>,
    reference_u: Option<Vec<f64>>,
    truth_e: Option<Vec<f64>>,
}

impl Evaluator {
    fn new(setup: &Setup, modulus_nodes: Option<(&NodeSet, &RkConfig)>) -> Result<Self> {
        let points = setup.eval_points()?;
        let table = build_shape_table(&points, &setup.nodes, &setup.rk)
            .map_err(|e| e.context("building evaluation-grid shape table"))?;
        let modulus_table = modulus_nodes
            .map(|(n, rk)| build_shape_table(&points, n, rk))
            .transpose()
            .map_err(|e| e.context("building evaluation-grid modulus table"))?;
        let reference_u = reference_displacement(setup, &points)?;
        let truth_e = match (&modulus_table, &setup.truth_modulus) {
            (Some(_), Some(f)) => Some(points.iter().map(|p| f(p)).collect()),
            _ => None,
        };
        Ok(Self {
            table,
            modulus_table,
            reference_u,
            truth_e,
        })
    }

    fn displacement(&self, d: &[f64], n_nodes: usize, dim: usize) -> Vec<f64> {
        (0..dim).flat_map(|k| self.table.interpolate(&d[k * n_nodes..(k + 1) * n_nodes])).collect()
    }

    fn errors(&self, problem: &NimProblem, params: &[f64]) -> Result<(Option<(f64, bool)>, Option<f64>)> {
        let eu = match &self.reference_u {
            Some(r) => {
                let d = problem.displacement_coefficients(params)?;
                let u = self.displacement(&d, problem.displacement().n_nodes(), problem.dim());
                Some(relative_l2(&u, r)?)
            }
            None => None,
        };
        let ee = match (&self.modulus_table, &self.truth_e) {
            (Some(t), Some(truth)) => {
                let e = problem.modulus_coefficients(params)?.expect("trainable modulus");
                Some(relative_l2(&t.interpolate(&e), truth)?.0)
            }
            _ => None,
        };
        Ok((eu, ee))
    }
}

fn export_fields(
    setup: &Setup,
    problem: &NimProblem,
    eval: &Evaluator,
    params: &[f64],
) -> Result<FieldExport> {
    let dim = setup.dim();
    let points = eval.table.points().to_vec();
    let d = problem.displacement_coefficients(params)?;
    let n = setup.nodes.len();
    let uflat = eval.displacement(&d, n, dim);
    let fs = def_gradients(&d, n, &eval.table);
    let e_hat = match (&eval.modulus_table, problem.modulus_coefficients(params)?) {
        (Some(t), Some(c)) => Some(t.interpolate(&c)),
        _ => None,
    };
    let modulus: Vec<f64> = match (&e_hat, &setup.truth_modulus) {
        (Some(e), _) => e.clone(),
        (None, Some(f)) => points.iter().map(|p| f(p)).collect(),
        (None, None) => vec![setup.material.youngs; points.len()],
    };
    let unit = setup.material.with_youngs(1.0)?;
    let mut out = FieldExport {
        dim,
        points: points.clone(),
        u: Vec::with_capacity(points.len()),
        f: Vec::with_capacity(points.len()),
        green: Vec::with_capacity(points.len()),
        p: Vec::with_capacity(points.len()),
        w: Vec::with_capacity(points.len()),
        e_hat,
    };
    for q in 0..points.len() {
        let mut u = [0.0; MAX_DIM];
        for k in 0..dim {
            u[k] = uflat[k * points.len() + q];
        }
        let mut f = fs[q];
        if dim == 1 {
            f = [f[0], 0.0, 0.0, 1.0];
        }
        let fv: Vec<f64> = if dim == 1 { vec![f[0]] } else { f.to_vec() };
        let kin = Kinematics::new(f);
        let (p, w) = match (unit.pk1_stress(&fv), unit.energy_density(&fv)) {
            (Ok(p), Ok(w)) => {
                let mut p4 = [0.0; 4];
                if dim == 1 {
                    p4[0] = p[0];
                } else {
                    p4.copy_from_slice(&p);
                }
                (p4.map(|v| v * modulus[q]), w * modulus[q])
            }
            _ => ([f64::NAN; 4], f64::NAN),
        };
        out.u.push(u);
        out.f.push(f);
        out.green.push([kin.green[0], kin.green[3], kin.green[1]]);
        out.p.push(p);
        out.w.push(w);
    }
    Ok(out)
}

/// Initial parameters: Glorot weights with a small output gain, shifted so
/// the starting displacement is a smooth lift of the essential boundary
/// data; the modulus network starts from a uniform value.
fn initial_params(setup: &Setup, problem: &NimProblem) -> Result<Vec<f64>> {
    let gain = setup.config.network.output_gain;
    let mlp = &problem.displacement().mlp;
    let mut params = mlp.init(setup.seed, gain, 0.0);
    mlp.shift_outputs(&mut params, &setup.lift_coefficients())?;
    if let Some(field) = problem.modulus_field() {
        let inv = setup.config.inverse.as_ref().expect("inverse section");
        let bias = match (inv.initial_modulus, force_calibrated_modulus(problem, &params)?) {
            (Some(e0), _) | (None, Some(e0)) => field.transform.inverse(e0)?,
            (None, None) => 0.0,
        };
        params.extend(field.mlp.init(setup.seed.wrapping_add(1), inv.output_gain, bias));
    }
    Ok(params)
}

/// Uniform modulus whose resultant, at the initial displacement, best
/// matches the measured edge force. `None` without a force measurement.
fn force_calibrated_modulus(problem: &NimProblem, theta: &[f64]) -> Result<Option<f64>> {
    let (Some(field), Some(target)) = (problem.modulus_field(), problem.force_target()) else {
        return Ok(None);
    };
    let mut trial = theta.to_vec();
    // zero output gain: the modulus field is exactly transform(0) everywhere
    trial.extend(field.mlp.init(0, 0.0, 0.0));
    let e_ref = field.transform.apply(0.0);
    let r = problem.force_resultant(&trial)?.expect("force measurement present");
    let rr = r[0] * r[0] + r[1] * r[1];
    if !(rr > 0.0) {
        return Ok(None);
    }
    // the resultant is linear in a uniform modulus
    let e0 = e_ref * (r[0] * target[0] + r[1] * target[1]) / rr;
    let OutputTransform::SigmoidRange { lo, span } = field.transform else {
        return Ok(Some(e0));
    };
    // keep clear of the saturated ends of the range
    let margin = 0.01 * span;
    Ok(Some(e0.clamp(lo + margin, lo + span - margin)))
}

fn train(setup: &Setup, problem: &NimProblem, eval: &Evaluator, t0: Instant) -> Result<Solution> {
    let setup_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let x0 = initial_params(setup, problem)?;
    let last = Cell::new(LossParts {
        total: f64::NAN,
        residual: f64::NAN,
        data: f64::NAN,
    });
    let initial_loss = problem.loss(&x0).map_err(|e| e.context("loss at the initial parameters"))?.total;
    let every = setup.config.output.error_every;
    let result = lbfgs_minimize(
        |x: &[f64], g: &mut [f64]| {
            let parts = problem.loss_and_grad(x, g)?;
            last.set(parts);
            Ok(parts.total)
        },
        &x0,
        &setup.config.optimizer,
        |info| {
            let parts = last.get();
            let (eu, ee) = if every > 0 && info.iter % every == 0 {
                eval.errors(problem, info.x).unwrap_or((None, None))
            } else {
                (None, None)
            };
            if let Some(n) = setup.progress.filter(|&n| n > 0) {
                if info.iter % n == 0 {
                    let mut line = format!(
                        "iter {:>6}  loss {:.6e}  residual {:.6e}  data {:.6e}",
                        info.iter, info.loss, parts.residual, parts.data
                    );
                    if let Some(e) = eu {
                        line += &format!("  e_l2_u {:.3e}", e.0);
                    }
                    if let Some(e) = ee {
                        line += &format!("  e_l2_E {e:.3e}");
                    }
                    eprintln!("{line}  {:.1} s", t1.elapsed().as_secs_f64());
                }
            }
            RecordExtras {
                residual_loss: Some(parts.residual),
                data_loss: Some(parts.data),
                e_l2_u: eu.map(|e| e.0),
                e_l2_e: ee,
            }
        },
    )?;
    let train_seconds = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let loss = problem.loss(&result.x)?;
    let fields = export_fields(setup, problem, eval, &result.x)?;
    let (eu, ee) = eval.errors(problem, &result.x)?;
    let max_strain_error = matches!(setup.config.reference, Some(ReferenceSpec::Bar)).then(|| {
        fields
            .points
            .iter()
            .zip(&fields.f)
            .map(|(x, f)| (f[0] - 1.0 - analytic_bar_solution(x[0]).1).abs())
            .fold(0.0, f64::max)
    });
    let reactions = if setup.dim() == 2 && problem.modulus_field().is_none() {
        Some(setup.edge_resultants(&problem.displacement_coefficients(&result.x)?)?)
    } else {
        None
    };
    let force_resultant = problem.force_resultant(&result.x)?;
    let counts = Counts {
        nodes: setup.nodes.len(),
        modulus_nodes: problem.modulus_field().map_or(0, |f| f.n_nodes()),
        subdomains: problem.subdomain_count(),
        stress_points: problem.stress_point_count(),
        parameters: problem.n_params(),
        masked_coefficients: setup.mask.len(),
        data_points: problem.data().map_or(0, |d| d.len()),
    };
    Ok(Solution {
        config: setup.config.clone(),
        scheme: setup.scheme,
        seed: setup.seed,
        displacement_mlp: problem.displacement().mlp.clone(),
        modulus_mlp: problem.modulus_field().map(|f| f.mlp.clone()),
        params: result.x,
        stop: result.stop,
        iterations: result.iterations,
        evaluations: result.evaluations,
        loss,
        initial_loss,
        history: result.history,
        fields,
        e_l2_u: eu.map(|e| e.0),
        e_l2_u_absolute: eu.is_some_and(|e| e.1),
        e_l2_e: ee,
        max_strain_error,
        reactions,
        force_resultant,
        timings: Timings {
            setup_seconds,
            train_seconds,
            export_seconds: t2.elapsed().as_secs_f64(),
        },
        counts,
    })
}

/// Forward solve: minimizes the residual loss and exports the solution.
pub fn run_forward(config: &ProblemConfig, opts: RunOptions) -> Result<Solution> {
    let t0 = Instant::now();
    let setup = Setup::new(config, opts).map_err(|e| e.context(experiment_context(config, "setup")))?;
    let problem = setup
        .problem(setup.forward_modulus(), None)
        .map_err(|e| e.context(experiment_context(config, "assembly")))?;
    let eval = Evaluator::new(&setup, None)?;
    train(&setup, &problem, &eval, t0).map_err(|e| e.context(experiment_context(config, "training")))
}

/// Inverse solve: jointly fits displacement and a trainable modulus field
/// to the residual and the strain data.
pub fn run_inverse(config: &ProblemConfig, data: StrainDataSet, opts: RunOptions) -> Result<Solution> {
    let t0 = Instant::now();
    let ctx = |stage: &str| experiment_context(config, stage);
    let inv = config
        .inverse
        .clone()
        .ok_or_else(|| Error::config("an [inverse] section is required for inverse runs"))?;
    let setup = Setup::new(config, opts).map_err(|e| e.context(ctx("setup")))?;
    let mut data = data;
    data.alpha = inv.alpha;
    if data.is_empty() {
        return Err(Error::config("strain data set has no rows"));
    }
    for (j, p) in data.positions.iter().enumerate() {
        if !setup.domain.contains(p) {
            return Err(Error::config(format!("data point {j} at {:?} lies outside the domain", &p[..setup.dim()])));
        }
    }
    let (problem, mnodes, mrk) = inverse_problem(&setup, &inv, data).map_err(|e| e.context(ctx("assembly")))?;
    let eval = Evaluator::new(&setup, Some((&mnodes, &mrk)))?;
    train(&setup, &problem, &eval, t0).map_err(|e| e.context(ctx("training")))
}

/// Joint displacement/modulus problem for `[inverse]`, with the modulus
/// node set and RK settings it was built on.
pub fn inverse_problem(
    setup: &Setup,
    inv: &InverseConfig,
    data: StrainDataSet,
) -> Result<(NimProblem, NodeSet, RkConfig)> {
    let counts = inv.nodes.clone().unwrap_or_else(|| setup.config.discretization.nodes.clone());
    let mnodes = build_node_grid(&setup.domain, &counts)?;
    let mut mrk = RkConfig::new(setup.config.discretization.order, inv.a_bar.unwrap_or(setup.config.discretization.a_bar));
    mrk.z_floor = setup.config.discretization.z_floor;
    let field = NeuroPuField::new(
        Mlp::new(inv.hidden.clone(), mnodes.len(), 1),
        ConstraintMask::default(),
        OutputTransform::SigmoidRange {
            lo: inv.lo,
            span: inv.span,
        },
    );
    let force = inv.force.as_ref().map(|fc| setup.force_measurement(fc)).transpose()?;
    let problem = setup.problem_with_force(
        ModulusInput::Trainable {
            field,
            nodes: mnodes.clone(),
            rk: mrk.clone(),
        },
        Some(data),
        force,
    )?;
    Ok((problem, mnodes, mrk))
}

fn experiment_context(cfg: &ProblemConfig, stage: &str) -> String {
    if cfg.name.is_empty() {
        format!("experiment {stage}")
    } else {
        format!("experiment `{}` {stage}", cfg.name)
    }
}

/// Forward-solves the truth problem and samples its deformation gradient at
/// `ndata` uniform random interior points.
pub fn generate_strain_data(
    config: &ProblemConfig,
    ndata: usize,
    seed: u64,
    progress: Option<usize>,
) -> Result<(StrainDataSet, Solution)> {
    if ndata == 0 {
        return Err(Error::config("ndata must be at least 1"));
    }
    if config.material.modulus.is_none() {
        return Err(Error::config("the truth config needs a material.modulus specification"));
    }
    let max_loss = config.data.as_ref().map_or(1e-8, |d| d.max_truth_loss);
    let truth = run_forward(
        config,
        RunOptions {
            progress,
            ..RunOptions::default()
        },
    )?;
    if !(truth.loss.total <= max_loss) {
        return Err(Error::Solver(format!(
            "truth solve did not converge: final loss {:e} exceeds {:e} (stop reason {})",
            truth.loss.total, max_loss, truth.stop
        )));
    }
    let setup = Setup::new(config, RunOptions::default())?;
    let dim = setup.dim();
    let (lo, hi) = (setup.domain.lower(), setup.domain.upper());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<Point> = (0..ndata)
        .map(|_| {
            let mut p = [0.0; MAX_DIM];
            for k in 0..dim {
                // open interval: interior points only
                loop {
                    let v = rng.random_range(lo[k]..hi[k]);
                    if v > lo[k] {
                        p[k] = v;
                        break;
                    }
                }
            }
            p
        })
        .collect();
    let table = build_shape_table(&positions, &setup.nodes, &setup.rk)?;
    let field = setup.displacement_field();
    let n_theta = field.param_count();
    let d = field.coefficients(&truth.params[..n_theta])?;
    let f = def_gradients(&d, setup.nodes.len(), &table);
    let alpha = config.inverse.as_ref().map_or(10.0, |i| i.alpha);
    Ok((StrainDataSet { dim, positions, f, alpha }, truth))
}

/// Writes a data set with its provenance sidecar and the truth fields.
pub fn write_strain_data(path: &Path, data: &StrainDataSet, truth: &Solution, ndata: usize, seed: u64) -> Result<Vec<PathBuf>> {
    data.write_csv(path)?;
    let base = path.to_string_lossy().to_string();
    let sidecar = PathBuf::from(format!("{base}.provenance.json"));
    let fields = PathBuf::from(format!("{base}.truth_fields.csv"));
    write_atomic(&fields, truth.fields.to_csv().as_bytes())?;
    // timings are dropped so the sidecar is reproducible byte for byte
    let mut report = truth.report();
    if let Some(obj) = report.as_object_mut() {
        obj.remove("timings");
    }
    let prov = serde_json::json!({
        "ndata": ndata,
        "seed": seed,
        "truth_fields": fields.file_name().map(|s| s.to_string_lossy().to_string()),
        "truth_report": report,
    });
    let text = serde_json::to_string_pretty(&prov).map_err(|e| Error::Solver(e.to_string()))?;
    write_atomic(&sidecar, text.as_bytes())?;
    Ok(vec![path.to_path_buf(), sidecar, fields])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_solution_values() {
        assert!(analytic_bar_solution(-1.0).0.abs() < 1e-15);
        assert!((analytic_bar_solution(1.0).0 - 136.0 / 135.0).abs() < 1e-15);
        assert!(analytic_bar_solution(1.0).1.abs() < 1e-15);
        assert!(analytic_bar_solution(-1.0).1.abs() < 1e-15);
        // strain is the derivative of displacement
        for x in [-0.7, 0.0, 0.45] {
            let h = 1e-6;
            let fd = (analytic_bar_solution(x + h).0 - analytic_bar_solution(x - h).0) / (2.0 * h);
            assert!((fd - analytic_bar_solution(x).1).abs() < 1e-8);
        }
    }

    #[test]
    fn bar_stress_balances_body_force() {
        // σ = (1+ε)^{1/2}·1.5 − 1.5 from the bar energy; σ' + x = 0
        let sigma = |x: f64| {
            let f = 1.0 + analytic_bar_solution(x).1;
            1.5 * f.sqrt() - 1.5
        };
        for x in [-0.9, -0.2, 0.3, 0.8] {
            assert!((sigma(x) - (1.0 - x * x) / 2.0).abs() < 1e-12);
            let h = 1e-5;
            let ds = (sigma(x + h) - sigma(x - h)) / (2.0 * h);
            assert!((ds + x).abs() < 1e-8);
        }
    }
}
