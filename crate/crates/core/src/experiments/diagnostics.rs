//! Invariant suites: finite-difference gradient check, patch test and
//! reproducing-condition sweep.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{inverse_problem, ProblemConfig, RunOptions, Setup};
use crate::discretization::{Point, MAX_DIM};
use crate::error::{Error, Result};
use crate::field::NimProblem;
use crate::residual::{Scheme, StrainDataSet};
use crate::rk_basis::{evaluate_shape, monomial_exponents, RkConfig};

pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-5;
/// Components smaller than this are never compared relatively.
pub const GRADIENT_FLOOR: f64 = 1e-8;
pub const PATCH_LOSS_TOL: f64 = 1e-16;
pub const MONOMIAL_TOL: f64 = 1e-10;
pub const MONOMIAL_GRAD_TOL: f64 = 1e-8;
pub const PU_TOL: f64 = 1e-12;
pub const DELTA_TOL: f64 = 1e-2;
pub const DELTA_OFFSETS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    /// Where the worst deviation occurred.
    pub location: String,
}

impl CheckItem {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(CheckItem::passed)
    }

    /// The failing item with the largest value-to-tolerance ratio.
    pub fn worst_failure(&self) -> Option<&CheckItem> {
        self.items
            .iter()
            .filter(|i| !i.passed())
            .max_by(|a, b| (a.value / a.tolerance).total_cmp(&(b.value / b.tolerance)))
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            writeln!(
                f,
                "{} {}: {:e} (tol {:e}) at {}",
                if i.passed() { "ok  " } else { "FAIL" },
                i.label,
                i.value,
                i.tolerance,
                i.location
            )?;
        }
        Ok(())
    }
}

/// Per-component comparison of the analytic gradient with central
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    pub max_relative: f64,
    pub worst_index: usize,
    pub compared: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

pub fn compare_gradient(problem: &NimProblem, params: &[f64], step: f64) -> Result<GradientComparison> {
    let mut analytic = vec![0.0; params.len()];
    let loss = problem.loss_and_grad(params, &mut analytic)?.total;
    // central differences carry a rounding error of about eps·|L|/step;
    // components where that alone would exceed the tolerance are skipped
    let floor = GRADIENT_FLOOR.max(f64::EPSILON * loss.abs() / step / GRADIENT_TOL);
    let mut numeric = vec![0.0; params.len()];
    let mut x = params.to_vec();
    for i in 0..params.len() {
        x[i] = params[i] + step;
        let fp = problem.loss(&x)?.total;
        x[i] = params[i] - step;
        let fm = problem.loss(&x)?.total;
        x[i] = params[i];
        numeric[i] = (fp - fm) / (2.0 * step);
    }
    let mut max_relative = 0.0;
    let mut worst_index = 0;
    let mut compared = 0;
    for i in 0..params.len() {
        if analytic[i].abs() > floor {
            compared += 1;
            let rel = (numeric[i] - analytic[i]).abs() / analytic[i].abs();
            if rel > max_relative {
                max_relative = rel;
                worst_index = i;
            }
        }
    }
    Ok(GradientComparison {
        max_relative,
        worst_index,
        compared,
        analytic,
        numeric,
    })
}

/// Random parameters at which the loss is finite: Glorot weights around the
/// nodal offsets `lift`, with progressively smaller output gains until the
/// deformation is admissible.
pub fn random_admissible_params(problem: &NimProblem, lift: &[f64], seed: u64) -> Result<Vec<f64>> {
    let field = problem.displacement();
    let mut last = None;
    for gain in [1.0, 0.3, 0.1, 0.03, 0.01] {
        let mut p = field.mlp.init(seed, gain, 0.0);
        field.mlp.shift_outputs(&mut p, lift)?;
        if let Some(m) = problem.modulus_field() {
            p.extend(m.mlp.init(seed.wrapping_add(1), gain, 0.0));
        }
        match problem.loss(&p) {
            Ok(_) => return Ok(p),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Analytic vs central-difference gradient at random admissible parameters.
/// Configs with `[inverse]` also check the joint problem, with synthetic
/// strain data and the force measurement if one is configured.
pub fn gradient_check(config: &ProblemConfig, seed: u64) -> Result<CheckReport> {
    let setup = Setup::new(config, RunOptions::default())?;
    let lift = setup.lift_coefficients();
    let mut problems = vec![("forward", setup.problem(setup.forward_modulus(), None)?)];
    if let Some(inv) = &config.inverse {
        let data = synthetic_strain_data(&setup, inv.alpha, seed)?;
        problems.push(("inverse", inverse_problem(&setup, inv, data)?.0));
    }
    let mut items = Vec::new();
    for (name, problem) in &problems {
        let params = random_admissible_params(problem, &lift, seed)?;
        let cmp = compare_gradient(problem, &params, GRADIENT_STEP)?;
        items.push(CheckItem {
            label: format!(
                "{name}: max relative FD deviation over {} of {} components",
                cmp.compared,
                params.len()
            ),
            value: cmp.max_relative,
            tolerance: GRADIENT_TOL,
            location: format!(
                "parameter {} (analytic {:e}, fd {:e})",
                cmp.worst_index, cmp.analytic[cmp.worst_index], cmp.numeric[cmp.worst_index]
            ),
        });
    }
    Ok(CheckReport {
        check: "gradients".into(),
        items,
    })
}

/// A few interior points with a mildly stretched target F.
fn synthetic_strain_data(setup: &Setup, alpha: f64, seed: u64) -> Result<StrainDataSet> {
    let dim = setup.dim();
    let (lo, hi) = (setup.domain.lower(), setup.domain.upper());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let mut positions = Vec::new();
    let mut f = Vec::new();
    for _ in 0..20 {
        let mut p = [0.0; MAX_DIM];
        let mut t = [0.0; 4];
        for k in 0..dim {
            p[k] = lo[k] + (hi[k] - lo[k]) * rng.random_range(0.05..0.95);
        }
        for v in t.iter_mut().take(if dim == 1 { 1 } else { 4 }) {
            *v = rng.random_range(-0.1..0.1);
        }
        t[0] += 1.0;
        if dim == 2 {
            t[3] += 1.0;
        }
        positions.push(p);
        f.push(t);
    }
    Ok(StrainDataSet {
        dim,
        positions,
        f,
        alpha,
    })
}

/// Loss of the exact affine field under both schemes.
pub fn patch_check(config: &ProblemConfig) -> Result<CheckReport> {
    if config.patch.is_none() {
        return Err(Error::config("the patch check needs a [patch] section"));
    }
    let mut items = Vec::new();
    for scheme in [Scheme::NimH, Scheme::NimC] {
        let setup = Setup::new(
            config,
            RunOptions {
                scheme: Some(scheme),
                ..RunOptions::default()
            },
        )?;
        let problem = setup.problem(setup.forward_modulus(), None)?;
        let params = problem.displacement().encode_coefficients(&setup.affine_coefficients())?;
        let loss = problem.loss(&params)?;
        items.push(CheckItem {
            label: format!("NIM/{} loss at exact coefficients", scheme.tag()),
            value: loss.total,
            tolerance: PATCH_LOSS_TOL,
            location: format!("{} subdomains", problem.subdomain_count()),
        });
    }
    Ok(CheckReport {
        check: "patch".into(),
        items,
    })
}

fn monomial(x: &Point, e: &[u32; MAX_DIM]) -> (f64, Point) {
    let mut v = 1.0;
    let mut g = [1.0; MAX_DIM];
    for k in 0..MAX_DIM {
        v *= x[k].powi(e[k] as i32);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj *= if j == k {
                if e[k] == 0 {
                    0.0
                } else {
                    e[k] as f64 * x[k].powi(e[k] as i32 - 1)
                }
            } else {
                x[k].powi(e[k] as i32)
            };
        }
    }
    (v, g)
}

/// Reproducing conditions at `samples` random points, with and without the
/// singular-kernel nodes of the config, plus the delta property at every
/// singular node.
pub fn reproduce_check(config: &ProblemConfig, samples: usize, seed: u64) -> Result<CheckReport> {
    let setup = Setup::new(config, RunOptions::default())?;
    let dim = setup.dim();
    let nodes = &setup.nodes;
    let (lo, hi) = (setup.domain.lower(), setup.domain.upper());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point> = (0..samples)
        .map(|_| {
            let mut p = [0.0; MAX_DIM];
            for k in 0..dim {
                p[k] = rng.random_range(lo[k]..=hi[k]);
            }
            p
        })
        .collect();
    let exps = monomial_exponents(dim, setup.rk.order);
    let mut plain = setup.rk.clone();
    plain.singular.clear();
    let mut items = Vec::new();
    for (tag, rk) in [("regular", &plain), ("singular", &setup.rk)] {
        if tag == "singular" && rk.singular.is_empty() {
            continue;
        }
        let (mut pu, mut pu_at) = (0.0f64, 0);
        let (mut mono, mut mono_at) = (0.0f64, 0);
        let (mut grad, mut grad_at) = (0.0f64, 0);
        for (q, x) in points.iter().enumerate() {
            let s = evaluate_shape(x, nodes, rk)?;
            let dev = (s.values.iter().sum::<f64>() - 1.0).abs();
            if dev > pu {
                (pu, pu_at) = (dev, q);
            }
            for e in &exps {
                let (target, tg) = monomial(x, e);
                let mut v = 0.0;
                let mut g = [0.0; MAX_DIM];
                for (k, &i) in s.indices.iter().enumerate() {
                    let (m, _) = monomial(&nodes.position(i), e);
                    v += s.values[k] * m;
                    for j in 0..dim {
                        g[j] += s.gradients[k][j] * m;
                    }
                }
                let dev = (v - target).abs();
                if dev > mono {
                    (mono, mono_at) = (dev, q);
                }
                for j in 0..dim {
                    let dev = (g[j] - tg[j]).abs();
                    if dev > grad {
                        (grad, grad_at) = (dev, q);
                    }
                }
            }
        }
        let at = |q: usize| format!("x = {:?}", &points[q][..dim]);
        items.push(CheckItem {
            label: format!("{tag}: partition of unity"),
            value: pu,
            tolerance: PU_TOL,
            location: at(pu_at),
        });
        items.push(CheckItem {
            label: format!("{tag}: monomial reproduction, order {}", rk.order),
            value: mono,
            tolerance: MONOMIAL_TOL,
            location: at(mono_at),
        });
        items.push(CheckItem {
            label: format!("{tag}: monomial gradient reproduction"),
            value: grad,
            tolerance: MONOMIAL_GRAD_TOL,
            location: at(grad_at),
        });
    }
    if !setup.rk.singular.is_empty() {
        let (delta, monotone) = delta_property(&setup.nodes, &setup.rk)?;
        items.push(CheckItem {
            label: format!("|Ψ_I - 1| at offset {:e}·h", DELTA_OFFSETS[0]),
            value: delta.0,
            tolerance: DELTA_TOL,
            location: format!("node {}", delta.1),
        });
        items.push(CheckItem {
            label: "non-monotone delta-property nodes".into(),
            value: monotone.len() as f64,
            tolerance: 0.0,
            location: format!("{:?}", monotone),
        });
    }
    Ok(CheckReport {
        check: "reproduce".into(),
        items,
    })
}

/// Worst `|Ψ_I − 1|` at the smallest offset (value, node) and the singular
/// nodes whose `Ψ_I` fails to decrease monotonically along the inward
/// diagonal.
pub fn delta_property(nodes: &crate::discretization::NodeSet, rk: &RkConfig) -> Result<((f64, usize), Vec<usize>)> {
    let dim = nodes.dim();
    let h = nodes.h();
    let (lo, hi) = (nodes.domain().lower(), nodes.domain().upper());
    let mut worst = (0.0f64, 0usize);
    let mut bad = Vec::new();
    for &i in rk.singular.keys() {
        let xi = nodes.position(i);
        let mut dir = [0.0; MAX_DIM];
        for k in 0..dim {
            let tol = 1e-9 * (hi[k] - lo[k]);
            dir[k] = if (xi[k] - lo[k]).abs() < tol {
                1.0
            } else if (xi[k] - hi[k]).abs() < tol {
                -1.0
            } else {
                0.0
            };
        }
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm == 0.0 {
            // interior singular node: any direction works
            dir[0] = 1.0;
        } else {
            dir.iter_mut().for_each(|d| *d /= norm);
        }
        let mut prev = f64::INFINITY;
        let mut monotone = true;
        for (n, s) in DELTA_OFFSETS.iter().enumerate() {
            let mut x = xi;
            for k in 0..dim {
                x[k] += s * h * dir[k];
            }
            let sample = evaluate_shape(&x, nodes, rk)?;
            let v = sample
                .indices
                .iter()
                .position(|&j| j == i)
                .map_or(0.0, |k| sample.values[k]);
            if n == 0 && (v - 1.0).abs() > worst.0 {
                worst = ((v - 1.0).abs(), i);
            }
            if v >= prev {
                monotone = false;
            }
            prev = v;
        }
        if !monotone {
            bad.push(i);
        }
    }
    Ok((worst, bad))
}
