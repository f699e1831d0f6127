//! Limited-memory BFGS with a strong Wolfe line search, and the training
//! history it produces.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    pub max_function_evals: usize,
    pub max_linesearch_steps: usize,
    pub ftol: f64,
    pub gtol: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 100,
            max_iterations: 50_000,
            max_function_evals: 50_000,
            max_linesearch_steps: 100,
            ftol: 1e-14,
            gtol: 1e-14,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::config("optimizer.memory must be at least 1"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.max_linesearch_steps == 0 || self.max_function_evals == 0 {
            return Err(Error::config("line-search and evaluation caps must be at least 1"));
        }
        if !(self.ftol >= 0.0 && self.gtol >= 0.0) {
            return Err(Error::config("ftol and gtol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    Gtol,
    Ftol,
    IterationCap,
    EvalCap,
    LineSearchFailed,
}

impl StopReason {
    /// True for the two convergence criteria.
    pub fn converged(self) -> bool {
        matches!(self, StopReason::Gtol | StopReason::Ftol)
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Gtol => "GTOL",
            StopReason::Ftol => "FTOL",
            StopReason::IterationCap => "ITERATION_CAP",
            StopReason::EvalCap => "EVAL_CAP",
            StopReason::LineSearchFailed => "LINE_SEARCH_FAILED",
        };
        f.write_str(s)
    }
}

/// Per-iteration diagnostics supplied by the caller's callback.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RecordExtras {
    pub residual_loss: Option<f64>,
    pub data_loss: Option<f64>,
    pub e_l2_u: Option<f64>,
    pub e_l2_e: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub residual_loss: f64,
    pub data_loss: f64,
    pub e_l2_u: Option<f64>,
    pub e_l2_e: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut s = String::from("iter,loss,residual_loss,data_loss,e_l2_u,e_l2_E,seconds\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iter,
                fmt_f64(r.loss),
                fmt_f64(r.residual_loss),
                fmt_f64(r.data_loss),
                opt(r.e_l2_u),
                opt(r.e_l2_e),
                fmt_f64(r.seconds)
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }
}

/// State handed to the per-iteration callback.
#[derive(Debug)]
pub struct IterationInfo<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub loss: f64,
    pub grad: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub stop: StopReason,
    pub iterations: usize,
    pub evaluations: usize,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, Copy)]
struct LinePoint {
    a: f64,
    f: f64,
    d: f64,
}

impl LinePoint {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.d.is_finite()
    }
}

enum LineOutcome {
    Accepted(LinePoint, Vec<f64>, Vec<f64>),
    Failed,
    EvalCap,
}

struct Counter<'o, F> {
    objective: &'o mut F,
    evals: usize,
    cap: usize,
}

impl<F> Counter<'_, F>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    /// Evaluates; trial points outside the objective's domain come back as `+∞`.
    fn trial(&mut self, x: &[f64], g: &mut [f64]) -> Result<Option<f64>> {
        if self.evals >= self.cap {
            return Ok(None);
        }
        self.evals += 1;
        match (self.objective)(x, g) {
            Ok(f) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Ok(Some(f)),
            Ok(_) => Ok(Some(f64::INFINITY)),
            Err(e) if matches!(e.root(), Error::Inadmissible { .. } | Error::NonFinite(_)) => {
                Ok(Some(f64::INFINITY))
            }
            Err(e) => Err(e),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic through two points with slopes, or `None` when
/// the interpolant has no interior minimum.
fn cubic_min(p: &LinePoint, q: &LinePoint) -> Option<f64> {
    let d1 = p.d + q.d - 3.0 * (p.f - q.f) / (p.a - q.a);
    let disc = d1 * d1 - p.d * q.d;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (q.a - p.a).signum() * disc.sqrt();
    let denom = q.d - p.d + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let a = q.a - (q.a - p.a) * (q.d + d2 - d1) / denom;
    a.is_finite().then_some(a)
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    ctr: &mut Counter<'_, F>,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    dphi0: f64,
    a_init: f64,
    opts: &LbfgsOptions,
) -> Result<LineOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x.len();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut steps = 0usize;
    let mut eval = |a: f64, xt: &mut Vec<f64>, gt: &mut Vec<f64>, steps: &mut usize| -> Result<Option<LinePoint>> {
        *steps += 1;
        for i in 0..n {
            xt[i] = x[i] + a * dir[i];
        }
        Ok(ctr.trial(xt, gt)?.map(|f| LinePoint {
            a,
            f,
            d: if f.is_finite() { dot(gt, dir) } else { f64::NAN },
        }))
    };
    // Once value differences drown in rounding, fall back to the
    // derivative-only form of sufficient decrease.
    let noise = 16.0 * f64::EPSILON * f0.abs();
    let sufficient = |p: &LinePoint| {
        p.f <= f0 + opts.c1 * p.a * dphi0
            || (p.f <= f0 + noise && p.d <= (2.0 * opts.c1 - 1.0) * dphi0)
    };
    let curvature = |p: &LinePoint| p.d.abs() <= -opts.c2 * dphi0;

    let mut prev = LinePoint { a: 0.0, f: f0, d: dphi0 };
    let mut a = a_init;
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        if steps >= opts.max_linesearch_steps {
            return Ok(LineOutcome::Failed);
        }
        let Some(cur) = eval(a, &mut xt, &mut gt, &mut steps)? else {
            return Ok(LineOutcome::EvalCap);
        };
        if !cur.finite() || !sufficient(&cur) || (!first && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Ok(LineOutcome::Accepted(cur, xt, gt));
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        prev = cur;
        first = false;
        a *= 2.0;
    }

    // zoom: lo satisfies sufficient decrease and has the lowest value so far
    loop {
        if steps >= opts.max_linesearch_steps {
            return Ok(LineOutcome::Failed);
        }
        let width = (hi.a - lo.a).abs();
        if width <= f64::EPSILON * lo.a.abs().max(hi.a.abs()) {
            return Ok(LineOutcome::Failed);
        }
        let (left, right) = (lo.a.min(hi.a), lo.a.max(hi.a));
        let mid = 0.5 * (lo.a + hi.a);
        let a = if hi.finite() {
            cubic_min(&lo, &hi)
                .filter(|&t| t > left + 0.1 * width && t < right - 0.1 * width)
                .unwrap_or(mid)
        } else {
            mid
        };
        let Some(cur) = eval(a, &mut xt, &mut gt, &mut steps)? else {
            return Ok(LineOutcome::EvalCap);
        };
        if !cur.finite() || !sufficient(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok(LineOutcome::Accepted(cur, xt, gt));
            }
            if cur.d * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
}

/// Minimizes `objective` from `x0`. The objective writes the gradient into
/// its second argument and returns the value. Trial points where it reports
/// an inadmissible state are treated as infinitely bad during line search;
/// failure at `x0` aborts.
pub fn lbfgs_minimize<F, C>(
    mut objective: F,
    x0: &[f64],
    opts: &LbfgsOptions,
    mut callback: C,
) -> Result<LbfgsResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
    C: FnMut(&IterationInfo<'_>) -> RecordExtras,
{
    opts.validate()?;
    if let Some(k) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial parameter {k} is {}", x0[k])));
    }
    let start = Instant::now();
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g).map_err(|e| e.context("objective at the initial point"))?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial loss {f} or its gradient is not finite")));
    }
    let mut ctr = Counter {
        objective: &mut objective,
        evals: 1,
        cap: opts.max_function_evals,
    };
    let mut history = TrainingHistory::default();
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iter = 0usize;
    let mut dir = vec![0.0; n];

    let stop = loop {
        if inf_norm(&g) <= opts.gtol {
            break StopReason::Gtol;
        }
        if iter >= opts.max_iterations {
            break StopReason::IterationCap;
        }
        if ctr.evals >= ctr.cap {
            break StopReason::EvalCap;
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        for i in 0..n {
            dir[i] = -q[i];
        }
        let mut dphi0 = dot(&g, &dir);
        if !(dphi0 < 0.0) {
            mem.clear();
            for i in 0..n {
                dir[i] = -g[i];
            }
            dphi0 = -dot(&g, &g);
        }
        let a_init = if mem.is_empty() {
            (1.0 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };

        let (pt, xn, gn) = match line_search(&mut ctr, &x, &dir, f, dphi0, a_init, opts)? {
            LineOutcome::Accepted(p, xn, gn) => (p, xn, gn),
            LineOutcome::Failed => break StopReason::LineSearchFailed,
            LineOutcome::EvalCap => break StopReason::EvalCap,
        };
        iter += 1;
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let f_old = f;
        x = xn;
        g = gn;
        f = pt.f;

        let extras = callback(&IterationInfo {
            iter,
            x: &x,
            loss: f,
            grad: &g,
        });
        history.records.push(IterationRecord {
            iter,
            loss: f,
            residual_loss: extras.residual_loss.unwrap_or(f),
            data_loss: extras.data_loss.unwrap_or(0.0),
            e_l2_u: extras.e_l2_u,
            e_l2_e: extras.e_l2_e,
            seconds: start.elapsed().as_secs_f64(),
        });

        if (f_old - f) / f_old.abs().max(f.abs()).max(1.0) <= opts.ftol {
            break StopReason::Ftol;
        }
    };

    Ok(LbfgsResult {
        x,
        loss: f,
        grad: g,
        stop,
        iterations: iter,
        evaluations: ctr.evals,
        history,
    })
}

/// Relative L2 error over stacked components. When the reference is zero
/// the absolute norm is returned with the flag set.
pub fn relative_l2(approx: &[f64], reference: &[f64]) -> Result<(f64, bool)> {
    if approx.len() != reference.len() {
        return Err(Error::Argument(format!(
            "relative_l2 on mismatched lengths {} and {}",
            approx.len(),
            reference.len()
        )));
    }
    let num: f64 = approx.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    if den == 0.0 {
        Ok((num, true))
    } else {
        Ok((num / den, false))
    }
}
