//! NeuroPU fields: an MLP on a constant input produces nodal coefficients,
//! which are contracted against precomputed shape functions.

mod problem;

pub use problem::{ForceMeasurement, LossParts, ModulusInput, NimProblem, ProblemSpec};

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::MAX_DIM;
use crate::error::{Error, Result};
use crate::rk_basis::{RkConfig, ShapeTable};

/// Dense network `1 → hidden… → outputs`, one independent copy per channel.
/// Hidden layers use tanh, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub channels: usize,
    pub input: f64,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Per channel, per layer: post-activation values (layer 0 is the input).
    acts: Vec<Vec<Vec<f64>>>,
}

impl Mlp {
    pub fn new(hidden: Vec<usize>, outputs: usize, channels: usize) -> Self {
        Self {
            hidden,
            outputs,
            channels,
            input: 1.0,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(1);
        w.extend_from_slice(&self.hidden);
        w.push(self.outputs);
        w
    }

    pub fn params_per_channel(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        self.channels * self.params_per_channel()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases. The output layer weights are
    /// multiplied by `output_gain` and its biases set to `output_bias`.
    pub fn init(&self, seed: u64, output_gain: f64, output_bias: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = self.widths();
        let mut theta = Vec::with_capacity(self.param_count());
        for _ in 0..self.channels {
            for (l, pair) in widths.windows(2).enumerate() {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let last = l + 2 == widths.len();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let gain = if last { output_gain } else { 1.0 };
                for _ in 0..fan_in * fan_out {
                    theta.push(gain * rng.random_range(-limit..limit));
                }
                let b = if last { output_bias } else { 0.0 };
                theta.extend(std::iter::repeat_n(b, fan_out));
            }
        }
        theta
    }

    /// Parameters whose forward pass returns exactly `outputs`: all weights
    /// zero, output biases carrying the values.
    pub fn encode_outputs(&self, outputs: &[f64]) -> Result<Vec<f64>> {
        if outputs.len() != self.channels * self.outputs {
            return Err(Error::config(format!(
                "{} outputs given, network produces {}",
                outputs.len(),
                self.channels * self.outputs
            )));
        }
        let per = self.params_per_channel();
        let mut theta = vec![0.0; self.param_count()];
        for c in 0..self.channels {
            let bias = (c + 1) * per - self.outputs;
            theta[bias..(c + 1) * per].copy_from_slice(&outputs[c * self.outputs..(c + 1) * self.outputs]);
        }
        Ok(theta)
    }

    /// Adds `offsets` (channel-major) to the output-layer biases.
    pub fn shift_outputs(&self, theta: &mut [f64], offsets: &[f64]) -> Result<()> {
        self.check(theta)?;
        if offsets.len() != self.channels * self.outputs {
            return Err(Error::config(format!(
                "{} offsets given, network produces {}",
                offsets.len(),
                self.channels * self.outputs
            )));
        }
        let per = self.params_per_channel();
        for c in 0..self.channels {
            let bias = (c + 1) * per - self.outputs;
            for (t, o) in theta[bias..(c + 1) * per].iter_mut().zip(&offsets[c * self.outputs..]) {
                *t += o;
            }
        }
        Ok(())
    }

    pub fn forward(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(theta)?.0)
    }

    /// Outputs laid out channel-major: `out[c * outputs + i]`.
    pub fn forward_cached(&self, theta: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.check(theta)?;
        let widths = self.widths();
        let per = self.params_per_channel();
        let mut out = Vec::with_capacity(self.channels * self.outputs);
        let mut acts = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let mut p = &theta[c * per..(c + 1) * per];
            let mut layer_acts = vec![vec![self.input]];
            for (l, pair) in widths.windows(2).enumerate() {
                let (n_in, n_out) = (pair[0], pair[1]);
                let (w, rest) = p.split_at(n_in * n_out);
                let (b, rest) = rest.split_at(n_out);
                p = rest;
                let x = layer_acts.last().unwrap();
                let last = l + 2 == widths.len();
                let y: Vec<f64> = (0..n_out)
                    .map(|o| {
                        let z = b[o]
                            + w[o * n_in..(o + 1) * n_in]
                                .iter()
                                .zip(x)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        if last {
                            z
                        } else {
                            z.tanh()
                        }
                    })
                    .collect();
                layer_acts.push(y);
            }
            out.extend_from_slice(layer_acts.last().unwrap());
            acts.push(layer_acts);
        }
        Ok((out, MlpCache { acts }))
    }

    /// Gradient with respect to θ given the gradient with respect to the outputs.
    pub fn backward(&self, theta: &[f64], cache: &MlpCache, d_out: &[f64]) -> Vec<f64> {
        let widths = self.widths();
        let per = self.params_per_channel();
        let mut grad = vec![0.0; theta.len()];
        let n_layers = widths.len() - 1;
        for c in 0..self.channels {
            let p = &theta[c * per..(c + 1) * per];
            let g = &mut grad[c * per..(c + 1) * per];
            let mut offsets = Vec::with_capacity(n_layers);
            let mut off = 0;
            for pair in widths.windows(2) {
                offsets.push(off);
                off += pair[0] * pair[1] + pair[1];
            }
            // gradient w.r.t. pre-activation of the current layer
            let mut delta: Vec<f64> = d_out[c * self.outputs..(c + 1) * self.outputs].to_vec();
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (widths[l], widths[l + 1]);
                let x = &cache.acts[c][l];
                let wo = offsets[l];
                let bo = wo + n_in * n_out;
                for o in 0..n_out {
                    for i in 0..n_in {
                        g[wo + o * n_in + i] += delta[o] * x[i];
                    }
                    g[bo + o] += delta[o];
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        for i in 0..n_in {
                            prev[i] += p[wo + o * n_in + i] * delta[o];
                        }
                    }
                    // tanh' = 1 - a²
                    for (i, v) in prev.iter_mut().enumerate() {
                        let a = x[i];
                        *v *= 1.0 - a * a;
                    }
                    delta = prev;
                }
            }
        }
        grad
    }
}

/// Map applied to raw network outputs before contraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `lo + span / (1 + e^{-o})`.
    SigmoidRange { lo: f64, span: f64 },
}

impl OutputTransform {
    #[inline]
    pub fn apply(&self, o: f64) -> f64 {
        match *self {
            OutputTransform::Identity => o,
            OutputTransform::SigmoidRange { lo, span } => lo + span * sigmoid(o),
        }
    }

    #[inline]
    pub fn derivative(&self, o: f64) -> f64 {
        match *self {
            OutputTransform::Identity => 1.0,
            OutputTransform::SigmoidRange { span, .. } => {
                let s = sigmoid(o);
                span * s * (1.0 - s)
            }
        }
    }

    /// Raw output giving transformed value `v`.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        match *self {
            OutputTransform::Identity => Ok(v),
            OutputTransform::SigmoidRange { lo, span } => {
                let s = (v - lo) / span;
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::config(format!(
                        "value {v} lies outside the sigmoid range ({lo}, {})",
                        lo + span
                    )));
                }
                Ok((s / (1.0 - s)).ln())
            }
        }
    }
}

#[inline]
fn sigmoid(o: f64) -> f64 {
    if o >= 0.0 {
        1.0 / (1.0 + (-o).exp())
    } else {
        let e = o.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub node: usize,
    pub component: usize,
    pub value: f64,
}

/// Nodal coefficients frozen to prescribed boundary values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMask {
    pub entries: Vec<MaskEntry>,
}

impl ConstraintMask {
    pub fn new(entries: Vec<MaskEntry>) -> Self {
        let mut entries = entries;
        entries.sort_by_key(|e| (e.component, e.node));
        entries.dedup_by_key(|e| (e.component, e.node));
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Every masked node must carry a singular kernel.
    pub fn validate(&self, rk: &RkConfig, n_nodes: usize, channels: usize) -> Result<()> {
        for e in &self.entries {
            if e.node >= n_nodes || e.component >= channels {
                return Err(Error::config(format!(
                    "mask entry (node {}, component {}) out of range",
                    e.node, e.component
                )));
            }
            if !rk.singular.contains_key(&e.node) {
                return Err(Error::config(format!(
                    "masked node {} is not in the singular-kernel set",
                    e.node
                )));
            }
        }
        Ok(())
    }

    /// Overwrites masked entries of channel-major coefficients.
    pub fn apply(&self, coeffs: &mut [f64], n_nodes: usize) {
        for e in &self.entries {
            coeffs[e.component * n_nodes + e.node] = e.value;
        }
    }

    /// Zeroes gradient entries that flow into masked coefficients.
    pub fn zero_gradient(&self, grad: &mut [f64], n_nodes: usize) {
        for e in &self.entries {
            grad[e.component * n_nodes + e.node] = 0.0;
        }
    }
}

pub fn apply_constraints(coeffs: &[f64], mask: &ConstraintMask, n_nodes: usize) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    mask.apply(&mut out, n_nodes);
    out
}

/// A NeuroPU field: network, output transform, and boundary mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuroPuField {
    pub mlp: Mlp,
    pub mask: ConstraintMask,
    pub transform: OutputTransform,
}

impl NeuroPuField {
    pub fn new(mlp: Mlp, mask: ConstraintMask, transform: OutputTransform) -> Self {
        Self {
            mlp,
            mask,
            transform,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.mlp.outputs
    }

    pub fn channels(&self) -> usize {
        self.mlp.channels
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    /// Nodal coefficients `d̂′` after transform and mask, channel-major.
    pub fn coefficients(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut d = self.mlp.forward(theta)?;
        for v in d.iter_mut() {
            *v = self.transform.apply(*v);
        }
        self.mask.apply(&mut d, self.n_nodes());
        Ok(d)
    }

    /// Parameters producing the given post-transform coefficients (masked
    /// entries are ignored).
    pub fn encode_coefficients(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let raw = coeffs
            .iter()
            .map(|&v| self.transform.inverse(v))
            .collect::<Result<Vec<_>>>()?;
        self.mlp.encode_outputs(&raw)
    }

    /// Coefficients plus what the backward pass needs.
    pub(crate) fn coefficients_cached(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>, MlpCache)> {
        let (raw, cache) = self.mlp.forward_cached(theta)?;
        let mut d: Vec<f64> = raw.iter().map(|&o| self.transform.apply(o)).collect();
        self.mask.apply(&mut d, self.n_nodes());
        Ok((d, raw, cache))
    }

    /// Pulls a coefficient gradient back to θ through mask, transform and MLP.
    pub(crate) fn pullback(&self, theta: &[f64], raw: &[f64], cache: &MlpCache, mut g: Vec<f64>) -> Vec<f64> {
        self.mask.zero_gradient(&mut g, self.n_nodes());
        if self.transform != OutputTransform::Identity {
            for (gi, &o) in g.iter_mut().zip(raw) {
                *gi *= self.transform.derivative(o);
            }
        }
        self.mlp.backward(theta, cache, &g)
    }
}

/// Field values per channel at every table point, `out[c][q]`.
pub fn evaluate_field(field: &NeuroPuField, theta: &[f64], table: &ShapeTable) -> Result<Vec<Vec<f64>>> {
    check_table(field, table)?;
    let d = field.coefficients(theta)?;
    let n = field.n_nodes();
    Ok((0..field.channels())
        .map(|c| table.interpolate(&d[c * n..(c + 1) * n]))
        .collect())
}

/// Deformation gradient `I + Σ ∇Ψ_I ⊗ d̂′_I` at every table point, row-major
/// 2×2 (1D uses entry 0).
pub fn evaluate_def_gradient(field: &NeuroPuField, theta: &[f64], table: &ShapeTable) -> Result<Vec<[f64; 4]>> {
    check_table(field, table)?;
    let d = field.coefficients(theta)?;
    Ok(def_gradients(&d, field.n_nodes(), table))
}

pub(crate) fn def_gradients(d: &[f64], n_nodes: usize, table: &ShapeTable) -> Vec<[f64; 4]> {
    let dim = table.dim();
    (0..table.len())
        .map(|q| def_gradient_at(d, n_nodes, table, q, dim))
        .collect()
}

#[inline]
pub(crate) fn def_gradient_at(d: &[f64], n_nodes: usize, table: &ShapeTable, q: usize, dim: usize) -> [f64; 4] {
    let row = table.row(q);
    let mut f = [0.0; 4];
    for (k, &node) in row.indices.iter().enumerate() {
        let g = row.gradients[k];
        for c in 0..dim {
            let dc = d[c * n_nodes + node as usize];
            for j in 0..dim {
                f[c * MAX_DIM + j] += g[j] * dc;
            }
        }
    }
    f[0] += 1.0;
    if dim == 2 {
        f[3] += 1.0;
    }
    f
}

fn check_table(field: &NeuroPuField, table: &ShapeTable) -> Result<()> {
    if table.node_count() != field.n_nodes() {
        return Err(Error::config(format!(
            "shape table built on {} nodes, field has {} outputs",
            table.node_count(),
            field.n_nodes()
        )));
    }
    Ok(())
}

/// Plain-text checkpoint: architecture header followed by one value per line.
pub fn write_checkpoint(path: &Path, fields: &[(&str, &Mlp, &[f64])]) -> Result<()> {
    let mut s = String::from("# nim checkpoint v1\n");
    for (name, mlp, theta) in fields {
        let hidden: Vec<String> = mlp.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(
            s,
            "field {name} hidden={} outputs={} channels={} input={} count={}",
            hidden.join("x"),
            mlp.outputs,
            mlp.channels,
            mlp.input,
            theta.len()
        );
        for v in theta.iter() {
            let _ = writeln!(s, "{v:e}");
        }
    }
    crate::io::write_atomic(path, s.as_bytes())
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Mlp, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema = |detail: String| Error::Schema {
        path: path.to_path_buf(),
        detail,
    };
    let mut out: Vec<(String, Mlp, Vec<f64>)> = Vec::new();
    let mut expected = 0usize;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("field ") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or_else(|| schema(format!("line {}: missing field name", ln + 1)))?;
            let mut mlp = Mlp::new(Vec::new(), 0, 0);
            for kv in parts {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| schema(format!("line {}: malformed `{kv}`", ln + 1)))?;
                let bad = |_| schema(format!("line {}: bad value for {k}", ln + 1));
                match k {
                    "hidden" => {
                        mlp.hidden = if v.is_empty() {
                            Vec::new()
                        } else {
                            v.split('x').map(|h| h.parse().map_err(bad)).collect::<Result<_>>()?
                        }
                    }
                    "outputs" => mlp.outputs = v.parse().map_err(bad)?,
                    "channels" => mlp.channels = v.parse().map_err(bad)?,
                    "input" => mlp.input = v.parse().map_err(|_| schema(format!("line {}: bad input", ln + 1)))?,
                    "count" => expected = v.parse().map_err(bad)?,
                    _ => return Err(schema(format!("line {}: unknown key {k}", ln + 1))),
                }
            }
            out.push((name.to_string(), mlp, Vec::with_capacity(expected)));
        } else {
            let v: f64 = line
                .parse()
                .map_err(|_| schema(format!("line {}: not a number", ln + 1)))?;
            out.last_mut()
                .ok_or_else(|| schema("value before any field header".into()))?
                .2
                .push(v);
        }
    }
    for (name, mlp, theta) in &out {
        if theta.len() != mlp.param_count() {
            return Err(schema(format!(
                "field {name}: {} values for an architecture with {} parameters",
                theta.len(),
                mlp.param_count()
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_node_grid, Domain, Point};
    use crate::rk_basis::build_shape_table;

    #[test]
    fn parameter_count_for_bar_network() {
        let m = Mlp::new(vec![10], 41, 1);
        assert_eq!(m.params_per_channel(), 1 * 10 + 10 + 10 * 41 + 41);
        assert_eq!(m.params_per_channel(), 471);
        assert_eq!(Mlp::new(vec![10], 41, 2).param_count(), 942);
    }

    #[test]
    fn zero_network_gives_zero_outputs() {
        let m = Mlp::new(vec![10], 7, 2);
        let out = m.forward(&vec![0.0; m.param_count()]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(m.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let m = Mlp::new(vec![10], 7, 2);
        assert_eq!(m.init(3, 1.0, 0.0), m.init(3, 1.0, 0.0));
        assert_ne!(m.init(3, 1.0, 0.0), m.init(4, 1.0, 0.0));
        let t = m.init(3, 1.0, 0.0);
        assert_eq!(m.forward(&t).unwrap(), m.forward(&t).unwrap());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = Mlp::new(vec![6, 4], 5, 2);
        let theta = m.init(9, 1.0, 0.1);
        let w: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let obj = |t: &[f64]| -> f64 { m.forward(t).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum() };
        let (_, cache) = m.forward_cached(&theta).unwrap();
        let g = m.backward(&theta, &cache, &w);
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += 1e-6;
            tm[k] -= 1e-6;
            let fd = (obj(&tp) - obj(&tm)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8, "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn sigmoid_range_values() {
        let t = OutputTransform::SigmoidRange { lo: 0.5, span: 3.0 };
        assert_eq!(t.apply(0.0), 2.0);
        assert!((t.apply(800.0) - 3.5).abs() < 1e-12);
        assert!((t.apply(-800.0) - 0.5).abs() < 1e-12);
        for o in [-50.0, -3.0, 0.0, 2.0, 40.0] {
            let v = t.apply(o);
            assert!(v > 0.5 && v < 3.5 || (o.abs() > 30.0));
        }
        assert!((t.apply(t.inverse(1.5).unwrap()) - 1.5).abs() < 1e-14);
        assert!(t.inverse(4.0).is_err());
    }

    #[test]
    fn mask_overwrites_only_masked_entries() {
        let d = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(apply_constraints(&d, &ConstraintMask::default(), 3), d);
        let mask = ConstraintMask::new(vec![MaskEntry {
            node: 2,
            component: 1,
            value: -1.0,
        }]);
        assert_eq!(apply_constraints(&d, &mask, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, -1.0]);
    }

    #[test]
    fn affine_coefficients_reproduce_affine_field() {
        let dom = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let nodes = build_node_grid(&dom, &[11, 11]).unwrap();
        let rk = RkConfig::new(2, 2.5);
        let pts: Vec<Point> = (0..50)
            .map(|k| [(k as f64 * 0.137) % 1.0, (k as f64 * 0.291) % 1.0])
            .collect();
        let table = build_shape_table(&pts, &nodes, &rk).unwrap();
        let n = nodes.len();
        // identity network: output biases carry the coefficients directly
        let mlp = Mlp::new(vec![1], n, 2);
        let field = NeuroPuField::new(mlp.clone(), ConstraintMask::default(), OutputTransform::Identity);
        let mut theta = vec![0.0; mlp.param_count()];
        let per = mlp.params_per_channel();
        for c in 0..2 {
            for i in 0..n {
                let x = nodes.position(i);
                let u = if c == 0 { 0.1 * x[0] } else { 0.0 };
                theta[c * per + 2 + n + i] = u;
            }
        }
        let u = evaluate_field(&field, &theta, &table).unwrap();
        let f = evaluate_def_gradient(&field, &theta, &table).unwrap();
        for (q, p) in pts.iter().enumerate() {
            assert!((u[0][q] - 0.1 * p[0]).abs() < 1e-10);
            assert!(u[1][q].abs() < 1e-10);
            let expect = [1.1, 0.0, 0.0, 1.0];
            for k in 0..4 {
                assert!((f[q][k] - expect[k]).abs() < 1e-10);
            }
        }
        let zero = vec![0.0; mlp.param_count()];
        assert!(evaluate_def_gradient(&field, &zero, &table)
            .unwrap()
            .iter()
            .all(|f| *f == [1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.txt");
        let m = Mlp::new(vec![10], 13, 2);
        let t = m.init(1, 0.01, 0.0);
        let m2 = Mlp::new(vec![10], 13, 1);
        let t2: Vec<f64> = m2.init(2, 1.0, -0.69).iter().map(|v| v * std::f64::consts::PI).collect();
        write_checkpoint(&p, &[("u", &m, &t), ("E", &m2, &t2)]).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "u");
        assert_eq!(back[0].1, m);
        assert_eq!(back[0].2, t);
        assert_eq!(back[1].2, t2);
    }
}
