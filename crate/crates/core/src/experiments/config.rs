//! TOML problem definitions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretization::Edge;
use crate::error::{Error, Result};
use crate::materials::MaterialKind;
use crate::optimizer::LbfgsOptions;
use crate::residual::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub name: String,
    pub domain: DomainConfig,
    pub discretization: DiscretizationConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub body_force: BodyForceSpec,
    pub bc: BTreeMap<Edge, EdgeBc>,
    /// Uniform deformation gradient used by `"affine"` boundary values.
    #[serde(default)]
    pub patch: Option<PatchConfig>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: LbfgsOptions,
    #[serde(default)]
    pub inverse: Option<InverseConfig>,
    #[serde(default)]
    pub data: Option<DataGenConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths are resolved against; set when loading.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x: [f64; 2],
    #[serde(default)]
    pub y: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub nodes: Vec<usize>,
    pub subdomains: Vec<usize>,
    pub r_bar: f64,
    pub a_bar: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_cells")]
    pub cells_per_axis: usize,
    #[serde(default = "default_gauss")]
    pub gauss_order: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_z_floor")]
    pub z_floor: f64,
}

fn default_order() -> usize {
    2
}
fn default_cells() -> usize {
    4
}
fn default_gauss() -> usize {
    5
}
fn default_scheme() -> Scheme {
    Scheme::NimC
}
fn default_z_floor() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub kind: MaterialKind,
    #[serde(default = "one")]
    pub youngs: f64,
    #[serde(default)]
    pub poisson: f64,
    /// Spatially varying modulus; overrides `youngs`.
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusSpec {
    Uniform {
        value: f64,
    },
    /// The symmetric field normalized to `[1, 2]`.
    Symmetric,
    /// Gaussian random field with power-law spectrum, normalized to `[1, 2]`.
    Grf {
        #[serde(default = "default_grf_alpha")]
        alpha: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_grf_grid")]
        grid: usize,
    },
}

fn default_grf_alpha() -> f64 {
    3.0
}
fn default_grf_grid() -> usize {
    128
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyForceSpec {
    #[default]
    None,
    /// `b(x) = x` along the bar.
    Bar,
    Constant {
        value: [f64; 2],
    },
}

/// A boundary value: a number, or `"affine"` to take it from the patch field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BcValue {
    Value(f64),
    Keyword(BcKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKeyword {
    Affine,
}

/// Per-edge conditions. A component with neither a displacement nor a
/// traction is traction-free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeBc {
    #[serde(default)]
    pub ux: Option<BcValue>,
    #[serde(default)]
    pub uy: Option<BcValue>,
    #[serde(default)]
    pub tx: Option<BcValue>,
    #[serde(default)]
    pub ty: Option<BcValue>,
}

impl EdgeBc {
    pub fn displacement(&self, k: usize) -> Option<BcValue> {
        [self.ux, self.uy][k]
    }

    pub fn traction(&self, k: usize) -> Option<BcValue> {
        [self.tx, self.ty][k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    /// Row-major `F*` (1D: first entry only).
    pub f: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Closed-form solution of the bar with body force `x`.
    Bar,
    /// The affine field of `[patch]`.
    Affine,
    /// Reference grid CSV with columns X,Y,ux,uy on the evaluation grid.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Scale on the output-layer weights at initialization.
    #[serde(default = "default_gain")]
    pub output_gain: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            seed: 0,
            output_gain: default_gain(),
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![10]
}
fn default_gain() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Data file; the CLI's `--data` takes precedence.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Modulus node counts; defaults to the displacement nodes.
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
    #[serde(default)]
    pub a_bar: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_span")]
    pub span: f64,
    /// Modulus value the network starts from.
    #[serde(default)]
    pub initial_modulus: Option<f64>,
    #[serde(default = "default_gain")]
    pub output_gain: f64,
    /// Measured resultant force on one edge; fixes the modulus scale.
    #[serde(default)]
    pub force: Option<ForceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceConfig {
    pub edge: Edge,
    /// `∫ P·n ds` over the edge, reference configuration.
    pub value: [f64; 2],
    #[serde(default = "one")]
    pub weight: f64,
}

fn default_alpha() -> f64 {
    10.0
}
fn default_lo() -> f64 {
    0.5
}
fn default_span() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataGenConfig {
    #[serde(default = "default_ndata")]
    pub ndata: usize,
    #[serde(default)]
    pub seed: u64,
    /// Truth solves with a final loss above this are rejected.
    #[serde(default = "default_truth_loss")]
    pub max_truth_loss: f64,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            ndata: default_ndata(),
            seed: 0,
            max_truth_loss: default_truth_loss(),
        }
    }
}

fn default_ndata() -> usize {
    1000
}
fn default_truth_loss() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Evaluation grid counts; 201 (1D) or 101×101 (2D) by default.
    #[serde(default)]
    pub eval_grid: Option<Vec<usize>>,
    /// Record error norms every this many iterations (0 disables).
    #[serde(default = "default_every")]
    pub error_every: usize,
}

fn default_every() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            eval_grid: None,
            error_every: default_every(),
        }
    }
}

impl ProblemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<string>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        // an unreadable config is bad input, not a solver failure
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, path, "", &e))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            toml_error(text, path, &key, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        if self.domain.y.is_some() {
            2
        } else {
            1
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn eval_counts(&self) -> Vec<usize> {
        self.output
            .eval_grid
            .clone()
            .unwrap_or_else(|| if self.dim() == 1 { vec![201] } else { vec![101, 101] })
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let d = &self.discretization;
        if d.nodes.len() != dim || d.subdomains.len() != dim {
            return Err(Error::config(format!(
                "discretization.nodes and discretization.subdomains need {dim} entries for a {dim}D domain"
            )));
        }
        if self.material.kind.dim() != dim {
            return Err(Error::config(format!(
                "material.kind {:?} is {}D but the domain is {dim}D",
                self.material.kind,
                self.material.kind.dim()
            )));
        }
        if let Some(counts) = &self.output.eval_grid {
            if counts.len() != dim {
                return Err(Error::config(format!("output.eval_grid needs {dim} entries")));
            }
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::config("network.hidden widths must be positive"));
        }
        for edge in Edge::all(dim) {
            let bc = self.bc.get(&edge).ok_or_else(|| {
                Error::config(format!("bc.{} is missing: every edge needs an entry", edge.name()))
            })?;
            for k in 0..MAX_COMPONENTS {
                let (u, t) = (bc.displacement(k), bc.traction(k));
                if k >= dim && (u.is_some() || t.is_some()) {
                    return Err(Error::config(format!(
                        "bc.{}: component {} does not exist in 1D",
                        edge.name(),
                        ["x", "y"][k]
                    )));
                }
                if u.is_some() && t.is_some() {
                    return Err(Error::config(format!(
                        "bc.{}: both displacement and traction given for component {}",
                        edge.name(),
                        ["x", "y"][k]
                    )));
                }
                let affine = matches!(u, Some(BcValue::Keyword(_))) || matches!(t, Some(BcValue::Keyword(_)));
                if affine && self.patch.is_none() {
                    return Err(Error::config(format!(
                        "bc.{} uses \"affine\" but no [patch] section is given",
                        edge.name()
                    )));
                }
            }
        }
        for edge in self.bc.keys() {
            if edge.axis() >= dim {
                return Err(Error::config(format!("bc.{} does not exist in 1D", edge.name())));
            }
        }
        if matches!(self.reference, Some(ReferenceSpec::Affine)) && self.patch.is_none() {
            return Err(Error::config("reference kind \"affine\" needs a [patch] section"));
        }
        if let Some(inv) = &self.inverse {
            if let Some(n) = &inv.nodes {
                if n.len() != dim {
                    return Err(Error::config(format!("inverse.nodes needs {dim} entries")));
                }
            }
            if !(inv.alpha >= 0.0) {
                return Err(Error::config("inverse.alpha must be non-negative"));
            }
            if !(inv.span > 0.0) {
                return Err(Error::config("inverse.span must be positive"));
            }
        }
        if let Some(data) = &self.data {
            if data.ndata == 0 {
                return Err(Error::config("data.ndata must be at least 1"));
            }
        }
        self.optimizer.validate()
    }
}

const MAX_COMPONENTS: usize = 2;

fn toml_error(text: &str, path: &Path, key: &str, e: &toml::de::Error) -> Error {
    let mut msg = e.message().trim().to_string();
    // serde reports a missing key at its parent; name the full key instead
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(field) = rest.strip_suffix('`') {
            let full = if key.is_empty() || key == "." {
                field.to_string()
            } else {
                format!("{key}.{field}")
            };
            msg = format!("missing key `{full}`");
        }
    } else if !key.is_empty() && key != "." {
        msg = format!("key `{key}`: {msg}");
    }
    if let Some(span) = e.span() {
        let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
        msg = format!("line {line}: {msg}");
    }
    Error::Config(format!("{}: {msg}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAR: &str = r#"
        [domain]
        x = [-1.0, 1.0]
        [discretization]
        nodes = [41]
        subdomains = [101]
        r_bar = 2.5
        a_bar = 2.5
        [material]
        kind = "bar1d"
        [body_force]
        kind = "bar"
        [bc.left]
        ux = 0.0
        [bc.right]
        ux = 1.0074074074074074
    "#;

    #[test]
    fn parses_minimal_bar() {
        let c = ProblemConfig::from_toml_str(BAR).unwrap();
        assert_eq!(c.dim(), 1);
        assert_eq!(c.discretization.cells_per_axis, 4);
        assert_eq!(c.discretization.scheme, Scheme::NimC);
        assert_eq!(c.optimizer, LbfgsOptions::default());
        assert_eq!(c.body_force, BodyForceSpec::Bar);
        assert_eq!(c.eval_counts(), vec![201]);
    }

    #[test]
    fn missing_key_is_named() {
        let text = BAR.replace("kind = \"bar1d\"", "");
        let e = ProblemConfig::from_toml_str(&text).unwrap_err();
        assert!(e.to_string().contains("material.kind"), "{e}");
        assert!(e.is_validation());
    }

    #[test]
    fn bad_value_reports_line() {
        let text = BAR.replace("r_bar = 2.5", "r_bar = \"wide\"");
        let e = ProblemConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("line 7") && e.contains("r_bar"), "{e}");
    }

    #[test]
    fn structural_checks() {
        let text = BAR.replace("[bc.right]\n        ux = 1.0074074074074074", "");
        assert!(ProblemConfig::from_toml_str(&text).unwrap_err().to_string().contains("bc.right"));
        let text = BAR.replace("ux = 0.0", "ux = 0.0\n        tx = 1.0");
        assert!(ProblemConfig::from_toml_str(&text).is_err());
        let text = BAR.replace("ux = 0.0", "ux = \"affine\"");
        assert!(ProblemConfig::from_toml_str(&text).unwrap_err().to_string().contains("patch"));
        let text = BAR.replace("[bc.left]", "[bc.top]\n        ux = 0.0\n        [bc.left]");
        assert!(ProblemConfig::from_toml_str(&text).is_err());
        let text = BAR.replace("nodes = [41]", "nodes = [41, 3]");
        assert!(ProblemConfig::from_toml_str(&text).is_err());
        let text = format!("{BAR}\n[optimizer]\nc1 = 0.95\n");
        assert!(ProblemConfig::from_toml_str(&text).is_err());
        let text = format!("{BAR}\n[optimizer]\nbogus = 1\n");
        assert!(ProblemConfig::from_toml_str(&text).unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn modulus_and_inverse_sections() {
        let text = format!(
            "{}\n[inverse]\nalpha = 10.0\n",
            BAR.replace("kind = \"bar1d\"", "kind = \"bar1d\"\n        modulus = { kind = \"grf\", seed = 4 }")
        );
        let c = ProblemConfig::from_toml_str(&text).unwrap();
        assert_eq!(
            c.material.modulus,
            Some(ModulusSpec::Grf {
                alpha: 3.0,
                seed: 4,
                grid: 128
            })
        );
        let inv = c.inverse.unwrap();
        assert_eq!((inv.lo, inv.span, inv.alpha), (0.5, 3.0, 10.0));
    }
}
