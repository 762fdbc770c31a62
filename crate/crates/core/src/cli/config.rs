use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::catalog;
use crate::datum::{Datum, DatumFile, FileExponent};
use crate::error::{BlError, Result};
use crate::integrator::{DistanceOpts, FunctionSpec, GaussianClass, QuadratureOpts};
use crate::optimizer::OptimizerOpts;
use crate::stability_lab::{log_grid, HolderProfile};

/// Subcommands that run a pipeline.
pub const SUBCOMMANDS: [&str; 7] = [
    "check",
    "constant",
    "reduce",
    "fourier",
    "deficit",
    "distance",
    "experiment",
];

/// Named experiments of the `experiment` subcommand.
pub const EXPERIMENTS: [&str; 7] = [
    "sweep",
    "opt1",
    "opt2",
    "corollary",
    "tuple",
    "holder",
    "complex",
];

/// A parameter grid: explicit values, or `"a..b"` for `points` log-spaced
/// values from `a` to `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range(String),
}

impl GridSpec {
    pub fn resolve(&self, points: usize) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range(s) => {
                let (a, b) = s.split_once("..").ok_or_else(|| {
                    BlError::config("experiment.grid", format!("expected \"a..b\", got {s:?}"))
                })?;
                let parse = |x: &str| {
                    x.trim().parse::<f64>().map_err(|_| {
                        BlError::config("experiment.grid", format!("{x:?} is not a number"))
                    })
                };
                let (a, b) = (parse(a)?, parse(b)?);
                if !(a > 0.0 && b > 0.0) {
                    return Err(BlError::config(
                        "experiment.grid",
                        "range ends must be positive",
                    ));
                }
                log_grid(a, b, points)
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(BlError::config(
                "experiment.grid",
                "grid must be a nonempty list of finite values",
            ));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub name: Option<String>,
    /// `t` for opt1, `δ` for opt2, `ε` for corollary.
    pub grid: Option<GridSpec>,
    pub points: Option<usize>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
    /// Constant of the sharpened check.
    pub c: Option<f64>,
    pub k: Option<f64>,
    pub v: Option<Vec<f64>>,
    pub d: Option<usize>,
    pub exponents: Option<Vec<f64>>,
    pub profile: Option<HolderProfile>,
    pub r: Option<f64>,
    pub vectors: Option<Vec<Vec<f64>>>,
    pub phase_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    subcommand: Option<String>,
    #[serde(default)]
    datum: Option<Value>,
    #[serde(default)]
    tuple: Option<Value>,
    #[serde(default)]
    function: Option<Value>,
    #[serde(default)]
    p: Option<FileExponent>,
    #[serde(default)]
    class: Option<GaussianClass>,
    #[serde(default)]
    bl_const: Option<f64>,
    #[serde(default)]
    quadrature: Option<QuadratureOpts>,
    #[serde(default)]
    optimizer: Option<OptimizerOpts>,
    #[serde(default)]
    distance: Option<DistanceOpts>,
    #[serde(default)]
    experiment: Option<ExperimentParams>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

/// A parsed, defaulted and validated run configuration. Referenced files are
/// inlined so the canonical form does not depend on where they live.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Option<String>,
    pub datum: Option<Datum>,
    pub tuple: Option<Vec<FunctionSpec>>,
    pub function: Option<FunctionSpec>,
    pub p: Option<FileExponent>,
    pub class: Option<GaussianClass>,
    pub bl_const: Option<f64>,
    pub quadrature: QuadratureOpts,
    pub optimizer: OptimizerOpts,
    /// `None` leaves each pipeline its own default.
    pub distance: Option<DistanceOpts>,
    pub experiment: ExperimentParams,
    /// Master seed; copied into every seeded module.
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub subcommand: Option<String>,
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub grid: Option<String>,
    pub points: Option<usize>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
}

fn parse_value<T: DeserializeOwned>(field: &str, v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let name = if path == "." {
            field.to_string()
        } else {
            format!("{field}.{path}")
        };
        BlError::config(name, e.into_inner().to_string())
    })
}

fn read_json(field: &str, path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| BlError::config(field, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| BlError::config(field, format!("{}: {e}", path.display())))
}

fn prefixed(field: &str, e: BlError) -> BlError {
    match e {
        BlError::Config { field: f, message } => BlError::config(format!("{field}.{f}"), message),
        other => BlError::config(field, other.to_string()),
    }
}

fn resolve_datum(v: Value, base: &Path) -> Result<Datum> {
    let v = match v {
        Value::String(s) => {
            if let Some(d) = catalog::by_name(&s) {
                return Ok(d);
            }
            let path = base.join(&s);
            if !path.is_file() {
                return Err(BlError::config(
                    "datum",
                    format!("{s:?} is neither a catalog name nor an existing file"),
                ));
            }
            read_json("datum", &path)?
        }
        other => other,
    };
    let file: DatumFile = parse_value("datum", v)?;
    file.into_datum().map_err(|e| prefixed("datum", e))
}

fn resolve_inline<T: DeserializeOwned>(field: &str, v: Value, base: &Path) -> Result<T> {
    let v = match v {
        Value::String(s) => {
            let path = base.join(&s);
            if !path.is_file() {
                return Err(BlError::config(field, format!("file {s:?} does not exist")));
            }
            read_json(field, &path)?
        }
        other => other,
    };
    parse_value(field, v)
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(BlError::config(
            field,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn at_least(field: &str, n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(BlError::config(
            field,
            format!("must be at least {min}, got {n}"),
        ))
    }
}

impl RunConfig {
    /// Reads `path` strictly, applies `ov`, fills defaults and validates.
    pub fn load(path: &Path, ov: &Overrides) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            BlError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        let raw: Value = serde_json::from_str(&text)
            .map_err(|e| BlError::config("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_value(raw, &base, ov)
    }

    /// As [`RunConfig::load`], with relative paths resolved against `base`.
    pub fn from_value(raw: Value, base: &Path, ov: &Overrides) -> Result<RunConfig> {
        let file: ConfigFile = parse_value("config", raw).map_err(|e| match e {
            BlError::Config { field, message } => {
                BlError::config(field.trim_start_matches("config.").to_string(), message)
            }
            other => other,
        })?;

        let subcommand = match (&file.subcommand, &ov.subcommand) {
            (Some(a), Some(b)) if a != b => {
                return Err(BlError::config(
                    "subcommand",
                    format!("config is for {a:?} but {b:?} was invoked"),
                ))
            }
            (a, b) => b.clone().or_else(|| a.clone()),
        };
        if let Some(s) = &subcommand {
            if !SUBCOMMANDS.contains(&s.as_str()) {
                return Err(BlError::config(
                    "subcommand",
                    format!("unknown subcommand {s:?}"),
                ));
            }
        }

        let mut experiment = file.experiment.unwrap_or_default();
        match (&experiment.name, &ov.experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(BlError::config(
                    "experiment.name",
                    format!("config is for {a:?} but {b:?} was invoked"),
                ))
            }
            (_, Some(b)) => experiment.name = Some(b.clone()),
            _ => {}
        }
        if let Some(n) = &experiment.name {
            if !EXPERIMENTS.contains(&n.as_str()) {
                return Err(BlError::config(
                    "experiment.name",
                    format!("unknown experiment {n:?}"),
                ));
            }
        }
        if let Some(g) = &ov.grid {
            experiment.grid = Some(GridSpec::Range(g.clone()));
        }
        experiment.points = ov.points.or(experiment.points);
        experiment.trials = ov.trials.or(experiment.trials);
        experiment.samples = ov.samples.or(experiment.samples);

        let mut optimizer = file.optimizer.unwrap_or_default();
        if let Some(r) = ov.restarts {
            optimizer.restarts = r;
        }
        let seed = ov.seed.or(file.seed).unwrap_or(0);
        optimizer.seed = seed;
        let mut distance = file.distance;
        if let Some(d) = distance.as_mut() {
            d.seed = seed;
        }

        let mut cfg = RunConfig {
            subcommand,
            datum: file.datum.map(|v| resolve_datum(v, base)).transpose()?,
            tuple: file
                .tuple
                .map(|v| resolve_inline("tuple", v, base))
                .transpose()?,
            function: file
                .function
                .map(|v| resolve_inline("function", v, base))
                .transpose()?,
            p: file.p,
            class: file.class,
            bl_const: file.bl_const,
            quadrature: file.quadrature.unwrap_or_default(),
            optimizer,
            distance,
            experiment,
            seed,
            output_dir: ov
                .output_dir
                .clone()
                .or(file.output_dir.map(|p| base.join(p)))
                .unwrap_or_else(|| "out".into()),
        };
        cfg.fill_experiment_defaults()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn fill_experiment_defaults(&mut self) -> Result<()> {
        let Some(name) = self.experiment.name.clone() else {
            return Ok(());
        };
        let e = &mut self.experiment;
        let points = *e.points.get_or_insert(8);
        let grid = |e: &ExperimentParams, default: Vec<f64>| -> Result<Option<GridSpec>> {
            Ok(Some(GridSpec::Values(match &e.grid {
                Some(g) => g.resolve(points)?,
                None => default,
            })))
        };
        match name.as_str() {
            "sweep" => {
                e.trials.get_or_insert(500);
                e.c.get_or_insert(crate::stability_lab::DEFAULT_C);
            }
            "opt1" => e.grid = grid(e, log_grid(1e-3, 1e-1, points))?,
            "opt2" => {
                e.grid = grid(e, log_grid(1e-1, 1e-3, points))?;
                e.k.get_or_insert(1.0);
            }
            "corollary" => e.grid = grid(e, log_grid(1e-3, 2e-2, points))?,
            "tuple" => {
                e.samples.get_or_insert(400);
            }
            "holder" => {
                e.d.get_or_insert(1);
                e.exponents.get_or_insert_with(|| vec![2.0, 2.0]);
                e.profile.get_or_insert(HolderProfile::Bump);
                e.r.get_or_insert(1.0);
            }
            "complex" => {
                e.phase_scale.get_or_insert(1.0);
            }
            _ => {}
        }
        if let Some(g @ GridSpec::Range(_)) = &e.grid {
            e.grid = Some(GridSpec::Values(g.resolve(points)?));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.quadrature
            .validate()
            .map_err(|e| prefixed("quadrature", e))?;
        let o = &self.optimizer;
        positive("optimizer.grad_tol", o.grad_tol)?;
        positive("optimizer.tol", o.tol)?;
        positive("optimizer.start_spread", o.start_spread)?;
        at_least("optimizer.max_iters", o.max_iters, 1)?;
        at_least("optimizer.restarts", o.restarts, 1)?;
        if let Some(d) = &self.distance {
            d.quadrature
                .validate()
                .map_err(|e| prefixed("distance.quadrature", e))?;
            at_least("distance.starts", d.starts, 1)?;
            at_least("distance.max_evals", d.max_evals, 1)?;
        }
        if let Some(b) = self.bl_const {
            positive("bl_const", b)?;
        }
        if let Some(p) = self.p {
            if !(p.0 >= 1.0) {
                return Err(BlError::config(
                    "p",
                    format!("exponent p = {} outside the range [1, inf]", p.0),
                ));
            }
        }
        if let Some(f) = &self.function {
            f.validate().map_err(|e| prefixed("function", e))?;
        }
        if let Some(t) = &self.tuple {
            for (j, f) in t.iter().enumerate() {
                f.validate()
                    .map_err(|e| prefixed(&format!("tuple[{j}]"), e))?;
            }
            if let Some(d) = &self.datum {
                if t.len() != d.m() {
                    return Err(BlError::config(
                        "tuple",
                        format!("{} functions for {} factors", t.len(), d.m()),
                    ));
                }
                for (j, (f, dim)) in t.iter().zip(d.dims()).enumerate() {
                    if f.dim() != dim {
                        return Err(BlError::config(
                            format!("tuple[{j}]"),
                            format!(
                                "lives in dimension {} but factor {j} has d_j = {dim}",
                                f.dim()
                            ),
                        ));
                    }
                }
            }
        }
        let e = &self.experiment;
        if let Some(n) = e.points {
            at_least("experiment.points", n, 2)?;
        }
        if let Some(n) = e.trials {
            at_least("experiment.trials", n, 1)?;
        }
        if let Some(n) = e.samples {
            at_least("experiment.samples", n, 2)?;
        }
        for (field, x) in [
            ("experiment.c", e.c),
            ("experiment.k", e.k),
            ("experiment.r", e.r),
        ] {
            if let Some(x) = x {
                positive(field, x)?;
            }
        }
        if let Some(x) = e.phase_scale {
            if !x.is_finite() {
                return Err(BlError::config("experiment.phase_scale", "must be finite"));
            }
        }
        if let Some(GridSpec::Values(g)) = &e.grid {
            if g.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(BlError::config(
                    "experiment.grid",
                    "values must be positive and finite",
                ));
            }
        }
        Ok(())
    }

    /// The configuration with object keys sorted; `output_dir` is left out.
    pub fn canonical(&self) -> Value {
        sort_keys(serde_json::to_value(self).expect("config serializes"))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

/// Recursively rebuilds objects with lexicographically ordered keys.
pub fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, sort_keys(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Parses, defaults and validates a config file without running anything.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path, &Overrides::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn load(v: Value) -> Result<RunConfig> {
        RunConfig::from_value(v, Path::new("."), &Overrides::default())
    }

    fn field_of(e: BlError) -> String {
        match e {
            BlError::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = load(json!({"datum": "frame-120"})).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.optimizer, OptimizerOpts::default());
        assert_eq!(c.quadrature, QuadratureOpts::default());
        let echo = c.canonical();
        assert!(echo["optimizer"]["restarts"].is_number());
        assert!(echo.get("output_dir").is_none());
    }

    #[test]
    fn bad_exponent_names_range() {
        let e = load(json!({"datum": {"d": 1, "factors": [{"matrix": [[1.0]], "p": 0.5}]}}))
            .unwrap_err();
        let msg = e.to_string();
        assert!(
            msg.contains("datum.factors[0].p") && msg.contains("[1, inf]"),
            "{msg}"
        );
    }

    #[test]
    fn declared_dimension_checked() {
        let e = load(
            json!({"datum": {"d": 2, "factors": [{"matrix": [[1.0, 0.0]], "p": 1, "dim": 2}]}}),
        )
        .unwrap_err();
        assert_eq!(field_of(e), "datum.factors[0].matrix");
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = load(json!({"datum": "frame-120", "sede": 3})).unwrap_err();
        assert!(e.to_string().contains("sede"));
        let e = load(json!({"datum": "frame-120", "quadrature": {"points": 3}})).unwrap_err();
        assert!(field_of(e).starts_with("quadrature"));
    }

    #[test]
    fn missing_file_rejected() {
        let e = load(json!({"datum": "no-such-datum.json"})).unwrap_err();
        assert_eq!(field_of(e), "datum");
    }

    #[test]
    fn tolerances_must_be_positive() {
        let e = load(json!({"datum": "frame-120", "optimizer": {"tol": 0.0}})).unwrap_err();
        assert_eq!(field_of(e), "optimizer.tol");
    }

    #[test]
    fn grid_ranges_resolve() {
        let ov = Overrides {
            experiment: Some("opt2".into()),
            grid: Some("1e-1..1e-3".into()),
            ..Overrides::default()
        };
        let c =
            RunConfig::from_value(json!({"datum": "holder-3-1.5"}), Path::new("."), &ov).unwrap();
        let Some(GridSpec::Values(g)) = &c.experiment.grid else {
            panic!()
        };
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-1).abs() < 1e-15 && (g[7] - 1e-3).abs() < 1e-15);
        assert!(GridSpec::Range("1..x".into()).resolve(4).is_err());
    }

    #[test]
    fn subcommand_mismatch_rejected() {
        let ov = Overrides {
            subcommand: Some("check".into()),
            ..Overrides::default()
        };
        let e = RunConfig::from_value(
            json!({"datum": "frame-120", "subcommand": "constant"}),
            Path::new("."),
            &ov,
        )
        .unwrap_err();
        assert_eq!(field_of(e), "subcommand");
    }
}
