//! Experiment configuration in a flat `key = value` format.
//!
//! ```text
//! # comments start with '#'
//! run.name = gauss-aux
//! train.alpha = 1.0
//! train.lr.milestones = [0.6, 0.9]
//! aux.kind = gauss-auxiliary
//! train.eval.cw = null
//! ```
//!
//! Keys are dotted paths into [`ExperimentConfig`]; a file only lists what differs from the
//! defaults. Values are JSON scalars or arrays, and strings may be written bare. Serializing
//! writes every key, sorted, so `parse(serialize(c)) == c`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attacks::{AttackConfig, AttackLoss};
use crate::biamat::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussmodel::TheoryParams;
use crate::harness::dataset::{generate_dataset, DatasetKind, DatasetSpec};
use crate::models::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    /// Seed of the initial weights.
    pub seed: u64,
}

/// Monte Carlo settings for `verify-theory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub params: TheoryParams,
    pub n: usize,
    pub seed: u64,
    /// Correlations for the weak-correlation sign checks.
    pub weak_gammas: Vec<f64>,
    /// `λ` used for the Theorem 2–3 and y^ER frequency checks.
    pub lambda_sign: f64,
    /// Robust-coordinate weight of the classifier in the Theorem 3 check.
    pub robust_weight: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            params: TheoryParams::default(),
            n: 200_000,
            seed: 1,
            weak_gammas: vec![0.25, 0.5, -0.5],
            lambda_sign: 0.5,
            robust_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub primary: DatasetSpec,
    pub aux: Option<DatasetSpec>,
    /// Appended to `aux` (mixtures of two auxiliary sources).
    pub aux_extra: Option<DatasetSpec>,
    /// Held-out split used to select the best checkpoint.
    pub heldout: DatasetSpec,
    /// Split reported by `evaluate`.
    pub test: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub theory: TheoryConfig,
}

/// Input-space budget of the toy task.
pub const TOY_EPSILON: f64 = 0.25;

/// Gaussian parameters of the toy task: `d = 50`, `η = 0.2`, `u = v = 0.6`.
pub fn toy_params() -> TheoryParams {
    TheoryParams {
        d: 50,
        eta: 0.2,
        lambda: 0.5,
        gamma: 1.0,
        u: 0.6,
        v: 0.6,
        p: 0.9,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = toy_params();
        Self {
            run: RunConfig {
                name: "toy".into(),
                out: "runs/toy".into(),
            },
            primary: DatasetSpec::gauss(DatasetKind::GaussPrimary, p, 256, 11),
            aux: Some(DatasetSpec::gauss(DatasetKind::GaussAuxiliary, p, 2048, 12)),
            aux_extra: None,
            heldout: DatasetSpec::gauss(DatasetKind::GaussPrimary, p, 1000, 13),
            test: DatasetSpec::gauss(DatasetKind::GaussPrimary, p, 2000, 14),
            model: ModelConfig {
                hidden: vec![64, 64],
                seed: 0,
            },
            train: TrainConfig::toy(TOY_EPSILON),
            theory: TheoryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The small toy task: a sample-starved primary split where auxiliary data matters.
    pub fn toy() -> Self {
        Self::default()
    }

    /// Toy task for studying routing: a well-sampled primary split and a long warm-up, so
    /// the frozen threshold separates in-distribution from conflicting auxiliary samples.
    /// The auxiliary set is half primary-distribution, half conflicting.
    pub fn toy_routing() -> Self {
        let p = TheoryParams {
            eta: 0.1,
            u: 0.5,
            v: 0.5,
            ..toy_params()
        };
        let mut c = Self::default();
        c.run.name = "toy-routing".into();
        c.run.out = "runs/toy-routing".into();
        c.primary = DatasetSpec::gauss(DatasetKind::GaussPrimary, p, 2048, 11);
        c.aux = Some(DatasetSpec::gauss(DatasetKind::GaussAuxiliary, p, 1024, 12));
        c.aux_extra = Some(DatasetSpec::gauss(
            DatasetKind::GaussConflicting,
            p,
            1024,
            15,
        ));
        c.heldout.params = p;
        c.test.params = p;
        c.model.hidden = vec![32, 32];
        c.train.epochs = 25;
        c.train.warmup = 15;
        c
    }
}

/// Materialized data of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub primary: Dataset,
    pub aux: Option<Dataset>,
    pub heldout: Dataset,
    pub test: Dataset,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.primary.validate()?;
        self.heldout.validate()?;
        self.test.validate()?;
        if let Some(a) = &self.aux {
            a.validate()?;
        }
        match (&self.aux, &self.aux_extra) {
            (None, Some(_)) => return Err(Error::Config("aux_extra given without aux".into())),
            (_, Some(e)) => e.validate()?,
            _ => {}
        }
        Ok(())
    }

    pub fn data(&self) -> Result<ExperimentData> {
        self.validate()?;
        let primary = generate_dataset(&self.primary)?;
        let aux = match &self.aux {
            None => None,
            Some(spec) => {
                let a = generate_dataset(spec)?;
                Some(match &self.aux_extra {
                    Some(e) => a.concat(&generate_dataset(e)?)?,
                    None => a,
                })
            }
        };
        Ok(ExperimentData {
            primary,
            aux,
            heldout: generate_dataset(&self.heldout)?,
            test: generate_dataset(&self.test)?,
        })
    }

    pub fn architecture(&self, data: &ExperimentData) -> Architecture {
        Architecture {
            input: data.primary.width(),
            hidden: self.model.hidden.clone(),
            classes_pri: data.primary.classes(),
            classes_aux: data
                .aux
                .as_ref()
                .map_or(data.primary.classes(), Dataset::classes),
        }
    }

    /// Evaluation attacks in reporting order: PGD, then CW when configured.
    pub fn eval_attacks(&self) -> Vec<AttackConfig> {
        let mut v = vec![self.train.eval.pgd.clone()];
        v.extend(self.train.eval.cw.clone());
        v
    }

    pub fn parse(text: &str) -> Result<Self> {
        let defaults = to_value(&Self::default())?;
        let mut root = defaults.clone();
        let template = to_value(&Self::template())?;
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let Some((key, value)) = split_line(line, line_no)? else {
                continue;
            };
            set_path(&mut root, &template, &key, value, line_no)?;
        }
        let cfg: Self = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn serialize(&self) -> Result<String> {
        let mut lines = Vec::new();
        flatten("", &to_value(self)?, &mut lines);
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(&format!("{k} = {}\n", render(&v)));
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.serialize()?).map_err(|e| Error::io(path, e))
    }

    /// Every optional section populated: the set of keys a file may use.
    fn template() -> Self {
        let d = Self::default();
        let cw = AttackConfig::pgd(TOY_EPSILON, 20).with_loss(AttackLoss::CwMargin);
        let mut t = d.clone();
        t.aux = d.aux.clone().or_else(|| Some(d.primary.clone()));
        t.aux_extra = Some(DatasetSpec::gauss(
            DatasetKind::GaussConflicting,
            toy_params(),
            2048,
            15,
        ));
        t.train.eval.cw = Some(cw);
        t.train.attack.clamp = Some((0.0, 1.0));
        t.train.eval.pgd.clamp = Some((0.0, 1.0));
        if let Some(c) = &mut t.train.eval.cw {
            c.clamp = Some((0.0, 1.0));
        }
        for spec in [&mut t.primary, &mut t.heldout, &mut t.test]
            .into_iter()
            .chain(t.aux.as_mut())
            .chain(t.aux_extra.as_mut())
        {
            spec.path = Some("data.idx".into());
            spec.labels = Some("labels.idx".into());
        }
        t
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
}

/// `Ok(None)` for blank and comment lines.
fn split_line(line: &str, line_no: usize) -> Result<Option<(String, Value)>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let bad = |m: &str| Error::Config(format!("line {line_no}: {m}"));
    let (key, raw) = trimmed
        .split_once('=')
        .ok_or_else(|| bad("expected `key = value`"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|s| s.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let raw = raw.trim();
    let value = if raw.starts_with('"') || raw.starts_with('[') {
        let mut stream = serde_json::Deserializer::from_str(raw).into_iter::<Value>();
        let v = stream
            .next()
            .ok_or_else(|| bad("missing value"))?
            .map_err(|e| bad(&e.to_string()))?;
        let rest = raw[stream.byte_offset()..].trim();
        if !(rest.is_empty() || rest.starts_with('#')) {
            return Err(bad("trailing text after value"));
        }
        v
    } else {
        let bare = raw.split_once(" #").map_or(raw, |(v, _)| v).trim();
        if bare.is_empty() {
            return Err(bad("missing value"));
        }
        serde_json::from_str::<Value>(bare)
            .ok()
            .filter(|v| !v.is_object() && !v.is_string())
            .unwrap_or_else(|| Value::String(bare.to_string()))
    };
    Ok(Some((key.to_string(), value)))
}

fn set_path(
    root: &mut Value,
    template: &Value,
    key: &str,
    value: Value,
    line_no: usize,
) -> Result<()> {
    let unknown = || Error::Config(format!("line {line_no}: unknown key `{key}`"));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    let mut tmpl = template;
    for (k, part) in parts.iter().enumerate() {
        tmpl = tmpl.get(*part).ok_or_else(unknown)?;
        let obj = node.as_object_mut().ok_or_else(unknown)?;
        let slot = obj.get_mut(*part).ok_or_else(unknown)?;
        if k + 1 == parts.len() {
            if tmpl.is_object() && !value.is_null() {
                return Err(Error::Config(format!(
                    "line {line_no}: `{key}` is a section"
                )));
            }
            *slot = value;
            return Ok(());
        }
        // Entering an absent optional section starts from its template.
        if slot.is_null() {
            *slot = tmpl.clone();
        }
        node = slot;
    }
    Err(unknown())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            let map: &Map<String, Value> = map;
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// Bare strings unless the bare form would read back as something else.
fn render(v: &Value) -> String {
    match v {
        Value::String(s) => {
            let bare_ok = !s.is_empty()
                && s.trim() == s
                && !s.starts_with('"')
                && !s.starts_with('[')
                && !s.starts_with('#')
                && !s.contains(" #")
                && serde_json::from_str::<Value>(s)
                    .map_or(true, |p| p.is_object() || p.is_string());
            if bare_ok {
                s.clone()
            } else {
                v.to_string()
            }
        }
        _ => v.to_string(),
    }
}
