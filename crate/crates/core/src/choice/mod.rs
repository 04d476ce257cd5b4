//! Binary logit estimation of the stated preference between the current
//! crossing and the autonomous one, pooled across survey instruments with
//! instrument-specific scale parameters.

mod estimate;
pub mod likelihood;
pub mod linalg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use estimate::{fit, Fit, FitOptions};
pub use likelihood::{DesignMatrix, Evaluation};

use crate::experiment::{City, Preference, Session, Stage, TravelMode};
use crate::num::Real;

/// Covariate names in column order. The last one is only observed in the
/// immersive stage.
pub const COVARIATES: [&str; 6] = ["ASC_AV", "Age", "Female", "Bike_male", "Toronto", "HMD"];
const HMD: usize = 5;

#[derive(Debug, Error)]
pub enum ChoiceError {
    #[error("session '{0}' has no recorded preference")]
    MissingPreference(String),
    #[error("row {row}: covariate '{covariate}' is not finite")]
    NonFinite { row: usize, covariate: String },
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("invalid utility specification: {0}")]
    InvalidSpec(String),
    #[error("separation: no observation chooses the '{0}' alternative, so the likelihood has no maximum")]
    NoVariation(&'static str),
    #[error(
        "separation: coefficient of '{covariate}' reached {value:.3} with gradient norm {gradient_norm:.3e}; \
         a covariate predicts the choice (near) perfectly"
    )]
    Separation { covariate: String, value: f64, gradient_norm: f64 },
    #[error("observed information is singular at the solution; a covariate is constant or collinear")]
    SingularInformation,
    #[error("log-likelihood {loglik} must be non-positive and null log-likelihood {null} negative")]
    InvalidLoglik { loglik: f64, null: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObservation {
    pub respondent: String,
    pub dataset: Stage,
    /// Values of the leading `x.len()` entries of [`COVARIATES`].
    pub x: Vec<f64>,
    /// `true` when the AV alternative was chosen.
    pub chosen: bool,
}

/// Covariates and scale groups of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub covariates: Vec<String>,
    pub groups: BTreeMap<Stage, usize>,
    /// Group whose scale is fixed at 1.
    pub reference: usize,
}

impl UtilitySpec {
    /// Spec covering the columns and datasets present in `data`. The
    /// reference defaults to the immersive stage when present, otherwise the
    /// last dataset.
    pub fn for_data(data: &[ChoiceObservation], reference: Option<Stage>) -> Result<Self, ChoiceError> {
        let stages: BTreeSet<Stage> = data.iter().map(|o| o.dataset).collect();
        if stages.is_empty() {
            return Err(ChoiceError::InvalidSpec("no observations".into()));
        }
        let k = data.iter().map(|o| o.x.len()).max().unwrap_or(0);
        let groups: BTreeMap<Stage, usize> = stages.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let reference = match reference {
            Some(r) => *groups
                .get(&r)
                .ok_or_else(|| ChoiceError::InvalidSpec(format!("reference '{}' has no observations", r.label())))?,
            None => groups.get(&Stage::Vire).copied().unwrap_or(groups.len() - 1),
        };
        Ok(UtilitySpec { covariates: COVARIATES[..k].iter().map(|s| s.to_string()).collect(), groups, reference })
    }

    pub fn group_count(&self) -> usize {
        self.groups.values().max().map_or(0, |m| m + 1)
    }

    pub fn validate(&self) -> Result<(), ChoiceError> {
        let n = self.group_count();
        let used: BTreeSet<usize> = self.groups.values().copied().collect();
        if used.len() != n {
            return Err(ChoiceError::InvalidSpec("scale group indices must be contiguous from 0".into()));
        }
        if self.reference >= n {
            return Err(ChoiceError::InvalidSpec(format!("reference group {} does not exist", self.reference)));
        }
        if self.covariates.is_empty() {
            return Err(ChoiceError::InvalidSpec("no covariates".into()));
        }
        Ok(())
    }

    pub fn stage_of_group(&self, g: usize) -> Option<Stage> {
        self.groups.iter().find(|(_, &i)| i == g).map(|(&s, _)| s)
    }

    /// Builds the design matrix in scalar type `T`.
    pub fn design<T: Real>(&self, data: &[ChoiceObservation]) -> Result<DesignMatrix<T>, ChoiceError> {
        self.validate()?;
        let k = self.covariates.len();
        let mut x = Vec::with_capacity(data.len() * k);
        let mut group = Vec::with_capacity(data.len());
        for (row, o) in data.iter().enumerate() {
            if o.x.len() > k {
                return Err(ChoiceError::InvalidRow { row, reason: format!("{} covariates, spec has {k}", o.x.len()) });
            }
            let g = *self.groups.get(&o.dataset).ok_or_else(|| ChoiceError::InvalidRow {
                row,
                reason: format!("dataset '{}' is not mapped to a scale group", o.dataset.label()),
            })?;
            for (c, &v) in o.x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ChoiceError::NonFinite { row, covariate: self.covariates[c].clone() });
                }
                x.push(T::lit(v));
            }
            x.extend(std::iter::repeat(T::zero()).take(k - o.x.len()));
            group.push(g);
        }
        Ok(DesignMatrix {
            k,
            x,
            y: data.iter().map(|o| o.chosen).collect(),
            group,
            groups: self.group_count(),
            reference: self.reference,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub dataset: Stage,
    pub value: f64,
    /// `None` for the reference group, whose scale is fixed.
    pub std_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub covariates: Vec<String>,
    pub beta: Vec<ParamEstimate>,
    /// Empty for a single-dataset model.
    pub scales: Vec<ScaleEstimate>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub rho_sq: f64,
    pub observations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl EstimationResult {
    pub fn beta_values(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.value).collect()
    }

    pub fn scale(&self, dataset: Stage) -> Option<&ScaleEstimate> {
        self.scales.iter().find(|s| s.dataset == dataset)
    }
}

/// McFadden's ρ² against the null model.
pub fn rho_squared(loglik: f64, null_loglik: f64) -> Result<f64, ChoiceError> {
    if loglik > 0.0 || !(null_loglik < 0.0) || !loglik.is_finite() {
        return Err(ChoiceError::InvalidLoglik { loglik, null: null_loglik });
    }
    Ok(1.0 - loglik / null_loglik)
}

/// Log-likelihood of the model with all coefficients zero.
pub fn null_loglik(n: usize) -> f64 {
    n as f64 * 0.5f64.ln()
}

/// Log-likelihood and its gradient over `β` and the non-reference scales.
/// `scales` holds one entry per group, including the reference.
pub fn loglik_grad(
    data: &[ChoiceObservation],
    spec: &UtilitySpec,
    beta: &[f64],
    scales: &[f64],
) -> Result<(f64, Vec<f64>), ChoiceError> {
    let d = spec.design::<f64>(data)?;
    if beta.len() != d.k || scales.len() != d.groups {
        return Err(ChoiceError::InvalidSpec(format!(
            "expected {} coefficients and {} scales, got {} and {}",
            d.k,
            d.groups,
            beta.len(),
            scales.len()
        )));
    }
    let ev = d.evaluate(&d.pack(beta, scales), false);
    Ok((ev.loglik, ev.gradient))
}

/// Fits a model on one dataset.
pub fn estimate(data: &[ChoiceObservation], spec: &UtilitySpec) -> Result<EstimationResult, ChoiceError> {
    if spec.group_count() != 1 {
        return Err(ChoiceError::InvalidSpec("a single-dataset model has exactly one scale group".into()));
    }
    estimate_with(data, spec, &FitOptions::default())
}

/// Fits one coefficient vector over pooled datasets with a scale per group.
pub fn estimate_joint(data: &[ChoiceObservation], spec: &UtilitySpec) -> Result<EstimationResult, ChoiceError> {
    estimate_with(data, spec, &FitOptions::default())
}

pub fn estimate_with(
    data: &[ChoiceObservation],
    spec: &UtilitySpec,
    opts: &FitOptions,
) -> Result<EstimationResult, ChoiceError> {
    let d = spec.design::<f64>(data)?;
    if !d.y.iter().any(|&y| y) {
        return Err(ChoiceError::NoVariation("av"));
    }
    if d.y.iter().all(|&y| y) {
        return Err(ChoiceError::NoVariation("current"));
    }
    let f = fit(&d, &spec.covariates, opts)?;
    let dim = d.dim();
    let se = |i: usize| f.covariance[i * dim + i].max(0.0).sqrt();
    let beta = (0..d.k).map(|a| ParamEstimate { value: f.theta[a], std_err: se(a) }).collect();
    let scales = if d.groups > 1 {
        (0..d.groups)
            .map(|g| {
                let slot = d.scale_slot(g);
                ScaleEstimate {
                    dataset: spec.stage_of_group(g).expect("group is mapped"),
                    value: slot.map_or(1.0, |s| f.theta[s]),
                    std_err: slot.map(se),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let null = null_loglik(d.rows());
    Ok(EstimationResult {
        covariates: spec.covariates.clone(),
        beta,
        scales,
        loglik: f.loglik,
        null_loglik: null,
        rho_sq: rho_squared(f.loglik.min(0.0), null)?,
        observations: d.rows(),
        iterations: f.iterations,
        converged: f.converged,
        gradient_norm: f.gradient_norm,
    })
}

fn standardizer(ages: impl Iterator<Item = f64>) -> (f64, f64) {
    let ages: Vec<f64> = ages.collect();
    let n = ages.len() as f64;
    if ages.is_empty() {
        return (0.0, 1.0);
    }
    let mean = ages.iter().sum::<f64>() / n;
    let var = if ages.len() > 1 { ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Covariate row per session. Age is standardized by the mean and sample
/// standard deviation over the distinct respondents in `sessions`.
pub fn covariate_rows(sessions: &[Session]) -> Vec<Vec<f64>> {
    let mut seen = BTreeMap::new();
    for s in sessions {
        seen.entry(s.respondent.id.as_str()).or_insert(s.respondent.age);
    }
    let (mean, sd) = standardizer(seen.values().copied());
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    sessions
        .iter()
        .map(|s| {
            let r = &s.respondent;
            let mut x = vec![
                1.0,
                (r.age - mean) / sd,
                flag(r.female),
                flag(r.primary_mode == TravelMode::Bike && !r.female),
                flag(r.city == City::Toronto),
            ];
            if s.stage == Stage::Vire {
                x.push(flag(r.hmd_experience));
            }
            x
        })
        .collect()
}

/// One observation per session, in session order.
pub fn build_dataset(sessions: &[Session]) -> Result<Vec<ChoiceObservation>, ChoiceError> {
    let rows = covariate_rows(sessions);
    sessions
        .iter()
        .zip(rows)
        .map(|(s, x)| {
            let p = s.preference.ok_or_else(|| ChoiceError::MissingPreference(s.id.clone()))?;
            Ok(ChoiceObservation {
                respondent: s.respondent.id.clone(),
                dataset: s.stage,
                x,
                chosen: p == Preference::Av,
            })
        })
        .collect()
}

/// Redraws `chosen` for every row from the model with coefficients `beta`
/// and per-dataset `scales` (missing datasets use 1).
pub fn simulate_choices(
    profiles: &[ChoiceObservation],
    beta: &[f64],
    scales: &BTreeMap<Stage, f64>,
    seed: u64,
) -> Vec<ChoiceObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    profiles
        .iter()
        .map(|o| {
            let v: f64 = o.x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let u = scales.get(&o.dataset).copied().unwrap_or(1.0) * v;
            let p = 1.0 / (1.0 + (-u).exp());
            ChoiceObservation { chosen: rng.gen::<f64>() < p, ..o.clone() }
        })
        .collect()
}

/// Random respondent covariates shaped like the survey sample: standardized
/// age, balanced gender and city, a minority of male cyclists, and HMD
/// experience for the immersive stage. `chosen` is left `false`.
pub fn synthetic_profiles(n: usize, dataset: Stage, seed: u64) -> Vec<ChoiceObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let female = rng.gen_bool(0.5);
            let bike = rng.gen_bool(0.3);
            let mut x = vec![
                1.0,
                StandardNormal.sample(&mut rng),
                if female { 1.0 } else { 0.0 },
                if bike && !female { 1.0 } else { 0.0 },
                if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
            ];
            let hmd = rng.gen_bool(0.3);
            if dataset == Stage::Vire {
                x.push(if hmd { 1.0 } else { 0.0 });
            }
            ChoiceObservation { respondent: format!("s{i}"), dataset, x, chosen: false }
        })
        .collect()
}

/// Number of rows and share choosing the AV alternative, per dataset.
pub fn choice_shares(data: &[ChoiceObservation]) -> BTreeMap<Stage, (usize, f64)> {
    let mut counts: BTreeMap<Stage, (usize, usize)> = BTreeMap::new();
    for o in data {
        let c = counts.entry(o.dataset).or_default();
        c.0 += 1;
        c.1 += o.chosen as usize;
    }
    counts.into_iter().map(|(s, (n, av))| (s, (n, av as f64 / n as f64))).collect()
}

/// Writes observations as CSV: the covariate columns, then `dataset`,
/// `chosen` and `respondent`. Covariates a row does not observe are empty.
pub fn write_dataset<W: Write>(data: &[ChoiceObservation], out: W) -> Result<(), ChoiceError> {
    let k = data.iter().map(|o| o.x.len()).max().unwrap_or(COVARIATES.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COVARIATES[..k].to_vec();
    header.extend(["dataset", "chosen", "respondent"]);
    w.write_record(&header)?;
    for o in data {
        let mut rec: Vec<String> = (0..k).map(|c| o.x.get(c).map(|v| v.to_string()).unwrap_or_default()).collect();
        rec.push(o.dataset.label().into());
        rec.push(if o.chosen { "1".into() } else { "0".into() });
        rec.push(o.respondent.clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<ChoiceObservation>, ChoiceError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let missing = |name: &str| ChoiceError::InvalidRow { row: 0, reason: format!("missing column '{name}'") };
    let dataset_col = col("dataset").ok_or_else(|| missing("dataset"))?;
    let chosen_col = col("chosen").ok_or_else(|| missing("chosen"))?;
    let respondent_col = col("respondent");
    let mut cov_cols = Vec::new();
    for name in COVARIATES {
        match col(name) {
            Some(c) => cov_cols.push(c),
            None => break,
        }
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |reason: String| ChoiceError::InvalidRow { row, reason };
        let dataset = match &rec[dataset_col] {
            "text" => Stage::Text,
            "visual" => Stage::Visual,
            "vire" => Stage::Vire,
            other => return Err(bad(format!("unknown dataset '{other}'"))),
        };
        let chosen = match rec[chosen_col].trim() {
            "1" | "av" => true,
            "0" | "current" => false,
            other => return Err(bad(format!("chosen must be 0 or 1, got '{other}'"))),
        };
        let mut x = Vec::with_capacity(cov_cols.len());
        for (c, &ci) in cov_cols.iter().enumerate() {
            let cell = rec[ci].trim();
            if cell.is_empty() {
                if rec.iter().enumerate().any(|(j, v)| cov_cols[c..].contains(&j) && !v.trim().is_empty()) {
                    return Err(bad(format!("'{}' is empty but a later covariate is not", COVARIATES[c])));
                }
                break;
            }
            let v: f64 = cell.parse().map_err(|_| bad(format!("'{}' is not a number: '{cell}'", COVARIATES[c])))?;
            x.push(v);
        }
        if x.len() > HMD && dataset != Stage::Vire {
            return Err(bad(format!("HMD is only observed for the vire dataset, not '{}'", dataset.label())));
        }
        let respondent = respondent_col.map_or_else(|| format!("row{row}"), |c| rec[c].to_string());
        out.push(ChoiceObservation { respondent, dataset, x, chosen });
    }
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders models side by side: one column per labelled result, one row per
/// coefficient (value and standard error), then scales, 𝓛, ρ² and Obs.
/// The scales block is omitted when no model has one.
pub fn format_report(models: &[(&str, &EstimationResult)]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let push = |rows: &mut Vec<(String, Vec<String>)>, label: String, cells: Vec<String>| rows.push((label, cells));
    let covs: Vec<String> = COVARIATES
        .iter()
        .filter(|c| models.iter().any(|(_, m)| m.covariates.iter().any(|x| x == *c)))
        .map(|c| c.to_string())
        .collect();
    for c in &covs {
        let get = |m: &EstimationResult| m.covariates.iter().position(|x| x == c).map(|i| m.beta[i]);
        push(&mut rows, format!("β {c}"), models.iter().map(|(_, m)| get(m).map_or("-".into(), |b| fmt_num(b.value))).collect());
        push(&mut rows, "  st-err".into(), models.iter().map(|(_, m)| get(m).map_or(String::new(), |b| fmt_num(b.std_err))).collect());
    }
    let stages: BTreeSet<Stage> = models.iter().flat_map(|(_, m)| m.scales.iter().map(|s| s.dataset)).collect();
    for st in stages {
        push(
            &mut rows,
            format!("μ {}", st.label()),
            models
                .iter()
                .map(|(_, m)| match m.scale(st) {
                    Some(s) if s.std_err.is_none() => "1 (fixed)".into(),
                    Some(s) => fmt_num(s.value),
                    None => "-".into(),
                })
                .collect(),
        );
        push(
            &mut rows,
            "  st-err".into(),
            models.iter().map(|(_, m)| m.scale(st).and_then(|s| s.std_err).map_or(String::new(), fmt_num)).collect(),
        );
    }
    push(&mut rows, "𝓛".into(), models.iter().map(|(_, m)| format!("{:.2}", m.loglik)).collect());
    push(&mut rows, "ρ²".into(), models.iter().map(|(_, m)| fmt_num(m.rho_sq)).collect());
    push(&mut rows, "Obs.".into(), models.iter().map(|(_, m)| m.observations.to_string()).collect());
    if models.iter().any(|(_, m)| !m.converged) {
        push(&mut rows, "converged".into(), models.iter().map(|(_, m)| m.converged.to_string()).collect());
    }

    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(9);
    let col_w = models
        .iter()
        .enumerate()
        .map(|(i, (name, _))| rows.iter().map(|(_, c)| c[i].chars().count()).max().unwrap_or(0).max(name.chars().count()))
        .collect::<Vec<_>>();
    let mut out = String::new();
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let _ = write!(out, "{}", pad("Parameter", label_w));
    for (i, (name, _)) in models.iter().enumerate() {
        let _ = write!(out, "  {:>w$}", name, w = col_w[i]);
    }
    out.push('\n');
    for (label, cells) in &rows {
        let _ = write!(out, "{}", pad(label, label_w));
        for (i, c) in cells.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", c, w = col_w[i]);
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}
