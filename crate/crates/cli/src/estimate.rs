//! Logit estimation over dataset files.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use spsim_core::choice::{
    estimate, estimate_joint, format_report, read_dataset, ChoiceObservation, EstimationResult, UtilitySpec,
};
use spsim_core::experiment::Stage;

pub fn load_datasets(paths: &[PathBuf]) -> Result<Vec<ChoiceObservation>> {
    let mut data = Vec::new();
    for p in paths {
        let file = File::open(p).with_context(|| format!("opening dataset {}", p.display()))?;
        data.extend(read_dataset(BufReader::new(file)).with_context(|| format!("reading dataset {}", p.display()))?);
    }
    Ok(data)
}

/// Fitted models with their column labels: one per dataset, or a single
/// pooled model when `joint` is set.
pub fn estimate_models(
    data: &[ChoiceObservation],
    joint: bool,
    reference: Option<Stage>,
) -> Result<Vec<(String, EstimationResult)>> {
    if joint {
        let spec = UtilitySpec::for_data(data, reference)?;
        let result = estimate_joint(data, &spec).context("joint estimation failed")?;
        return Ok(vec![("joint".into(), result)]);
    }
    let mut out = Vec::new();
    for stage in Stage::ALL {
        let rows: Vec<ChoiceObservation> = data.iter().filter(|o| o.dataset == stage).cloned().collect();
        if rows.is_empty() {
            continue;
        }
        let spec = UtilitySpec::for_data(&rows, None)?;
        let result = estimate(&rows, &spec).with_context(|| format!("estimation on the {} dataset failed", stage.label()))?;
        out.push((stage.label().to_string(), result));
    }
    Ok(out)
}

pub fn report(models: &[(String, EstimationResult)]) -> String {
    let refs: Vec<(&str, &EstimationResult)> = models.iter().map(|(n, m)| (n.as_str(), m)).collect();
    format_report(&refs)
}
