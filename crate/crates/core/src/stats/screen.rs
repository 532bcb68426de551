use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{anova_oneway, homogeneity, kruskal_wallis, normality, HomogeneityTest, NormalityTest, StatsError};
use crate::domain::{CensusCategory, CensusProfile, CensusVariable, NeighborhoodId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    BenjaminiHochberg,
}

impl std::str::FromStr for Correction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Correction::None),
            "benjamini_hochberg" | "bh" => Ok(Correction::BenjaminiHochberg),
            _ => Err(format!("unknown correction `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    pub alpha: f64,
    pub normality_test: NormalityTest,
    pub homogeneity_test: HomogeneityTest,
    pub correction: Correction,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            alpha: 0.05,
            normality_test: NormalityTest::ShapiroWilk,
            homogeneity_test: HomogeneityTest::BrownForsythe,
            correction: Correction::None,
        }
    }
}

impl ScreeningConfig {
    pub fn check(&self) -> Result<(), StatsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidConfig(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestUsed {
    Anova,
    KruskalWallis,
    Skipped,
}

impl TestUsed {
    pub fn as_str(self) -> &'static str {
        match self {
            TestUsed::Anova => "anova",
            TestUsed::KruskalWallis => "kruskal_wallis",
            TestUsed::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableTestResult {
    pub var_id: String,
    pub label: String,
    pub category: CensusCategory,
    pub test_used: TestUsed,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// Benjamini-Hochberg adjusted p when that correction is on.
    pub p_adjusted: Option<f64>,
    /// Usable values per cluster, in label order.
    pub group_sizes: Vec<usize>,
    /// Per-group normality at alpha; `None` when the group is too small to test.
    pub normality: Vec<Option<bool>>,
    pub homogeneity: Option<bool>,
    pub significant: bool,
    pub reason: Option<String>,
}

impl VariableTestResult {
    /// `normality=pass|fail|na...;homogeneity=...;rule=...`
    pub fn flags(&self) -> String {
        let norm = |v: &Option<bool>| match v {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "na",
        };
        let mut parts = Vec::new();
        if !self.normality.is_empty() {
            parts.push(format!("normality={}", self.normality.iter().map(norm).collect::<Vec<_>>().join("|")));
        }
        if self.test_used != TestUsed::Skipped {
            parts.push(format!("homogeneity={}", norm(&self.homogeneity)));
            let rule = match (self.test_used, self.homogeneity) {
                (TestUsed::Anova, _) => "assumptions_met",
                (_, Some(true)) => "normality_failed",
                _ => "homogeneity_failed",
            };
            parts.push(format!("rule={rule}"));
        }
        if let Some(p) = self.p_adjusted {
            parts.push(format!("p_adjusted={p}"));
        }
        if let Some(r) = &self.reason {
            parts.push(format!("reason={r}"));
        }
        parts.join(";")
    }
}

fn test_variable(var: &CensusVariable, groups: Vec<Vec<f64>>, config: &ScreeningConfig) -> VariableTestResult {
    let mut r = VariableTestResult {
        var_id: var.var_id.clone(),
        label: var.label.clone(),
        category: var.category,
        test_used: TestUsed::Skipped,
        statistic: None,
        p_value: None,
        p_adjusted: None,
        group_sizes: groups.iter().map(Vec::len).collect(),
        normality: Vec::new(),
        homogeneity: None,
        significant: false,
        reason: None,
    };
    if groups.len() < 2 {
        r.reason = Some(format!("only {} cluster(s) have values", groups.len()));
        return r;
    }
    if let Some(small) = groups.iter().position(|g| g.len() < 2) {
        r.reason = Some(format!("cluster group {small} has fewer than 2 usable values"));
        return r;
    }
    let first = groups[0][0];
    if groups.iter().flatten().all(|v| *v == first) {
        r.reason = Some(StatsError::DegenerateInput("variable is constant".into()).to_string());
        return r;
    }

    r.normality = groups
        .iter()
        .map(|g| match normality(g, config.normality_test) {
            Ok((_, p)) => Some(p >= config.alpha),
            Err(StatsError::SampleTooSmall { .. }) => None,
            Err(_) => Some(false),
        })
        .collect();
    r.homogeneity = Some(match homogeneity(&groups, config.homogeneity_test) {
        Ok((_, p)) => p >= config.alpha,
        Err(_) => false,
    });
    let normal = r.normality.iter().all(|v| *v != Some(false));
    let outcome = if normal && r.homogeneity == Some(true) {
        anova_oneway(&groups).map(|a| (TestUsed::Anova, a.f, a.p))
    } else {
        kruskal_wallis(&groups).map(|(h, p)| (TestUsed::KruskalWallis, h, p))
    };
    match outcome {
        Ok((t, s, p)) => {
            r.test_used = t;
            r.statistic = Some(s);
            r.p_value = Some(p);
        }
        Err(e) => r.reason = Some(e.to_string()),
    }
    r
}

/// BH step-up adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        out[i] = running.min(1.0);
    }
    out
}

/// Screens every catalog variable for differences across cluster labels.
/// ANOVA is used when every group passes normality and variances are
/// homogeneous, Kruskal-Wallis otherwise. Missing values are dropped per
/// variable. Results are sorted by p ascending, ties by var_id, with
/// skipped variables last.
pub fn screen(
    profiles: &[CensusProfile],
    labels: &BTreeMap<NeighborhoodId, usize>,
    catalog: &[CensusVariable],
    config: &ScreeningConfig,
) -> Result<Vec<VariableTestResult>, StatsError> {
    config.check()?;
    let by_id: BTreeMap<&NeighborhoodId, &CensusProfile> = profiles.iter().map(|p| (&p.neighborhood, p)).collect();
    for id in labels.keys() {
        if !by_id.contains_key(id) {
            return Err(StatsError::LabelWithoutProfile(id.clone()));
        }
    }
    let clusters: BTreeSet<usize> = labels.values().copied().collect();

    let mut results: Vec<VariableTestResult> = catalog
        .par_iter()
        .map(|var| {
            let groups: Vec<Vec<f64>> = clusters
                .iter()
                .map(|c| {
                    labels
                        .iter()
                        .filter(|(_, l)| *l == c)
                        .filter_map(|(id, _)| by_id[id].get(&var.var_id))
                        .filter(|v| v.is_finite())
                        .collect()
                })
                .collect();
            test_variable(var, groups, config)
        })
        .collect();

    let tested: Vec<usize> = (0..results.len()).filter(|&i| results[i].p_value.is_some()).collect();
    if config.correction == Correction::BenjaminiHochberg {
        let p: Vec<f64> = tested.iter().map(|&i| results[i].p_value.expect("tested")).collect();
        for (&i, adj) in tested.iter().zip(benjamini_hochberg(&p)) {
            results[i].p_adjusted = Some(adj);
        }
    }
    for r in &mut results {
        r.significant = r.p_adjusted.or(r.p_value).is_some_and(|p| p < config.alpha);
    }
    results.sort_by(|a, b| match (a.p_value, b.p_value) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.var_id.cmp(&b.var_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.var_id.cmp(&b.var_id),
    });
    Ok(results)
}

/// Up to `top_n` significant variables: the best of each category first,
/// then the remaining by p. The selection is returned in p order.
pub fn suggest_variables(results: &[VariableTestResult], top_n: usize) -> Result<Vec<String>, StatsError> {
    if results.is_empty() {
        return Err(StatsError::NoRunAvailable);
    }
    let mut sig: Vec<&VariableTestResult> = results.iter().filter(|r| r.significant).collect();
    sig.sort_by(|a, b| {
        let pa = a.p_adjusted.or(a.p_value).unwrap_or(1.0);
        let pb = b.p_adjusted.or(b.p_value).unwrap_or(1.0);
        pa.total_cmp(&pb).then_with(|| a.var_id.cmp(&b.var_id))
    });
    let mut chosen = vec![false; sig.len()];
    let mut seen = BTreeSet::new();
    let mut count = 0;
    for (i, r) in sig.iter().enumerate() {
        if count == top_n {
            break;
        }
        if seen.insert(r.category) {
            chosen[i] = true;
            count += 1;
        }
    }
    for c in chosen.iter_mut() {
        if count == top_n {
            break;
        }
        if !*c {
            *c = true;
            count += 1;
        }
    }
    Ok(sig
        .iter()
        .zip(&chosen)
        .filter(|(_, c)| **c)
        .map(|(r, _)| r.var_id.clone())
        .collect())
}

/// `var_id,label,category,test_used,statistic,p_value,significant,flags`
pub fn write_screening_csv<W: Write>(results: &[VariableTestResult], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["var_id", "label", "category", "test_used", "statistic", "p_value", "significant", "flags"])?;
    for r in results {
        w.write_record([
            r.var_id.clone(),
            r.label.clone(),
            r.category.to_string(),
            r.test_used.as_str().to_string(),
            r.statistic.map(|v| v.to_string()).unwrap_or_default(),
            r.p_value.map(|v| v.to_string()).unwrap_or_default(),
            r.significant.to_string(),
            r.flags(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
