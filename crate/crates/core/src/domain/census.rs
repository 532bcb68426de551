use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{reader, Columns};
use super::{fmt_f64, read_file, DomainError, NeighborhoodId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CensusCategory {
    Geography,
    EthnicOrigins,
    LanguageImmigration,
    Income,
    CostOfLiving,
    Employment,
    Occupation,
    Population,
}

impl CensusCategory {
    pub const ALL: [CensusCategory; 8] = [
        CensusCategory::Geography,
        CensusCategory::EthnicOrigins,
        CensusCategory::LanguageImmigration,
        CensusCategory::Income,
        CensusCategory::CostOfLiving,
        CensusCategory::Employment,
        CensusCategory::Occupation,
        CensusCategory::Population,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CensusCategory::Geography => "Geography",
            CensusCategory::EthnicOrigins => "EthnicOrigins",
            CensusCategory::LanguageImmigration => "LanguageImmigration",
            CensusCategory::Income => "Income",
            CensusCategory::CostOfLiving => "CostOfLiving",
            CensusCategory::Employment => "Employment",
            CensusCategory::Occupation => "Occupation",
            CensusCategory::Population => "Population",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let norm = norm.replace("and", "");
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase().replace("and", "") == norm)
    }
}

impl fmt::Display for CensusCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a variable's dissemination-area values combine into a neighborhood value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Count,
    Percent,
    Median,
    Mean,
    Ratio,
    Rate,
}

impl VariableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Count => "count",
            VariableKind::Percent => "percent",
            VariableKind::Median => "median",
            VariableKind::Mean => "mean",
            VariableKind::Ratio => "ratio",
            VariableKind::Rate => "rate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" => Some(VariableKind::Count),
            "percent" => Some(VariableKind::Percent),
            "median" => Some(VariableKind::Median),
            "mean" => Some(VariableKind::Mean),
            "ratio" => Some(VariableKind::Ratio),
            "rate" => Some(VariableKind::Rate),
            _ => None,
        }
    }

    pub fn aggregation(self) -> Aggregation {
        match self {
            VariableKind::Count => Aggregation::Sum,
            VariableKind::Percent | VariableKind::Rate | VariableKind::Mean => {
                Aggregation::WeightedMean
            }
            VariableKind::Median => Aggregation::WeightedMeanOfMedians,
            VariableKind::Ratio => Aggregation::RatioOfSums,
        }
    }
}

/// Aggregation rule implied by a [`VariableKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    WeightedMean,
    /// Pooled medians are unrecoverable from area summaries; the result is
    /// flagged approximate.
    WeightedMeanOfMedians,
    /// Recomputed from the summed numerator and denominator when the catalog
    /// links them, otherwise a weighted mean.
    RatioOfSums,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusVariable {
    pub var_id: String,
    pub label: String,
    pub category: CensusCategory,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CensusProfile {
    pub neighborhood: NeighborhoodId,
    /// `None` is a missing value and is distinct from zero.
    pub values: BTreeMap<String, Option<f64>>,
    /// Variables whose aggregate is an approximation (medians).
    #[serde(default)]
    pub approximate: BTreeSet<String>,
}

impl CensusProfile {
    pub fn get(&self, var_id: &str) -> Option<f64> {
        self.values.get(var_id).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaRow {
    pub da_id: String,
    pub values: Vec<Option<f64>>,
}

/// Raw per-dissemination-area census table; `values[i]` aligns with `var_ids[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DaTable {
    pub var_ids: Vec<String>,
    pub rows: Vec<DaRow>,
}

impl DaTable {
    pub fn column(&self, var_id: &str) -> Option<usize> {
        self.var_ids.iter().position(|v| v == var_id)
    }
}

/// The shipped census variable catalog.
pub fn default_catalog() -> Vec<CensusVariable> {
    read_catalog(include_bytes!("../../data/census_catalog.csv")).expect("shipped catalog is valid")
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<CensusVariable>, DomainError> {
    read_catalog(&read_file(path.as_ref())?)
}

pub fn read_catalog(bytes: &[u8]) -> Result<Vec<CensusVariable>, DomainError> {
    let mut rdr = reader(bytes);
    let cols = Columns::new(rdr.headers()?);
    cols.require(&["var_id", "label", "category", "kind"])?;
    let linked = cols.has("numerator") && cols.has("denominator");

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let var_id = cols.nonempty(&rec, row, "var_id")?.to_string();
        if !seen.insert(var_id.clone()) {
            return Err(DomainError::DuplicateVariable(var_id));
        }
        let bad = |field: &str, value: &str| DomainError::Parse {
            row,
            field: field.to_string(),
            value: value.to_string(),
        };
        let cat_raw = cols.get(&rec, "category");
        let kind_raw = cols.get(&rec, "kind");
        let opt = |name: &str| {
            let v = cols.get(&rec, name);
            (linked && !v.is_empty()).then(|| v.to_string())
        };
        out.push(CensusVariable {
            label: cols.nonempty(&rec, row, "label")?.to_string(),
            category: CensusCategory::parse(cat_raw).ok_or_else(|| bad("category", cat_raw))?,
            kind: VariableKind::parse(kind_raw).ok_or_else(|| bad("kind", kind_raw))?,
            numerator: opt("numerator"),
            denominator: opt("denominator"),
            var_id,
        });
    }
    for v in &out {
        for link in [&v.numerator, &v.denominator].into_iter().flatten() {
            if !seen.contains(link) {
                return Err(DomainError::UnknownVariable(link.clone()));
            }
        }
    }
    Ok(out)
}

/// Loads the catalog and the per-DA table, checking every data column
/// against the catalog.
pub fn load_census(
    path: impl AsRef<Path>,
    catalog: impl AsRef<Path>,
) -> Result<(Vec<CensusVariable>, DaTable), DomainError> {
    let catalog = load_catalog(catalog)?;
    let table = read_census_table(&read_file(path.as_ref())?, &catalog)?;
    Ok((catalog, table))
}

pub fn read_census_table(
    bytes: &[u8],
    catalog: &[CensusVariable],
) -> Result<DaTable, DomainError> {
    let mut rdr = reader(bytes);
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(&headers);
    cols.require(&["da_id"])?;
    let known: BTreeSet<&str> = catalog.iter().map(|v| v.var_id.as_str()).collect();

    let mut var_ids = Vec::new();
    let mut positions = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == "da_id" {
            continue;
        }
        if !known.contains(h) {
            return Err(DomainError::UnknownVariable(h.to_string()));
        }
        var_ids.push(h.to_string());
        positions.push(i);
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let da_id = cols.nonempty(&rec, row, "da_id")?.to_string();
        let mut values = Vec::with_capacity(positions.len());
        for (&p, var_id) in positions.iter().zip(&var_ids) {
            let raw = rec.get(p).unwrap_or("").trim();
            if raw.is_empty() {
                values.push(None);
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(DomainError::KindMismatch {
                        row,
                        var_id: var_id.clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        rows.push(DaRow { da_id, values });
    }
    Ok(DaTable { var_ids, rows })
}

pub fn write_census_table<W: Write>(table: &DaTable, out: W) -> Result<(), DomainError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["da_id".to_string()];
    header.extend(table.var_ids.iter().cloned());
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.da_id.clone()];
        rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_catalog<W: Write>(catalog: &[CensusVariable], out: W) -> Result<(), DomainError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["var_id", "label", "category", "kind", "numerator", "denominator"])?;
    for v in catalog {
        w.write_record([
            v.var_id.as_str(),
            v.label.as_str(),
            v.category.as_str(),
            v.kind.as_str(),
            v.numerator.as_deref().unwrap_or(""),
            v.denominator.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_catalog_has_147_variables() {
        let cat = read_catalog(include_bytes!("../../data/census_catalog.csv")).unwrap();
        assert_eq!(cat.len(), 147);
        let per_cat = |c| cat.iter().filter(|v| v.category == c).count();
        assert_eq!(per_cat(CensusCategory::Geography), 5);
        assert_eq!(per_cat(CensusCategory::LanguageImmigration), 30);
        assert_eq!(per_cat(CensusCategory::Population), 26);
        let inc = cat
            .iter()
            .find(|v| v.var_id == "total_income_of_households_in_2015_median")
            .unwrap();
        assert_eq!(inc.kind, VariableKind::Median);
        let dens = cat.iter().find(|v| v.var_id == "population_density_per_sq_km").unwrap();
        assert_eq!(dens.numerator.as_deref(), Some("population"));
    }

    fn small_catalog() -> Vec<CensusVariable> {
        read_catalog(b"var_id,label,category,kind\npopulation,Population,Geography,count\nincome,Income,Income,median\n").unwrap()
    }

    #[test]
    fn empty_cell_is_missing_not_zero() {
        let t = read_census_table(b"da_id,population,income\nd1,100,\nd2,0,5\n", &small_catalog()).unwrap();
        assert_eq!(t.rows[0].values, vec![Some(100.0), None]);
        assert_eq!(t.rows[1].values, vec![Some(0.0), Some(5.0)]);
    }

    #[test]
    fn unknown_column_is_named() {
        let err = read_census_table(b"da_id,population,mystery\nd1,1,2\n", &small_catalog()).unwrap_err();
        assert!(matches!(err, DomainError::UnknownVariable(c) if c == "mystery"));
    }

    #[test]
    fn non_numeric_cell_is_kind_mismatch() {
        let err = read_census_table(b"da_id,population,income\nd1,abc,2\n", &small_catalog()).unwrap_err();
        assert!(matches!(err, DomainError::KindMismatch { row: 1, .. }));
    }

    #[test]
    fn catalog_round_trip() {
        let cat = read_catalog(include_bytes!("../../data/census_catalog.csv")).unwrap();
        let mut buf = Vec::new();
        write_catalog(&cat, &mut buf).unwrap();
        assert_eq!(read_catalog(&buf).unwrap(), cat);
        assert_eq!(buf.as_slice(), include_bytes!("../../data/census_catalog.csv").as_slice());
    }
}
