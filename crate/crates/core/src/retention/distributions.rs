use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ClientJourney, RetentionError};
use crate::domain::{Dataset, NeighborhoodId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    EntryAge,
    ExitAge,
    Span,
    EntryGroupGender,
    ExitGroupGender,
    SeasonEntryAgeGroup,
    NeighborhoodShare,
    ExitGroupSpan,
}

impl Facet {
    pub const ALL: [Facet; 8] = [
        Facet::EntryAge,
        Facet::ExitAge,
        Facet::Span,
        Facet::EntryGroupGender,
        Facet::ExitGroupGender,
        Facet::SeasonEntryAgeGroup,
        Facet::NeighborhoodShare,
        Facet::ExitGroupSpan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::EntryAge => "entry_age",
            Facet::ExitAge => "exit_age",
            Facet::Span => "span",
            Facet::EntryGroupGender => "entry_group_gender",
            Facet::ExitGroupGender => "exit_group_gender",
            Facet::SeasonEntryAgeGroup => "season_entry_age_group",
            Facet::NeighborhoodShare => "neighborhood_share",
            Facet::ExitGroupSpan => "exit_group_span",
        }
    }

    pub fn key_names(self) -> &'static [&'static str] {
        match self {
            Facet::EntryAge => &["entry_age"],
            Facet::ExitAge => &["exit_age"],
            Facet::Span => &["span_years"],
            Facet::EntryGroupGender => &["entry_group", "gender"],
            Facet::ExitGroupGender => &["exit_group", "gender"],
            Facet::SeasonEntryAgeGroup => &["entry_season", "entry_age", "entry_group"],
            Facet::NeighborhoodShare => &["neighborhood"],
            Facet::ExitGroupSpan => &["exit_group", "span_years"],
        }
    }

    fn key(self, j: &ClientJourney) -> Vec<Cell> {
        let int = |v: i32| Cell::Int(i64::from(v));
        let text = |s: &str| Cell::Text(s.to_string());
        match self {
            Facet::EntryAge => vec![int(j.entry_age)],
            Facet::ExitAge => vec![int(j.exit_age)],
            Facet::Span => vec![int(j.span_years)],
            Facet::EntryGroupGender => vec![text(&j.entry_group), text(j.gender.as_str())],
            Facet::ExitGroupGender => vec![text(&j.exit_group), text(j.gender.as_str())],
            Facet::SeasonEntryAgeGroup => vec![text(j.entry_season.as_str()), int(j.entry_age), text(&j.entry_group)],
            Facet::NeighborhoodShare => vec![text(j.neighborhood.as_ref().map_or("unassigned", |n| n.as_str()))],
            Facet::ExitGroupSpan => vec![text(&j.exit_group), int(j.span_years)],
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Facet {
    type Err = RetentionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Facet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| RetentionError::UnknownFacet(s.to_string()))
    }
}

/// Key component. Integers sort numerically and before text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetRow {
    pub key: Vec<Cell>,
    pub count: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetTable {
    pub facet: Facet,
    pub key_names: Vec<String>,
    pub total: u64,
    pub rows: Vec<FacetRow>,
}

impl FacetTable {
    /// Row with the largest count; ties go to the smallest key.
    pub fn mode(&self) -> Option<&FacetRow> {
        self.rows
            .iter()
            .max_by(|a, b| a.count.cmp(&b.count).then_with(|| b.key.cmp(&a.key)))
    }

    pub fn proportion_of(&self, key: &[Cell]) -> f64 {
        self.rows.iter().find(|r| r.key == key).map_or(0.0, |r| r.proportion)
    }
}

/// Counts and proportions of journeys over one facet, rows sorted by key.
pub fn distributions(journeys: &[ClientJourney], facet: Facet) -> Result<FacetTable, RetentionError> {
    if journeys.is_empty() {
        return Err(RetentionError::EmptyInput);
    }
    let mut counts: BTreeMap<Vec<Cell>, u64> = BTreeMap::new();
    for j in journeys {
        *counts.entry(facet.key(j)).or_default() += 1;
    }
    let total = journeys.len() as u64;
    Ok(FacetTable {
        facet,
        key_names: facet.key_names().iter().map(|s| s.to_string()).collect(),
        total,
        rows: counts
            .into_iter()
            .map(|(key, count)| FacetRow {
                key,
                count,
                proportion: count as f64 / total as f64,
            })
            .collect(),
    })
}

/// `facet,<key columns>,count,proportion`
pub fn write_facet_csv<W: Write>(table: &FacetTable, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["facet".to_string()];
    header.extend(table.key_names.iter().cloned());
    header.extend(["count".to_string(), "proportion".to_string()]);
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![table.facet.as_str().to_string()];
        rec.extend(r.key.iter().map(|c| c.to_string()));
        rec.push(r.count.to_string());
        rec.push(r.proportion.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentRate {
    pub neighborhood: NeighborhoodId,
    pub clients: u64,
    pub n_children: u32,
    pub rate: f64,
}

/// Child counts per neighborhood from the dataset's latest wave.
pub fn populations_from_edi(dataset: &Dataset) -> BTreeMap<NeighborhoodId, u32> {
    let Some(latest) = dataset.latest_wave() else {
        return BTreeMap::new();
    };
    dataset
        .edi
        .iter()
        .filter(|r| r.wave == latest)
        .map(|r| (r.neighborhood.id.clone(), r.n_children))
        .collect()
}

/// Distinct clients whose journey touches `group`, divided by the child
/// population, for each listed neighborhood.
pub fn enrollment_rates(
    journeys: &[ClientJourney],
    group: &str,
    neighborhoods: &[NeighborhoodId],
    populations: &BTreeMap<NeighborhoodId, u32>,
) -> Result<Vec<EnrollmentRate>, RetentionError> {
    let mut clients: BTreeMap<&NeighborhoodId, u64> = BTreeMap::new();
    for j in journeys.iter().filter(|j| j.touches(group)) {
        if let Some(n) = &j.neighborhood {
            *clients.entry(n).or_default() += 1;
        }
    }
    neighborhoods
        .iter()
        .map(|n| {
            let pop = match populations.get(n) {
                Some(&p) if p > 0 => p,
                _ => return Err(RetentionError::MissingPopulation(n.clone())),
            };
            let c = clients.get(n).copied().unwrap_or(0);
            Ok(EnrollmentRate {
                neighborhood: n.clone(),
                clients: c,
                n_children: pop,
                rate: c as f64 / f64::from(pop),
            })
        })
        .collect()
}

/// `neighborhood,clients,n_children,rate`
pub fn write_enrollment_csv<W: Write>(rates: &[EnrollmentRate], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["neighborhood", "clients", "n_children", "rate"])?;
    for r in rates {
        w.write_record([
            r.neighborhood.to_string(),
            r.clients.to_string(),
            r.n_children.to_string(),
            r.rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Gender, Season};
    use crate::retention::{apply_filters, build_journeys, FilterPolicy, GroupingRules, JourneyStep};
    use crate::stats::pearson;
    use crate::synth::RegistrationFixture;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn journey(id: usize, hood: Option<&str>, group: &str, span: i32) -> ClientJourney {
        let date = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        ClientJourney {
            client_id: format!("c{id}"),
            gender: if id % 2 == 0 { Gender::Female } else { Gender::Male },
            neighborhood: hood.map(NeighborhoodId::from),
            registrations: vec![JourneyStep {
                registration_id: format!("r{id}"),
                date,
                age: 5,
                season: Season::Winter,
                group: group.to_string(),
            }],
            entry_age: 5,
            exit_age: 5 + span,
            span_years: span,
            entry_group: group.to_string(),
            exit_group: group.to_string(),
            entry_season: Season::Winter,
        }
    }

    #[test]
    fn neighborhood_share_half() {
        let js = vec![
            journey(1, Some("a"), "Aquatics", 0),
            journey(2, Some("a"), "Aquatics", 0),
            journey(3, Some("b"), "Aquatics", 0),
            journey(4, None, "Aquatics", 0),
        ];
        let t = distributions(&js, Facet::NeighborhoodShare).unwrap();
        assert_eq!(t.proportion_of(&[Cell::Text("a".into())]), 0.5);
        assert_eq!(t.proportion_of(&[Cell::Text("unassigned".into())]), 0.25);
    }

    #[test]
    fn general_activities_span_share() {
        // 10 General Activities journeys, 4 with spans of 7+ years, plus
        // other groups that must not affect the conditional table.
        let mut js: Vec<ClientJourney> = (0..10)
            .map(|i| journey(i, Some("a"), "General Activities", if i < 4 { 7 + i as i32 % 2 } else { i as i32 % 3 }))
            .collect();
        js.extend((10..17).map(|i| journey(i, Some("a"), "Aquatics", 9)));
        let ga: Vec<ClientJourney> = js.iter().filter(|j| j.exit_group == "General Activities").cloned().collect();
        let t = distributions(&ga, Facet::Span).unwrap();
        let long: f64 = t
            .rows
            .iter()
            .filter(|r| matches!(r.key[0], Cell::Int(s) if s >= 7))
            .map(|r| r.count)
            .sum::<u64>() as f64
            / t.total as f64;
        assert_eq!(long, 0.4);

        let by_group = distributions(&js, Facet::ExitGroupSpan).unwrap();
        let ga_total: u64 = by_group
            .rows
            .iter()
            .filter(|r| r.key[0] == Cell::Text("General Activities".into()))
            .map(|r| r.count)
            .sum();
        assert_eq!(ga_total, 10);
    }

    #[test]
    fn empty_and_unknown() {
        assert!(matches!(distributions(&[], Facet::ExitAge), Err(RetentionError::EmptyInput)));
        assert!("nope".parse::<Facet>().is_err());
        for f in Facet::ALL {
            assert_eq!(f.as_str().parse::<Facet>().unwrap(), f);
        }
    }

    #[test]
    fn numeric_keys_sort_numerically() {
        let js: Vec<_> = [10, 2, 9].iter().enumerate().map(|(i, &s)| journey(i, None, "Aquatics", s)).collect();
        let t = distributions(&js, Facet::Span).unwrap();
        let keys: Vec<String> = t.rows.iter().map(|r| r.key[0].to_string()).collect();
        assert_eq!(keys, ["2", "9", "10"]);
        let mut buf = Vec::new();
        write_facet_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("facet,span_years,count,proportion\nspan,2,1,0.3333333333333333\n"));
    }

    #[test]
    fn modal_exit_age_on_fixture() {
        let kept = apply_filters(&RegistrationFixture::default().generate(0), &FilterPolicy::default()).kept;
        let js = build_journeys(&kept, &GroupingRules::default());
        let mode = distributions(&js, Facet::ExitAge).unwrap();
        let Cell::Int(age) = mode.mode().unwrap().key[0] else { panic!() };
        assert!((7..=9).contains(&age), "mode {age}");
    }

    #[test]
    fn enrollment_rate_cases() {
        let mut js: Vec<ClientJourney> = (0..5).map(|i| journey(i, Some("a"), "General Activities", 0)).collect();
        js.push(journey(5, Some("a"), "Aquatics", 0));
        let pops: BTreeMap<NeighborhoodId, u32> = [("a".into(), 100), ("b".into(), 40)].into();
        let r = enrollment_rates(&js, "General Activities", &["a".into(), "b".into()], &pops).unwrap();
        assert_eq!(r[0].rate, 0.05);
        assert_eq!(r[1].rate, 0.0);
        assert!(matches!(
            enrollment_rates(&js, "General Activities", &["c".into()], &pops),
            Err(RetentionError::MissingPopulation(_))
        ));
    }

    // Rates shuffled independently of the EDI values: the correlation test
    // rejects at its nominal rate, and |r| has the null spread of n = 24.
    #[test]
    fn shuffled_rates_uncorrelated() {
        let (mut rejected, mut small) = (0, 0);
        for s in 0..1000 {
            let mut rng = crate::seed::rng(s);
            let edi: Vec<f64> = (0..24).map(|_| rng.random_range(5.0..35.0)).collect();
            let mut rates: Vec<f64> = (0..24).map(|i| i as f64 / 400.0).collect();
            rates.shuffle(&mut rng);
            let (r, p) = pearson(&edi, &rates).unwrap();
            rejected += usize::from(p < 0.05);
            small += usize::from(r.abs() < 0.2);
        }
        assert!((30..=70).contains(&rejected), "{rejected}");
        // P(|r| < 0.2) under the exact null at n = 24 is about 0.65.
        assert!((600..=700).contains(&small), "{small}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn proportions_sum_and_counts_conserved(seed in 0u64..1000) {
            let kept = apply_filters(&RegistrationFixture { records: 200 }.generate(seed), &FilterPolicy::default()).kept;
            let js = build_journeys(&kept, &GroupingRules::default());
            for f in Facet::ALL {
                let t = distributions(&js, f).unwrap();
                let s: f64 = t.rows.iter().map(|r| r.proportion).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert_eq!(t.rows.iter().map(|r| r.count).sum::<u64>(), js.len() as u64);
            }
        }
    }
}
