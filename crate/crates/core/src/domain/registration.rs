use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::table::{reader, Columns};
use super::{read_file, DomainError, NeighborhoodId};

pub const REGISTRATION_HEADER: [&str; 14] = [
    "client_id",
    "birth_date",
    "gender",
    "neighborhood_id",
    "account_created",
    "registration_id",
    "course_id",
    "course_title",
    "course_subtitle",
    "season",
    "registration_date",
    "completed",
    "max_registrants",
    "subsidized",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unspecified,
}

impl Gender {
    /// Anything other than the two named values is retained as `Unspecified`.
    pub fn normalize(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Gender::Male,
            "f" | "female" => Gender::Female,
            _ => Gender::Unspecified,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Fall => "Fall",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "winter" => Some(Season::Winter),
            "spring" => Some(Season::Spring),
            "summer" => Some(Season::Summer),
            "fall" | "autumn" => Some(Season::Fall),
            _ => None,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One client's registration in one course offering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub client_id: String,
    pub birth_date: NaiveDate,
    pub gender: Gender,
    /// `None` when the source designates no neighborhood.
    pub neighborhood: Option<NeighborhoodId>,
    pub account_created: NaiveDate,
    pub registration_id: String,
    pub course_id: String,
    pub course_title: String,
    pub course_subtitle: String,
    pub season: Season,
    pub registration_date: NaiveDate,
    pub completed: bool,
    pub max_registrants: u32,
    pub subsidized: bool,
}

pub fn load_registrations(path: impl AsRef<Path>) -> Result<Vec<RegistrationRecord>, DomainError> {
    read_registrations(&read_file(path.as_ref())?)
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "yes" | "y" => Some(true),
        "false" | "f" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

pub fn read_registrations(bytes: &[u8]) -> Result<Vec<RegistrationRecord>, DomainError> {
    let mut rdr = reader(bytes);
    let cols = Columns::new(rdr.headers()?);
    cols.require(&REGISTRATION_HEADER)?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let date = |field: &str| {
            let raw = cols.get(&rec, field);
            NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| DomainError::BadDate {
                row,
                field: field.to_string(),
                value: raw.to_string(),
            })
        };
        let parse_err = |field: &str| DomainError::Parse {
            row,
            field: field.to_string(),
            value: cols.get(&rec, field).to_string(),
        };
        let birth_date = date("birth_date")?;
        let registration_date = date("registration_date")?;
        if registration_date < birth_date {
            return Err(DomainError::NegativeAge { row });
        }
        let nbhd = cols.get(&rec, "neighborhood_id");
        let max_registrants = cols.int(&rec, row, "max_registrants")?;
        if !(0..=u32::MAX as i64).contains(&max_registrants) {
            return Err(DomainError::RangeViolation {
                row,
                field: "max_registrants".into(),
            });
        }
        out.push(RegistrationRecord {
            client_id: cols.nonempty(&rec, row, "client_id")?.to_string(),
            birth_date,
            gender: Gender::normalize(cols.get(&rec, "gender")),
            neighborhood: (!nbhd.is_empty() && nbhd != "NA").then(|| NeighborhoodId::new(nbhd)),
            account_created: date("account_created")?,
            registration_id: cols.nonempty(&rec, row, "registration_id")?.to_string(),
            course_id: cols.get(&rec, "course_id").to_string(),
            course_title: cols.get(&rec, "course_title").to_string(),
            course_subtitle: cols.get(&rec, "course_subtitle").to_string(),
            season: Season::parse(cols.get(&rec, "season")).ok_or_else(|| parse_err("season"))?,
            registration_date,
            completed: parse_bool(cols.get(&rec, "completed")).ok_or_else(|| parse_err("completed"))?,
            max_registrants: max_registrants as u32,
            subsidized: parse_bool(cols.get(&rec, "subsidized")).ok_or_else(|| parse_err("subsidized"))?,
        });
    }
    Ok(out)
}

pub fn write_registrations<W: Write>(records: &[RegistrationRecord], out: W) -> Result<(), DomainError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(REGISTRATION_HEADER)?;
    for r in records {
        w.write_record([
            r.client_id.clone(),
            r.birth_date.to_string(),
            r.gender.to_string(),
            r.neighborhood.as_ref().map(|n| n.0.clone()).unwrap_or_default(),
            r.account_created.to_string(),
            r.registration_id.clone(),
            r.course_id.clone(),
            r.course_title.clone(),
            r.course_subtitle.clone(),
            r.season.to_string(),
            r.registration_date.to_string(),
            r.completed.to_string(),
            r.max_registrants.to_string(),
            r.subsidized.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
