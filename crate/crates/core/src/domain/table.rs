use std::collections::HashMap;

use csv::StringRecord;

use super::DomainError;

/// Column lookup over a CSV header.
pub(crate) struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    pub(crate) fn new(headers: &StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        Columns { index }
    }

    pub(crate) fn require(&self, names: &[&str]) -> Result<(), DomainError> {
        match names.iter().find(|n| !self.index.contains_key(**n)) {
            Some(n) => Err(DomainError::MissingColumn((*n).to_string())),
            None => Ok(()),
        }
    }

    pub(crate) fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub(crate) fn get<'r>(&self, rec: &'r StringRecord, name: &str) -> &'r str {
        self.index
            .get(name)
            .and_then(|&i| rec.get(i))
            .map(str::trim)
            .unwrap_or("")
    }

    pub(crate) fn f64(&self, rec: &StringRecord, row: usize, name: &str) -> Result<f64, DomainError> {
        let raw = self.get(rec, name);
        raw.parse::<f64>().map_err(|_| DomainError::Parse {
            row,
            field: name.to_string(),
            value: raw.to_string(),
        })
    }

    pub(crate) fn int(&self, rec: &StringRecord, row: usize, name: &str) -> Result<i64, DomainError> {
        let raw = self.get(rec, name);
        raw.parse::<i64>().map_err(|_| DomainError::Parse {
            row,
            field: name.to_string(),
            value: raw.to_string(),
        })
    }

    pub(crate) fn nonempty<'r>(
        &self,
        rec: &'r StringRecord,
        row: usize,
        name: &str,
    ) -> Result<&'r str, DomainError> {
        let v = self.get(rec, name);
        if v.is_empty() {
            Err(DomainError::EmptyField {
                row,
                field: name.to_string(),
            })
        } else {
            Ok(v)
        }
    }
}

pub(crate) fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(bytes)
}
