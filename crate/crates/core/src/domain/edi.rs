use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use super::table::{reader, Columns};
use super::{fmt_f64, read_file, DomainError, EdiRecord, Neighborhood, NeighborhoodId, Wave};

pub const EDI_HEADER: [&str; 11] = [
    "neighborhood_id",
    "neighborhood_name",
    "wave",
    "n_children",
    "physical",
    "social",
    "emotional",
    "language_cognitive",
    "communication",
    "one_or_more",
    "two_or_more",
];

pub fn load_edi(path: impl AsRef<Path>) -> Result<Vec<EdiRecord>, DomainError> {
    read_edi(&read_file(path.as_ref())?)
}

pub fn read_edi(bytes: &[u8]) -> Result<Vec<EdiRecord>, DomainError> {
    let mut rdr = reader(bytes);
    let cols = Columns::new(rdr.headers()?);
    cols.require(&EDI_HEADER)?;

    let mut out = Vec::new();
    let mut keys = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let id = cols.nonempty(&rec, row, "neighborhood_id")?;
        let name = cols.nonempty(&rec, row, "neighborhood_name")?;
        let wave_raw = cols.int(&rec, row, "wave")?;
        if wave_raw == 1 {
            return Err(DomainError::BaselineWave { row });
        }
        let wave = Wave::new(wave_raw).map_err(|_| DomainError::RangeViolation {
            row,
            field: "wave".into(),
        })?;
        let n_children = cols.int(&rec, row, "n_children")?;
        if n_children < 0 || n_children > u32::MAX as i64 {
            return Err(DomainError::RangeViolation {
                row,
                field: "n_children".into(),
            });
        }
        let r = EdiRecord {
            neighborhood: Neighborhood {
                id: NeighborhoodId::new(id),
                name: name.to_string(),
            },
            wave,
            n_children: n_children as u32,
            physical: cols.f64(&rec, row, "physical")?,
            social: cols.f64(&rec, row, "social")?,
            emotional: cols.f64(&rec, row, "emotional")?,
            language_cognitive: cols.f64(&rec, row, "language_cognitive")?,
            communication: cols.f64(&rec, row, "communication")?,
            one_or_more: cols.f64(&rec, row, "one_or_more")?,
            two_or_more: cols.f64(&rec, row, "two_or_more")?,
        };
        if let Err(field) = r.check() {
            return Err(DomainError::RangeViolation {
                row,
                field: field.to_string(),
            });
        }
        if !keys.insert((r.neighborhood.id.clone(), r.wave)) {
            return Err(DomainError::DuplicateKey {
                neighborhood: r.neighborhood.id.0.clone(),
                wave: r.wave.index(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_edi<W: Write>(records: &[EdiRecord], out: W) -> Result<(), DomainError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(EDI_HEADER)?;
    for r in records {
        w.write_record([
            r.neighborhood.id.0.clone(),
            r.neighborhood.name.clone(),
            r.wave.to_string(),
            r.n_children.to_string(),
            fmt_f64(r.physical),
            fmt_f64(r.social),
            fmt_f64(r.emotional),
            fmt_f64(r.language_cognitive),
            fmt_f64(r.communication),
            fmt_f64(r.one_or_more),
            fmt_f64(r.two_or_more),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
