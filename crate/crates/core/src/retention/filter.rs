use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::RegistrationRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub min_account_created: NaiveDate,
    pub min_birth_date: NaiveDate,
    pub require_completed: bool,
    /// Offerings must allow strictly more registrants than this.
    pub min_max_registrants_exclusive: u32,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        let y2k = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        FilterPolicy {
            min_account_created: y2k,
            min_birth_date: y2k,
            require_completed: true,
            min_max_registrants_exclusive: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    AccountCreated,
    BirthDate,
    MaxRegistrants,
    NotCompleted,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AccountCreated => "account_created",
            RejectReason::BirthDate => "birth_date",
            RejectReason::MaxRegistrants => "max_registrants",
            RejectReason::NotCompleted => "not_completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub record: RegistrationRecord,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<RegistrationRecord>,
    pub rejected: Vec<Rejection>,
}

fn first_failure(r: &RegistrationRecord, p: &FilterPolicy) -> Option<(RejectReason, String)> {
    if r.account_created < p.min_account_created {
        return Some((
            RejectReason::AccountCreated,
            format!("account created {} is before {}", r.account_created, p.min_account_created),
        ));
    }
    if r.birth_date < p.min_birth_date {
        return Some((
            RejectReason::BirthDate,
            format!("birth date {} is before {}", r.birth_date, p.min_birth_date),
        ));
    }
    if r.max_registrants <= p.min_max_registrants_exclusive {
        return Some((
            RejectReason::MaxRegistrants,
            format!(
                "max registrants {} is not greater than {}",
                r.max_registrants, p.min_max_registrants_exclusive
            ),
        ));
    }
    if p.require_completed && !r.completed {
        return Some((RejectReason::NotCompleted, "course not completed".into()));
    }
    None
}

/// Splits records into kept and rejected, labelling each rejection with the
/// first failing rule (account date, birth date, max registrants, completion).
pub fn apply_filters(records: &[RegistrationRecord], policy: &FilterPolicy) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for r in records {
        match first_failure(r, policy) {
            None => out.kept.push(r.clone()),
            Some((reason, detail)) => out.rejected.push(Rejection {
                record: r.clone(),
                reason,
                detail,
            }),
        }
    }
    out
}

/// `registration_id,client_id,reason,detail`
pub fn write_rejections_csv<W: Write>(rejected: &[Rejection], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["registration_id", "client_id", "reason", "detail"])?;
    for r in rejected {
        w.write_record([
            r.record.registration_id.as_str(),
            r.record.client_id.as_str(),
            r.reason.as_str(),
            r.detail.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
