use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::RetentionError;

pub const DEFAULT_GROUP: &str = "General Activities";

/// The shipped rules file. It is a reconstruction and meant to be replaced.
pub const DEFAULT_RULES_CSV: &str = include_str!("../../data/program_groups.csv");

const GROUP_COUNT: usize = 8;

/// `pattern` is matched case-insensitively against "title subtitle". A
/// pattern with `+` is a token set: every part must occur.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRule {
    pub pattern: String,
    pub group: String,
}

impl GroupRule {
    fn matches(&self, text: &str) -> bool {
        self.pattern
            .split('+')
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .all(|t| text.contains(&t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingRules {
    pub rules: Vec<GroupRule>,
    pub default_group: String,
}

impl Default for GroupingRules {
    fn default() -> Self {
        GroupingRules::from_csv(DEFAULT_RULES_CSV.as_bytes()).expect("shipped rules are valid")
    }
}

impl GroupingRules {
    /// Reads a `pattern,group` CSV.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, RetentionError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["pattern", "group"] {
            return Err(RetentionError::InvalidRules("header must be `pattern,group`".into()));
        }
        let mut rules = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let (pattern, group) = (&rec[0], &rec[1]);
            if pattern.is_empty() || group.is_empty() {
                return Err(RetentionError::InvalidRules(format!("row {} has an empty field", i + 1)));
            }
            rules.push(GroupRule {
                pattern: pattern.to_string(),
                group: group.to_string(),
            });
        }
        let r = GroupingRules {
            rules,
            default_group: DEFAULT_GROUP.to_string(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RetentionError> {
        let n = self.groups().len();
        if n != GROUP_COUNT {
            return Err(RetentionError::InvalidRules(format!(
                "expected {GROUP_COUNT} distinct groups including the default, found {n}"
            )));
        }
        Ok(())
    }

    /// Every group name reachable, including the default.
    pub fn groups(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .map(|r| r.group.as_str())
            .chain(std::iter::once(self.default_group.as_str()))
            .collect()
    }

    /// First matching rule's group, else the default group.
    pub fn classify(&self, title: &str, subtitle: &str) -> &str {
        let text = format!("{title} {subtitle}").to_lowercase();
        self.rules
            .iter()
            .find(|r| r.matches(&text))
            .map(|r| r.group.as_str())
            .unwrap_or(&self.default_group)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["pattern", "group"])?;
        for r in &self.rules {
            w.write_record([&r.pattern, &r.group])?;
        }
        w.flush()?;
        Ok(())
    }
}
