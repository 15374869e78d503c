//! Prompt log, rule-based categorization and distribution reports.

use std::fmt::{self, Write as _};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    ShiftUp,
    StructuredVibe,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Paradigm::ShiftUp, Paradigm::StructuredVibe];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::ShiftUp => "shift_up",
            Paradigm::StructuredVibe => "structured_vibe",
        }
    }

    /// The closed category set, in reporting order.
    pub fn categories(self) -> &'static [PromptCategory] {
        use PromptCategory::*;
        match self {
            Paradigm::ShiftUp => &[
                ProceedNextStep,
                ExecuteAcceptanceTests,
                DeveloperIdentifiedFix,
                AcceptAgentSolution,
                InitiateNextPlanStep,
            ],
            Paradigm::StructuredVibe => &[
                ManualIssueFix,
                ProceedNextStep,
                FeaturePlanning,
                NewFeatureImplementation,
                Other,
            ],
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown paradigm `{0}` (expected shift_up or structured_vibe)")]
pub struct UnknownParadigm(pub String);

impl FromStr for Paradigm {
    type Err = UnknownParadigm;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownParadigm(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptCategory {
    ProceedNextStep,
    ExecuteAcceptanceTests,
    DeveloperIdentifiedFix,
    AcceptAgentSolution,
    InitiateNextPlanStep,
    ManualIssueFix,
    FeaturePlanning,
    NewFeatureImplementation,
    Other,
}

impl PromptCategory {
    pub fn as_str(self) -> &'static str {
        use PromptCategory::*;
        match self {
            ProceedNextStep => "proceed_next_step",
            ExecuteAcceptanceTests => "execute_acceptance_tests",
            DeveloperIdentifiedFix => "developer_identified_fix",
            AcceptAgentSolution => "accept_agent_solution",
            InitiateNextPlanStep => "initiate_next_plan_step",
            ManualIssueFix => "manual_issue_fix",
            FeaturePlanning => "feature_planning",
            NewFeatureImplementation => "new_feature_implementation",
            Other => "other",
        }
    }

    pub fn allowed_in(self, paradigm: Paradigm) -> bool {
        paradigm.categories().contains(&self)
    }
}

impl fmt::Display for PromptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub ts: DateTime<Utc>,
    pub paradigm: Paradigm,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<PromptCategory>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt text is empty")]
    EmptyText,
    #[error("label `{label}` does not belong to paradigm `{paradigm}`")]
    ForeignLabel { label: PromptCategory, paradigm: Paradigm },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

impl PromptRecord {
    pub fn check(&self) -> Result<(), PromptError> {
        if self.text.trim().is_empty() {
            return Err(PromptError::EmptyText);
        }
        match self.label {
            Some(label) if !label.allowed_in(self.paradigm) => Err(PromptError::ForeignLabel {
                label,
                paradigm: self.paradigm,
            }),
            _ => Ok(()),
        }
    }
}

/// Append one record as a JSON line. Earlier lines are never rewritten.
pub fn record_prompt(log: &Path, record: &PromptRecord) -> Result<(), PromptError> {
    record.check()?;
    let io = |source| PromptError::Io {
        path: log.to_path_buf(),
        source,
    };
    if let Some(parent) = log.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let value = serde_json::to_value(record).expect("records serialize");
    let mut line = value.to_string();
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(log)
        .and_then(|mut f| f.write_all(line.as_bytes()))
        .map_err(io)
}

/// Parse a JSON-lines prompt log. Blank lines are skipped.
pub fn parse_prompt_log(text: &str) -> Result<Vec<PromptRecord>, PromptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PromptRecord = serde_json::from_str(line).map_err(|e| PromptError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.check().map_err(|e| PromptError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_prompt_log(log: &Path) -> Result<Vec<PromptRecord>, PromptError> {
    match fs::read_to_string(log) {
        Ok(text) => parse_prompt_log(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(source) => Err(PromptError::Io {
            path: log.to_path_buf(),
            source,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pattern: Regex,
    category: PromptCategory,
}

impl Rule {
    /// Case-insensitive rule.
    pub fn new(pattern: &str, category: PromptCategory) -> Result<Self, regex::Error> {
        Ok(Rule {
            pattern: RegexBuilder::new(pattern).case_insensitive(true).build()?,
            category,
        })
    }
}

/// Ordered rules; the first rule whose category fits the record's paradigm
/// and whose pattern matches decides.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleTable { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        use PromptCategory::*;
        let fix = r"\bfix(es|ed|ing)?\b|\bbroken\b|\bbug\b|\berror\b";
        let table = [
            (r"\bacceptance tests?\b", ExecuteAcceptanceTests),
            (r"\baccept\b.*\b(solution|approach|suggestion|proposal)\b", AcceptAgentSolution),
            (r"\bimplementation plan\b|\bplan\b.*\bissue\b", InitiateNextPlanStep),
            (r"\bplan(ning)?\b", FeaturePlanning),
            (fix, DeveloperIdentifiedFix),
            (fix, ManualIssueFix),
            (r"^\s*(go ahead|proceed|continue|next step)\b", ProceedNextStep),
            (r"\bimplement\b|\badd (a|an|the)\b.*\bfeature\b", NewFeatureImplementation),
        ];
        RuleTable::new(
            table
                .into_iter()
                .map(|(p, c)| Rule::new(p, c).expect("default rules compile"))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Categorized {
    Category(PromptCategory),
    /// A shift_up prompt no rule matched; never silently bucketed.
    Uncategorized,
}

pub fn categorize(record: &PromptRecord, rules: &RuleTable) -> Categorized {
    if let Some(label) = record.label {
        return Categorized::Category(label);
    }
    rules
        .rules
        .iter()
        .find(|r| r.category.allowed_in(record.paradigm) && r.pattern.is_match(&record.text))
        .map(|r| Categorized::Category(r.category))
        .unwrap_or(match record.paradigm {
            Paradigm::StructuredVibe => Categorized::Category(PromptCategory::Other),
            Paradigm::ShiftUp => Categorized::Uncategorized,
        })
}

/// `100 * count / total` rounded half to even, computed exactly.
pub fn rounded_percent(count: u64, total: u64) -> u64 {
    assert!(total > 0, "percent of an empty total");
    let (q, r) = ((100 * count) / total, (100 * count) % total);
    match (2 * r).cmp(&total) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionRow {
    pub category: PromptCategory,
    pub count: u64,
    pub percent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionReport {
    pub paradigm: Paradigm,
    pub total: u64,
    pub rows: Vec<DistributionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} uncategorized {paradigm} prompts", .texts.len())]
pub struct UncategorizedPrompts {
    pub paradigm: Paradigm,
    /// 1-based position among the paradigm's records, and the text.
    pub texts: Vec<(usize, String)>,
}

pub fn distribution_report(
    records: &[PromptRecord],
    paradigm: Paradigm,
    rules: &RuleTable,
) -> Result<DistributionReport, UncategorizedPrompts> {
    let mut counts = vec![0u64; paradigm.categories().len()];
    let mut uncategorized = Vec::new();
    for (i, rec) in records.iter().filter(|r| r.paradigm == paradigm).enumerate() {
        match categorize(rec, rules) {
            Categorized::Category(c) => {
                let slot = paradigm
                    .categories()
                    .iter()
                    .position(|x| *x == c)
                    .expect("categories are checked against the paradigm");
                counts[slot] += 1;
            }
            Categorized::Uncategorized => uncategorized.push((i + 1, rec.text.clone())),
        }
    }
    if !uncategorized.is_empty() {
        return Err(UncategorizedPrompts {
            paradigm,
            texts: uncategorized,
        });
    }
    let total: u64 = counts.iter().sum();
    let rows = if total == 0 {
        Vec::new()
    } else {
        paradigm
            .categories()
            .iter()
            .zip(counts)
            .map(|(&category, count)| DistributionRow {
                category,
                count,
                percent: rounded_percent(count, total),
            })
            .collect()
    };
    Ok(DistributionReport { paradigm, total, rows })
}

impl DistributionReport {
    pub fn percents(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.percent).collect()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.count).collect()
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.category.as_str().len())
            .chain(["category".len()])
            .max()
            .unwrap_or(8);
        let mut out = format!("{} ({} prompts)\n", self.paradigm, self.total);
        let _ = writeln!(out, "{:<width$}  {:>5}  {:>7}", "category", "count", "percent");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>5}  {:>6}%", r.category.as_str(), r.count, r.percent);
        }
        out
    }
}
