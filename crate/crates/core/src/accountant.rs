//! Privacy-loss accounting under basic composition.
//!
//! A [`QueryPlan`] is a tree of labelled queries. Sequential nodes add their
//! children's losses; parallel nodes, whose children run over disjoint data,
//! cost only the largest child. Disjointness cannot be checked against data:
//! parallel nodes only require that sibling subtrees use distinct labels.
//!
//! Plans have a compact text form used in the ledger journal and on the
//! command line:
//!
//! ```text
//! SEQ(PAR(L:0.1, H:0.1), PAR(M:0.1, O:0.1))
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::epsilon::Epsilon;
use crate::error::{Error, Result};

const MAX_PLAN_DEPTH: usize = 64;

/// Sum of the losses of queries run one after another on the same data.
pub fn sequential_compose(epsilons: &[Epsilon]) -> Result<Epsilon> {
    if epsilons.is_empty() {
        return Err(Error::EmptyComposition);
    }
    epsilons.iter().try_fold(Epsilon::ZERO, |acc, &e| {
        acc.checked_add(e)
            .ok_or_else(|| Error::invalid("privacy loss overflow"))
    })
}

/// Worst loss among queries run on pairwise-disjoint partitions.
pub fn parallel_compose(epsilons: &[Epsilon]) -> Result<Epsilon> {
    epsilons
        .iter()
        .copied()
        .max()
        .ok_or(Error::EmptyComposition)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryPlan {
    Query { label: String, epsilon: Epsilon },
    Sequential(Vec<QueryPlan>),
    Parallel(Vec<QueryPlan>),
}

impl QueryPlan {
    pub fn query(label: impl Into<String>, epsilon: Epsilon) -> Self {
        QueryPlan::Query {
            label: label.into(),
            epsilon,
        }
    }

    /// The four-count release: `SEQ(PAR(L, H), PAR(M, O))`. The speed-tier
    /// counts split one device population, the service counts split another.
    pub fn coverage_release(per_query: Epsilon) -> Self {
        QueryPlan::Sequential(vec![
            QueryPlan::Parallel(vec![
                QueryPlan::query("L", per_query),
                QueryPlan::query("H", per_query),
            ]),
            QueryPlan::Parallel(vec![
                QueryPlan::query("M", per_query),
                QueryPlan::query("O", per_query),
            ]),
        ])
    }

    /// Checks the structural invariants: positive leaves, non-empty nodes,
    /// valid labels and distinct labels across parallel siblings.
    pub fn validate(&self) -> Result<()> {
        self.labels_checked().map(|_| ())
    }

    fn labels_checked(&self) -> Result<BTreeSet<&str>> {
        match self {
            QueryPlan::Query { label, epsilon } => {
                if !is_valid_label(label) {
                    return Err(Error::MalformedPlan(format!("invalid query label {label:?}")));
                }
                if epsilon.is_zero() {
                    return Err(Error::MalformedPlan(format!(
                        "query {label} has zero privacy loss"
                    )));
                }
                Ok(BTreeSet::from([label.as_str()]))
            }
            QueryPlan::Sequential(children) => {
                if children.is_empty() {
                    return Err(Error::MalformedPlan("empty SEQ node".into()));
                }
                let mut all = BTreeSet::new();
                for c in children {
                    all.extend(c.labels_checked()?);
                }
                Ok(all)
            }
            QueryPlan::Parallel(children) => {
                if children.is_empty() {
                    return Err(Error::MalformedPlan("empty PAR node".into()));
                }
                let mut all = BTreeSet::new();
                for c in children {
                    for label in c.labels_checked()? {
                        if !all.insert(label) {
                            return Err(Error::MalformedPlan(format!(
                                "query {label} appears in more than one branch of a PAR node"
                            )));
                        }
                    }
                }
                Ok(all)
            }
        }
    }

    /// Total loss: leaves fold to their own loss, SEQ sums, PAR takes the max.
    pub fn total_epsilon(&self) -> Result<Epsilon> {
        self.validate()?;
        self.fold()
    }

    fn fold(&self) -> Result<Epsilon> {
        match self {
            QueryPlan::Query { epsilon, .. } => Ok(*epsilon),
            QueryPlan::Sequential(children) => {
                let parts = children.iter().map(Self::fold).collect::<Result<Vec<_>>>()?;
                sequential_compose(&parts)
            }
            QueryPlan::Parallel(children) => {
                let parts = children.iter().map(Self::fold).collect::<Result<Vec<_>>>()?;
                parallel_compose(&parts)
            }
        }
    }
}

fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tag, children) = match self {
            QueryPlan::Query { label, epsilon } => return write!(f, "{label}:{epsilon}"),
            QueryPlan::Sequential(c) => ("SEQ", c),
            QueryPlan::Parallel(c) => ("PAR", c),
        };
        write!(f, "{tag}(")?;
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for QueryPlan {
    type Err = Error;

    /// Parses and validates a plan expression.
    fn from_str(s: &str) -> Result<Self> {
        let mut parser = PlanParser { src: s, pos: 0 };
        let plan = parser.node(0)?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.error("trailing input"));
        }
        plan.validate()?;
        Ok(plan)
    }
}

struct PlanParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> PlanParser<'a> {
    fn error(&self, what: &str) -> Error {
        Error::MalformedPlan(format!("{what} at offset {}", self.pos))
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.as_bytes().get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self, accept: impl Fn(u8) -> bool) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && accept(bytes[self.pos]) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn node(&mut self, depth: usize) -> Result<QueryPlan> {
        if depth > MAX_PLAN_DEPTH {
            return Err(self.error("plan nested too deeply"));
        }
        let ident = self
            .word(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
            .to_owned();
        if ident.is_empty() {
            return Err(self.error("expected a query label or SEQ/PAR"));
        }
        if self.eat(b':') {
            let value = self.word(|b| b.is_ascii_digit() || b == b'.');
            let epsilon = value
                .parse::<Epsilon>()
                .map_err(|e| Error::MalformedPlan(format!("query {ident}: {e}")))?;
            return Ok(QueryPlan::Query {
                label: ident,
                epsilon,
            });
        }
        let make: fn(Vec<QueryPlan>) -> QueryPlan = match ident.as_str() {
            "SEQ" => QueryPlan::Sequential,
            "PAR" => QueryPlan::Parallel,
            _ => return Err(self.error("expected ':' after query label")),
        };
        if !self.eat(b'(') {
            return Err(self.error("expected '('"));
        }
        let mut children = vec![self.node(depth + 1)?];
        while self.eat(b',') {
            children.push(self.node(depth + 1)?);
        }
        if !self.eat(b')') {
            return Err(self.error("expected ',' or ')'"));
        }
        Ok(make(children))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub timestamp: DateTime<Utc>,
    pub description: String,
    pub epsilon: Epsilon,
}

impl LedgerEntry {
    /// Journal line without the trailing newline.
    pub fn to_journal_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            self.description,
            self.epsilon
        )
    }

    /// Parses a journal line. The description must be a plan whose total
    /// matches the recorded loss.
    pub fn parse_journal_line(line: &str, line_no: u64) -> Result<Self> {
        let mut fields = line.split('\t');
        let (Some(ts), Some(desc), Some(eps), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(line_no, "expected 3 tab-separated fields"));
        };
        let timestamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| Error::parse(line_no, format!("bad timestamp {ts:?}: {e}")))?
            .with_timezone(&Utc);
        let epsilon: Epsilon = eps
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        let plan: QueryPlan = desc
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        let total = plan.total_epsilon()?;
        if total != epsilon {
            return Err(Error::parse(
                line_no,
                format!("plan totals {total} but entry records {epsilon}"),
            ));
        }
        Ok(LedgerEntry {
            timestamp,
            description: desc.to_owned(),
            epsilon,
        })
    }
}

/// Reads every entry of a journal. Blank lines are ignored.
pub fn read_journal<R: BufRead>(reader: R) -> Result<Vec<LedgerEntry>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        entries.push(LedgerEntry::parse_journal_line(line, i as u64 + 1)?);
    }
    Ok(entries)
}

/// Single-writer budget ledger. Callers serialize concurrent charges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetLedger {
    budget: Epsilon,
    spent: Epsilon,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(budget: Epsilon) -> Result<Self> {
        if budget.is_zero() {
            return Err(Error::invalid("budget must be positive"));
        }
        Ok(BudgetLedger {
            budget,
            spent: Epsilon::ZERO,
            entries: Vec::new(),
        })
    }

    /// Rebuilds a ledger from journal entries; fails if they overspend.
    pub fn from_entries(budget: Epsilon, entries: Vec<LedgerEntry>) -> Result<Self> {
        let mut ledger = Self::new(budget)?;
        for entry in entries {
            ledger.admit(entry)?;
        }
        Ok(ledger)
    }

    pub fn open<P: AsRef<Path>>(path: P, budget: Epsilon) -> Result<Self> {
        let entries = match std::fs::File::open(path) {
            Ok(f) => read_journal(std::io::BufReader::new(f))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Self::from_entries(budget, entries)
    }

    pub fn budget(&self) -> Epsilon {
        self.budget
    }

    pub fn spent(&self) -> Epsilon {
        self.spent
    }

    pub fn remaining(&self) -> Epsilon {
        self.budget.checked_sub(self.spent).unwrap_or(Epsilon::ZERO)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Charges a plan. A rejected charge leaves the ledger untouched.
    pub fn charge(&mut self, plan: &QueryPlan, timestamp: DateTime<Utc>) -> Result<&LedgerEntry> {
        let epsilon = plan.total_epsilon()?;
        self.admit(LedgerEntry {
            timestamp,
            description: plan.to_string(),
            epsilon,
        })?;
        Ok(self.entries.last().expect("entry just pushed"))
    }

    fn admit(&mut self, entry: LedgerEntry) -> Result<()> {
        let exceeded = || Error::BudgetExceeded {
            requested: entry.epsilon,
            remaining: self.remaining(),
        };
        let spent = self.spent.checked_add(entry.epsilon).ok_or_else(exceeded)?;
        if spent > self.budget {
            return Err(exceeded());
        }
        self.spent = spent;
        self.entries.push(entry);
        Ok(())
    }
}

/// Appends one entry to a journal file, creating it if needed.
pub fn append_journal_entry<P: AsRef<Path>>(path: P, entry: &LedgerEntry) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(f, "{}", entry.to_journal_line())?;
    f.sync_data()?;
    Ok(())
}
