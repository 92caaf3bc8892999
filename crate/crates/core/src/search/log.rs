use std::fmt;

use crate::error::{Error, Result};
use crate::space::{decode, ArchDescription};

/// One episode of a search.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub episode: usize,
    pub arch: ArchDescription,
    pub raw_reward: f64,
    pub shaped_reward: f64,
    pub baseline: f64,
    pub wall_ms: f64,
}

impl LogRecord {
    /// Tab-separated: episode, arch, raw, shaped, baseline, wall ms.
    /// Wall time is last so it can be cut off when comparing runs.
    pub fn to_line(&self) -> String {
        format!("{}\t{}", self.line_without_timing(), self.wall_ms)
    }

    pub fn line_without_timing(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.episode, self.arch, self.raw_reward, self.shaped_reward, self.baseline)
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::Ingestion { line: line_no, detail: format!("expected 6 tab-separated fields, found {}", f.len()) });
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            f[i].parse().map_err(|_| Error::Ingestion { line: line_no, detail: format!("field `{name}`: bad number `{}`", f[i]) })
        };
        Ok(LogRecord {
            episode: f[0].parse().map_err(|_| Error::Ingestion { line: line_no, detail: format!("field `episode`: bad index `{}`", f[0]) })?,
            arch: decode(f[1]).map_err(|e| Error::Ingestion { line: line_no, detail: e.to_string() })?,
            raw_reward: num(2, "raw")?,
            shaped_reward: num(3, "shaped")?,
            baseline: num(4, "baseline")?,
            wall_ms: num(5, "wall_ms")?,
        })
    }
}

/// Episode records in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchLog {
    pub records: Vec<LogRecord>,
}

impl SearchLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| LogRecord::parse(l, i + 1))
            .collect::<Result<_>>()?;
        Ok(SearchLog { records })
    }

    /// The log with the wall-time column removed, for reproducibility checks.
    pub fn without_timing(&self) -> String {
        self.records.iter().map(|r| r.line_without_timing() + "\n").collect()
    }

    /// Best raw reward seen up to and including each episode.
    pub fn cumulative_best(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.raw_reward);
                best
            })
            .collect()
    }

    /// Number of episodes so far whose raw reward is strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> Vec<usize> {
        let mut n = 0;
        self.records
            .iter()
            .map(|r| {
                n += usize::from(r.raw_reward > threshold);
                n
            })
            .collect()
    }
}

impl fmt::Display for SearchLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{}", r.to_line())?;
        }
        Ok(())
    }
}

/// The `k` highest raw-reward episodes, best first; ties keep log order.
pub fn top_k_report(log: &SearchLog, k: usize) -> Result<Vec<(ArchDescription, f64)>> {
    if k == 0 {
        return Err(Error::Parameter("top-k needs k >= 1".into()));
    }
    let mut idx: Vec<usize> = (0..log.len()).collect();
    idx.sort_by(|&a, &b| log.records[b].raw_reward.total_cmp(&log.records[a].raw_reward));
    Ok(idx.into_iter().take(k).map(|i| (log.records[i].arch.clone(), log.records[i].raw_reward)).collect())
}
