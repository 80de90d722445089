use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPISODES_FORMAT: &str = "diplomat-episodes/1";
pub const SUMMARY_FORMAT: &str = "diplomat-summary/1";

/// Mean absolute pairwise difference over twice the mean.
pub fn gini(values: &[f64]) -> Result<f64> {
    if let Some(v) = values.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return Err(Error::Domain(format!("gini needs nonnegative values, got {v}")));
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Σ_i Σ_j |u_i − u_j| = 2 Σ_k (2k − n + 1) u_(k) for ascending order
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, u)| (2.0 * k as f64 - n + 1.0) * u)
        .sum::<f64>()
        * 2.0;
    Ok(pair_sum / (2.0 * n * total))
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: usize,
    pub seed: u64,
    pub num_agents: usize,
    pub num_issues: usize,
    pub agreement: bool,
    pub rounds: usize,
    pub utilities: Vec<f64>,
    pub objective: f64,
    /// Whether the agreed deal is Pareto-optimal; `None` on failure or when
    /// the deal space is too large to check.
    pub pareto: Option<bool>,
}

impl EpisodeRecord {
    pub fn welfare(&self) -> f64 {
        self.utilities.iter().sum::<f64>() / self.utilities.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub format: String,
    pub label: String,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub consensus_rate: f64,
    pub mean_rounds: f64,
    pub social_welfare: f64,
    pub gini: f64,
    pub pareto_rate: Option<f64>,
    pub mean_objective: f64,
    pub std_objective: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn summarize(label: &str, records: &[EpisodeRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::Contract("no episodes to summarize".into()));
    }
    let n = records.len() as f64;
    let agreements = records.iter().filter(|r| r.agreement).count();
    let ginis = records
        .iter()
        .map(|r| gini(&r.utilities))
        .collect::<Result<Vec<_>>>()?;
    let checked: Vec<bool> = records.iter().filter_map(|r| r.pareto).collect();
    let pareto_rate = if checked.is_empty() {
        None
    } else {
        Some(checked.iter().filter(|p| **p).count() as f64 / checked.len() as f64)
    };
    let mean_objective = mean(records.iter().map(|r| r.objective));
    let var = mean(records.iter().map(|r| (r.objective - mean_objective).powi(2)));
    Ok(MetricsSummary {
        format: SUMMARY_FORMAT.into(),
        label: label.into(),
        episodes: records.len(),
        seeds: records.iter().map(|r| r.seed).collect(),
        consensus_rate: agreements as f64 / n,
        mean_rounds: mean(records.iter().map(|r| r.rounds as f64)),
        social_welfare: mean(records.iter().map(EpisodeRecord::welfare)),
        gini: mean(ginis.into_iter()),
        pareto_rate,
        mean_objective,
        std_objective: var.sqrt(),
    })
}

/// Per-episode CSV. The first line is a `#` comment carrying the format
/// string; utility columns `u0..` are as wide as the largest episode.
pub fn write_episodes_csv<W: Write>(out: W, records: &[EpisodeRecord]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# {EPISODES_FORMAT}")?;
    let width = records.iter().map(|r| r.num_agents).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["episode_id", "seed", "N", "M", "outcome", "rounds"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..width).map(|i| format!("u{i}")));
    header.extend(["J".to_string(), "pareto".to_string()]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.episode_id.to_string(),
            r.seed.to_string(),
            r.num_agents.to_string(),
            r.num_issues.to_string(),
            if r.agreement { "agreement" } else { "failure" }.to_string(),
            r.rounds.to_string(),
        ];
        for i in 0..width {
            row.push(r.utilities.get(i).map(|u| format!("{u:?}")).unwrap_or_default());
        }
        row.push(format!("{:?}", r.objective));
        row.push(match r.pareto {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("episode csv: bad {name} in row {row:?}")))
}

pub fn read_episodes_csv<R: Read>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let width = r.headers()?.len().saturating_sub(8);
    let mut records = Vec::new();
    for row in r.records() {
        let row = row?;
        let num_agents: usize = field(&row, 2, "N")?;
        let utilities = (0..num_agents)
            .map(|i| field(&row, 6 + i, "utility"))
            .collect::<Result<Vec<f64>>>()?;
        let pareto = match row.get(7 + width) {
            Some("1") => Some(true),
            Some("0") => Some(false),
            _ => None,
        };
        records.push(EpisodeRecord {
            episode_id: field(&row, 0, "episode_id")?,
            seed: field(&row, 1, "seed")?,
            num_agents,
            num_issues: field(&row, 3, "M")?,
            agreement: row.get(4) == Some("agreement"),
            rounds: field(&row, 5, "rounds")?,
            utilities,
            objective: field(&row, 6 + width, "J")?,
            pareto,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_gini(u: &[f64]) -> f64 {
        let n = u.len() as f64;
        let mean = u.iter().sum::<f64>() / n;
        let s: f64 = u.iter().flat_map(|a| u.iter().map(move |b| (a - b).abs())).sum();
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0.4, 0.4, 0.4]).unwrap(), 0.0);
        assert!((gini(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((gini(&[1.0, 1.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(gini(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn gini_matches_pairwise_sum() {
        let u = [0.3, 0.9, 0.1, 0.55, 0.0, 0.72];
        assert!((gini(&u).unwrap() - naive_gini(&u)).abs() < 1e-12);
    }

    fn record(id: usize, agreement: bool, utilities: Vec<f64>) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: id,
            seed: 100 + id as u64,
            num_agents: utilities.len(),
            num_issues: 1,
            agreement,
            rounds: if agreement { 4 } else { 12 },
            utilities,
            objective: 0.1 * id as f64 - 0.3,
            pareto: agreement.then_some(id.is_multiple_of(2)),
        }
    }

    #[test]
    fn consensus_rate_counts_agreements() {
        let rs = vec![
            record(0, true, vec![0.5, 0.5]),
            record(1, true, vec![0.6, 0.3]),
            record(2, false, vec![0.1, 0.2]),
            record(3, true, vec![0.9, 0.2]),
        ];
        let s = summarize("t", &rs).unwrap();
        assert_eq!(s.consensus_rate, 0.75);
        assert_eq!(s.mean_rounds, 6.0);
    }

    #[test]
    fn csv_round_trip_reproduces_summary() {
        let rs = vec![
            record(0, true, vec![0.5, 0.5]),
            record(1, false, vec![0.1, 0.25, 0.3, 0.0]),
            record(2, true, vec![1.0 / 3.0, 0.7]),
        ];
        let mut buf = Vec::new();
        write_episodes_csv(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# diplomat-episodes/1\n"));
        let back = read_episodes_csv(&buf[..]).unwrap();
        assert_eq!(back, rs);
        assert_eq!(summarize("t", &back).unwrap(), summarize("t", &rs).unwrap());
    }
}
