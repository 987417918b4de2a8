//! Column-text trajectory files.
//!
//! ```text
//! # maps2 trajectory
//! # scenario 3f2a...
//! # seed 7
//! # formula G[20,80](norm(x1 - x2) >= 1)
//! # robot t x...
//! 1 0 0 0
//! 1 12.5 0.3 1.7
//! ```
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so a
//! written file parses back to identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::RobotId;
use crate::monitor::{MonitorError, Trace};
use crate::planner::RobotTree;

const MAGIC: &str = "# maps2 trajectory";

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub scenario_hash: String,
    pub seed: u64,
    pub formula: String,
    pub rows: BTreeMap<RobotId, Vec<(f64, Vec<f64>)>>,
}

impl TrajectoryFile {
    pub fn from_trees(scenario_hash: &str, seed: u64, formula: &str, trees: &BTreeMap<RobotId, RobotTree>) -> TrajectoryFile {
        let rows = trees
            .iter()
            .map(|(r, tr)| (*r, tr.vertices().iter().map(|v| (v.t, v.x.clone())).collect()))
            .collect();
        TrajectoryFile {
            scenario_hash: scenario_hash.to_string(),
            seed,
            formula: formula.to_string(),
            rows,
        }
    }

    pub fn to_trace(&self) -> Result<Trace, MonitorError> {
        Trace::new(self.rows.clone())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# scenario {}", self.scenario_hash);
        let _ = writeln!(s, "# seed {}", self.seed);
        let _ = writeln!(s, "# formula {}", self.formula);
        let _ = writeln!(s, "# robot t x...");
        for (r, samples) in &self.rows {
            for (t, x) in samples {
                let _ = write!(s, "{} {}", r.0, t);
                for v in x {
                    let _ = write!(s, " {v}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<TrajectoryFile, TrajectoryError> {
        let mut hash = None;
        let mut seed = None;
        let mut formula = None;
        let mut rows: BTreeMap<RobotId, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let n = k + 1;
            let err = |message: String| TrajectoryError::Syntax { line: n, message };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
                match key {
                    "scenario" => hash = Some(value.trim().to_string()),
                    "seed" => seed = Some(value.trim().parse::<u64>().map_err(|e| err(format!("bad seed: {e}")))?),
                    "formula" => formula = Some(value.trim().to_string()),
                    _ => {}
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let robot: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| err("expected a robot id".into()))?;
            let nums: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad number `{f}`: {e}"))))
                .collect::<Result<_, _>>()?;
            let Some((t, x)) = nums.split_first() else {
                return Err(err("expected a time".into()));
            };
            let samples = rows.entry(RobotId(robot)).or_default();
            if let Some((prev, x0)) = samples.last() {
                if *t <= *prev {
                    return Err(err(format!("time {t} does not increase for robot {robot}")));
                }
                if x0.len() != x.len() {
                    return Err(err(format!("robot {robot} changes dimension")));
                }
            }
            samples.push((*t, x.to_vec()));
        }
        Ok(TrajectoryFile {
            scenario_hash: hash.ok_or(TrajectoryError::MissingHeader("scenario"))?,
            seed: seed.ok_or(TrajectoryError::MissingHeader("seed"))?,
            formula: formula.ok_or(TrajectoryError::MissingHeader("formula"))?,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut rows = BTreeMap::new();
        rows.insert(
            RobotId(1),
            vec![(0.0, vec![0.1, 1.0 / 3.0]), (std::f64::consts::PI, vec![-2e-300, 7.0])],
        );
        rows.insert(RobotId(2), vec![(0.0, vec![1.0]), (0.5, vec![f64::EPSILON])]);
        let f = TrajectoryFile {
            scenario_hash: "ab".into(),
            seed: 42,
            formula: "F[0,1](x1[0] >= 0)".into(),
            rows,
        };
        let text = f.render();
        assert_eq!(TrajectoryFile::parse(&text).unwrap(), f);
    }

    #[test]
    fn rejects_bad_rows() {
        let head = "# scenario x\n# seed 1\n# formula true\n";
        assert!(TrajectoryFile::parse(&format!("{head}1 0 0\n1 0 1\n")).is_err());
        assert!(TrajectoryFile::parse(&format!("{head}1 0 zz\n")).is_err());
        assert_eq!(TrajectoryFile::parse("1 0 0\n"), Err(TrajectoryError::MissingHeader("scenario")));
    }
}
