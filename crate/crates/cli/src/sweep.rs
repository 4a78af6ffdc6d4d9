//! One-parameter sweeps of the cascade thresholds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use strain_cascade_core::{run_cascade, ModelParameters};

use crate::error::CliError;
use crate::output::full_precision;
use crate::report::format_set;

/// Index selector: a one-based position or `*` for every position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    All,
    /// Zero-based.
    At(usize),
}

/// A scalar parameter, or a family of them addressed with wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPath {
    Birth(Index),
    Death(Index),
    BetaDiag(Index, Index),
    Theta(Index, Index),
    /// `migration[l][i]`, the rate from patch `i` to patch `l`.
    Migration(Index, Index),
}

/// `path=start:stop:steps`, with `steps` evenly spaced points including both
/// ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: ParamPath,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Axis {
    pub fn grid(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.stop
                    } else {
                        self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }

    /// Rejects indices outside the model dimensions.
    pub fn check(&self, params: &ModelParameters) -> Result<(), CliError> {
        let (p, n) = (params.patches, params.strains);
        let within = |idx: Index, bound: usize| match idx {
            Index::All => true,
            Index::At(i) => i < bound,
        };
        let ok = match self.path {
            ParamPath::Birth(l) | ParamPath::Death(l) => within(l, p),
            ParamPath::BetaDiag(l, k) | ParamPath::Theta(l, k) => within(l, p) && within(k, n),
            ParamPath::Migration(l, i) => {
                within(l, p) && within(i, p) && !matches!((l, i), (Index::At(a), Index::At(b)) if a == b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "axis `{}` does not name a parameter of a model with {p} patches and {n} strains",
                self.path
            )))
        }
    }

    /// Sets every addressed entry to `value`.
    pub fn apply(&self, params: &mut ModelParameters, value: f64) {
        let expand = |idx: Index, bound: usize| match idx {
            Index::All => (0..bound).collect::<Vec<_>>(),
            Index::At(i) => vec![i],
        };
        let (p, n) = (params.patches, params.strains);
        match self.path {
            ParamPath::Birth(l) => expand(l, p).into_iter().for_each(|l| params.birth[l] = value),
            ParamPath::Death(l) => expand(l, p).into_iter().for_each(|l| params.death[l] = value),
            ParamPath::BetaDiag(l, k) | ParamPath::Theta(l, k) => {
                let table = if matches!(self.path, ParamPath::BetaDiag(..)) {
                    &mut params.beta_diag
                } else {
                    &mut params.theta
                };
                for l in expand(l, p) {
                    for k in expand(k, n) {
                        table[l][k] = value;
                    }
                }
            }
            ParamPath::Migration(l, i) => {
                for l in expand(l, p) {
                    for i in expand(i, p) {
                        if l != i {
                            params.migration[l][i] = value;
                        }
                    }
                }
            }
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::All => write!(f, "[*]"),
            Index::At(i) => write!(f, "[{}]", i + 1),
        }
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::Birth(l) => write!(f, "birth{l}"),
            ParamPath::Death(l) => write!(f, "death{l}"),
            ParamPath::BetaDiag(l, k) => write!(f, "beta_diag{l}{k}"),
            ParamPath::Theta(l, k) => write!(f, "theta{l}{k}"),
            ParamPath::Migration(l, i) => write!(f, "migration{l}{i}"),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}:{}:{}", self.path, self.start, self.stop, self.steps)
    }
}

fn parse_indices(rest: &str) -> Result<Vec<Index>, String> {
    let mut out = Vec::new();
    let mut s = rest;
    while !s.is_empty() {
        let inner = s
            .strip_prefix('[')
            .and_then(|t| t.split_once(']'))
            .ok_or_else(|| format!("malformed index list `{rest}`"))?;
        let idx = match inner.0.trim() {
            "*" => Index::All,
            t => {
                let i: usize = t.parse().map_err(|_| format!("bad index `{t}`"))?;
                if i == 0 {
                    return Err("indices are one-based".into());
                }
                Index::At(i - 1)
            }
        };
        out.push(idx);
        s = inner.1;
    }
    Ok(out)
}

impl FromStr for ParamPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s.find('[').unwrap_or(s.len());
        let (name, rest) = s.split_at(split);
        let idx = parse_indices(rest)?;
        let path = match (name, idx.as_slice()) {
            ("birth", []) => ParamPath::Birth(Index::All),
            ("birth", [l]) => ParamPath::Birth(*l),
            ("death", []) => ParamPath::Death(Index::All),
            ("death", [l]) => ParamPath::Death(*l),
            ("beta_diag", [l, k]) => ParamPath::BetaDiag(*l, *k),
            ("theta", [l, k]) => ParamPath::Theta(*l, *k),
            ("migration", []) => ParamPath::Migration(Index::All, Index::All),
            ("migration", [l, i]) => ParamPath::Migration(*l, *i),
            _ => return Err(format!("unknown parameter path `{s}`")),
        };
        Ok(path)
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (path, grid) = s
            .split_once('=')
            .ok_or_else(|| format!("axis `{s}` must look like param=start:stop:steps"))?;
        let parts: Vec<&str> = grid.split(':').collect();
        let [start, stop, steps] = parts.as_slice() else {
            return Err(format!("grid `{grid}` must look like start:stop:steps"));
        };
        let start: f64 = start.trim().parse().map_err(|_| format!("bad start `{start}`"))?;
        let stop: f64 = stop.trim().parse().map_err(|_| format!("bad stop `{stop}`"))?;
        let steps: usize = steps.trim().parse().map_err(|_| format!("bad step count `{steps}`"))?;
        if !start.is_finite() || !stop.is_finite() {
            return Err("grid bounds must be finite".into());
        }
        Ok(Axis {
            path: path.parse()?,
            start,
            stop,
            steps,
        })
    }
}

/// Outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Thresholds with strain `n` first, or the failure message.
    pub result: Result<(Vec<f64>, Vec<usize>), String>,
}

/// Runs the cascade at every grid point; rows come back in grid order.
pub fn run_sweep(params: &ModelParameters, axis: &Axis) -> Vec<SweepRow> {
    axis.grid()
        .into_par_iter()
        .map(|value| {
            let mut point = params.clone();
            axis.apply(&mut point, value);
            let result = run_cascade(&point)
                .map(|r| (r.thresholds(), r.persistence_set()))
                .map_err(|e| match e {
                    strain_cascade_core::CascadeError::InvalidParameters(v) => {
                        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
                        format!("error: {}", msgs.join("; "))
                    }
                    other => format!("error: {other}"),
                });
            SweepRow { value, result }
        })
        .collect()
}

pub fn sweep_header(strains: usize) -> Vec<String> {
    let mut h = vec!["value".to_string()];
    h.extend((1..=strains).rev().map(|k| format!("s_M_{k}")));
    h.push("persistence_set".into());
    h
}

/// Failed points keep their row: empty thresholds and the message in the
/// `persistence_set` column.
pub fn sweep_csv(strains: usize, rows: &[SweepRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(sweep_header(strains)).expect("in-memory write");
    for row in rows {
        let mut rec = vec![full_precision(row.value)];
        match &row.result {
            Ok((thresholds, set)) => {
                rec.extend(thresholds.iter().copied().map(full_precision));
                rec.push(format_set(set));
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), strains));
                rec.push(msg.clone());
            }
        }
        w.write_record(rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_paths_and_grids() {
        let a: Axis = "beta_diag[1][2]=0.5:4:8".parse().unwrap();
        assert_eq!(a.path, ParamPath::BetaDiag(Index::At(0), Index::At(1)));
        assert_eq!(a.grid().len(), 8);
        assert_eq!(a.grid()[7], 4.0);
        let a: Axis = "migration=0:1:0".parse().unwrap();
        assert_eq!(a.path, ParamPath::Migration(Index::All, Index::All));
        assert!(a.grid().is_empty());
        let a: Axis = "theta[*][3]=1:2:2".parse().unwrap();
        assert_eq!(a.path, ParamPath::Theta(Index::All, Index::At(2)));
        assert_eq!(a.to_string(), "theta[*][3]=1:2:2");
        assert!("beta_diag[0][1]=1:2:3".parse::<Axis>().is_err());
        assert!("gamma[1]=1:2:3".parse::<Axis>().is_err());
        assert!("birth[1]=1:2".parse::<Axis>().is_err());
    }
}
