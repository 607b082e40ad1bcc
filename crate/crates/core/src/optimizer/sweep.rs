use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::search::run_fixed_trial;
use super::space::Param;
use crate::corpus::EvalSplit;
use crate::error::{Error, Result};
use crate::evaluator::{IndexMode, Interval};
use crate::par;
use crate::trainer::{HyperParams, TrainOptions};

/// Mean over runs with a 95% half-width when there are at least two runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Result<Self> {
        match values.len() {
            0 => Err(Error::InvalidArgument("no runs to summarize".into())),
            1 => Ok(Estimate {
                mean: values[0],
                half_width: None,
            }),
            _ => {
                let i = Interval::of(values)?;
                Ok(Estimate {
                    mean: i.mean,
                    half_width: Some(i.half_width),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// The row for the centre configuration's own value.
    pub is_center: bool,
    pub runs: usize,
    pub hr_at_10: Estimate,
    pub ndcg_at_10: Estimate,
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad grid {spec:?}; use start:stop:step or v1,v2,..."));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(bad());
        }
        (0..=n).map(|i| a + i as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

/// Retrains `center` with `param` set to each grid value and every seed,
/// all other hyperparameters fixed. Points are independent, so with
/// `parallel` they run concurrently; each run then uses one worker.
pub fn linear_sweep(
    split: &EvalSplit,
    center: &HyperParams,
    param: Param,
    grid: &[f64],
    seeds: &[u64],
    opts: &TrainOptions,
    index: IndexMode,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one grid value and one seed".into(),
        ));
    }
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let hp_at = |g: usize| {
        let mut hp = *center;
        param.set(&mut hp, grid[g]);
        hp
    };
    for g in 0..grid.len() {
        hp_at(g).validate()?;
    }
    let run = |&(g, seed): &(usize, u64)| {
        let o = TrainOptions {
            seed,
            workers: if parallel { 1 } else { opts.workers },
            ..*opts
        };
        run_fixed_trial(split, hp_at(g), &o, index)
    };
    let results = par::map(&jobs, parallel, run);
    let center_value = param.get(center);
    let mut rows = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let mut hr = Vec::new();
        let mut ndcg = Vec::new();
        for ((jg, _), r) in jobs.iter().zip(&results) {
            if *jg == g {
                let r = r
                    .as_ref()
                    .map_err(|e| Error::InvalidArgument(format!("{param}={}: {e}", grid[g])))?;
                hr.push(r.eval.hr_at_k);
                ndcg.push(r.eval.ndcg_at_k);
            }
        }
        let value = param.get(&hp_at(g));
        rows.push(SweepRow {
            value,
            is_center: (value - center_value).abs() < 1e-9,
            runs: hr.len(),
            hr_at_10: Estimate::of(&hr)?,
            ndcg_at_10: Estimate::of(&ndcg)?,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn write_sweep_csv(path: &Path, param: Param, rows: &[SweepRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(f, "param,value,is_center,runs,hr_at_10,hr_ci95,ndcg_at_10,ndcg_ci95").map_err(io)?;
    for r in rows {
        writeln!(
            f,
            "{param},{},{},{},{},{},{},{}",
            r.value,
            r.is_center,
            r.runs,
            r.hr_at_10.mean,
            opt(r.hr_at_10.half_width),
            r.ndcg_at_10.mean,
            opt(r.ndcg_at_10.half_width)
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
