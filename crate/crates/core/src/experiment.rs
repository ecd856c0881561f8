//! Parameter sweeps over generated instances.
//!
//! Every (sweep value, seed, algorithm) cell runs on its own instance and
//! solver state. Cells are spread over a worker pool and merged in a fixed
//! order, so the table does not depend on the number of workers.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colgen::Pricing;
use crate::gen::{generate_instance, GenConfig, GenError};
use crate::greedy::greedy_schedule;
use crate::lda::{run_lda, LdaParams};
use crate::model::total_cost;
use crate::oracle::{solve_exact, OracleError, OracleLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Oracle,
    Greedy,
    Lda,
    /// LDA on the instance with the recommendation limit forced to zero.
    #[serde(rename = "lda-nr")]
    LdaNoRecommendation,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Oracle => "oracle",
            Algorithm::Greedy => "greedy",
            Algorithm::Lda => "lda",
            Algorithm::LdaNoRecommendation => "lda-nr",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NumContents,
    NumSlots,
    Rho,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NumContents => "num_contents",
            SweepParam::NumSlots => "num_slots",
            SweepParam::Rho => "rho",
        }
    }

    fn apply(self, base: &GenConfig, value: f64) -> GenConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::NumContents => cfg.num_contents = value as usize,
            SweepParam::NumSlots => cfg.num_slots = value as usize,
            SweepParam::Rho => cfg.rho = value,
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaOptions {
    pub iterations: usize,
    pub eta: f64,
    pub quantization_m: u32,
}

impl Default for LdaOptions {
    fn default() -> Self {
        let p = LdaParams::default();
        Self {
            iterations: p.max_iterations,
            eta: p.eta,
            quantization_m: 10_000,
        }
    }
}

impl LdaOptions {
    pub fn params(&self) -> LdaParams {
        let mut p = LdaParams {
            max_iterations: self.iterations,
            eta: self.eta,
            ..LdaParams::default()
        };
        if let Pricing::Auto { limit, .. } = p.colgen.pricing {
            p.colgen.pricing = Pricing::Auto {
                m: self.quantization_m,
                limit,
            };
        }
        p
    }
}

/// A sweep read from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Instances per sweep value, seeded `base.seed`, `base.seed + 1`, ...
    pub seeds: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub base: GenConfig,
    #[serde(default)]
    pub lda: LdaOptions,
    /// Oracle size guard; larger instances get a `skipped` oracle row.
    #[serde(default = "default_oracle_states")]
    pub oracle_max_states: f64,
}

fn default_oracle_states() -> f64 {
    OracleLimits::default().max_states
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep has no {0}")]
    Empty(&'static str),
    #[error("sweep value {value} of {param}: {source}")]
    Config {
        param: &'static str,
        value: f64,
        source: GenError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::Empty("values"));
        }
        if self.seeds == 0 {
            return Err(SweepError::Empty("seeds"));
        }
        if self.algorithms.is_empty() {
            return Err(SweepError::Empty("algorithms"));
        }
        for &value in &self.values {
            self.param
                .apply(&self.base, value)
                .validate()
                .map_err(|source| SweepError::Config {
                    param: self.param.name(),
                    value,
                    source,
                })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_param: &'static str,
    pub sweep_value: f64,
    /// Instance seed, or `mean` on average rows.
    pub seed: String,
    pub algorithm: Algorithm,
    /// `ok`, `skipped`, `no-incumbent` or `error: ...`; average rows carry
    /// `n/m ok`.
    pub status: String,
    pub cost: Option<f64>,
    pub lower_bound: Option<f64>,
    /// Oracle optimum of the same instance when it was solved.
    pub reference: Option<f64>,
    /// `(cost - lower_bound) / lower_bound`.
    pub gap_lbd: Option<f64>,
    /// `(cost - reference) / reference`.
    pub gap_opt: Option<f64>,
    pub wall_time_s: Option<f64>,
}

struct Cell {
    value: f64,
    seed: u64,
    algorithm: Algorithm,
}

struct Outcome {
    status: String,
    cost: Option<f64>,
    lower_bound: Option<f64>,
    wall_time_s: f64,
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> Outcome {
    let mut cfg = spec.param.apply(&spec.base, cell.value);
    cfg.seed = cell.seed;
    let start = Instant::now();
    let (status, cost, lower_bound) = match generate_instance(&cfg) {
        Err(e) => (format!("error: {e}"), None, None),
        Ok(inst) => match cell.algorithm {
            Algorithm::Oracle => match solve_exact(
                &inst,
                &OracleLimits {
                    max_states: spec.oracle_max_states,
                },
            ) {
                Ok(exact) => ("ok".to_string(), Some(exact.cost), Some(exact.cost)),
                Err(OracleError::SearchSpaceTooLarge { .. }) => ("skipped".to_string(), None, None),
            },
            Algorithm::Greedy => match total_cost(&inst, &greedy_schedule(&inst)) {
                Ok(c) => ("ok".to_string(), Some(c), None),
                Err(e) => (format!("error: {e}"), None, None),
            },
            Algorithm::Lda | Algorithm::LdaNoRecommendation => {
                let inst = if cell.algorithm == Algorithm::Lda {
                    inst
                } else {
                    inst.without_recommendation()
                };
                match run_lda(&inst, &spec.lda.params()) {
                    Ok(res) => match res.incumbent_cost {
                        Some(c) => ("ok".to_string(), Some(c), Some(res.lower_bound)),
                        None => ("no-incumbent".to_string(), None, Some(res.lower_bound)),
                    },
                    Err(e) => (format!("error: {e}"), None, None),
                }
            }
        },
    };
    Outcome {
        status,
        cost,
        lower_bound,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn gap(value: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (value, base) {
        (Some(v), Some(b)) if b > 0.0 => Some((v - b) / b),
        (Some(v), Some(b)) if b == 0.0 && v == 0.0 => Some(0.0),
        _ => None,
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Runs every cell with `jobs` workers. Seed rows come in (value, seed,
/// algorithm) order, each sweep value followed by one average row per
/// algorithm. Wall times are left empty unless `timing` is set.
pub fn run_experiment(
    spec: &SweepSpec,
    jobs: usize,
    timing: bool,
) -> Result<Vec<ResultRow>, SweepError> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &value in &spec.values {
        for s in 0..spec.seeds {
            for &algorithm in &spec.algorithms {
                cells.push(Cell {
                    value,
                    seed: spec.base.seed.wrapping_add(s),
                    algorithm,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let outcomes: Vec<Outcome> =
        pool.install(|| cells.par_iter().map(|c| run_cell(spec, c)).collect());

    let per_value = spec.seeds as usize * spec.algorithms.len();
    let mut rows = Vec::with_capacity(cells.len() + spec.values.len() * spec.algorithms.len());
    for (vi, &value) in spec.values.iter().enumerate() {
        let block = vi * per_value..(vi + 1) * per_value;
        let mut seed_rows = Vec::with_capacity(per_value);
        let n = spec.algorithms.len();
        for (cs, os) in cells[block.clone()]
            .chunks(n)
            .zip(outcomes[block].chunks(n))
        {
            let reference = cs
                .iter()
                .zip(os)
                .find(|(c, o)| c.algorithm == Algorithm::Oracle && o.status == "ok")
                .and_then(|(_, o)| o.cost);
            for (c, o) in cs.iter().zip(os) {
                let gap_lbd = match c.algorithm {
                    Algorithm::Lda | Algorithm::LdaNoRecommendation => gap(o.cost, o.lower_bound),
                    _ => None,
                };
                seed_rows.push(ResultRow {
                    sweep_param: spec.param.name(),
                    sweep_value: value,
                    seed: c.seed.to_string(),
                    algorithm: c.algorithm,
                    status: o.status.clone(),
                    cost: o.cost,
                    lower_bound: o.lower_bound,
                    reference,
                    gap_lbd,
                    gap_opt: gap(o.cost, reference),
                    wall_time_s: timing.then_some(o.wall_time_s),
                });
            }
        }
        rows.extend(seed_rows.iter().cloned());
        for &algorithm in &spec.algorithms {
            let group: Vec<&ResultRow> = seed_rows
                .iter()
                .filter(|r| r.algorithm == algorithm)
                .collect();
            let ok = group.iter().filter(|r| r.status == "ok").count();
            rows.push(ResultRow {
                sweep_param: spec.param.name(),
                sweep_value: value,
                seed: "mean".to_string(),
                algorithm,
                status: format!("{ok}/{} ok", group.len()),
                cost: mean(group.iter().map(|r| r.cost)),
                lower_bound: mean(group.iter().map(|r| r.lower_bound)),
                reference: mean(group.iter().map(|r| r.reference)),
                gap_lbd: mean(group.iter().map(|r| r.gap_lbd)),
                gap_opt: mean(group.iter().map(|r| r.gap_opt)),
                wall_time_s: if timing {
                    mean(group.iter().map(|r| r.wall_time_s))
                } else {
                    None
                },
            });
        }
    }
    Ok(rows)
}

/// RFC 4180 CSV with a header row; absent values are empty fields.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(algorithms: Vec<Algorithm>) -> SweepSpec {
        SweepSpec {
            param: SweepParam::NumContents,
            values: vec![3.0],
            seeds: 2,
            algorithms,
            base: GenConfig {
                num_slots: 2,
                ..GenConfig::default()
            },
            lda: LdaOptions {
                iterations: 5,
                ..LdaOptions::default()
            },
            oracle_max_states: 1e6,
        }
    }

    #[test]
    fn row_accounting() {
        let s = spec(vec![Algorithm::Oracle, Algorithm::Greedy, Algorithm::Lda]);
        let rows = run_experiment(&s, 1, false).unwrap();
        assert_eq!(rows.len(), 2 * 3 + 3);
        assert_eq!(rows.iter().filter(|r| r.seed == "mean").count(), 3);
        for r in rows
            .iter()
            .filter(|r| r.algorithm == Algorithm::Lda && r.seed != "mean")
        {
            assert!(r.gap_lbd.unwrap() >= -1e-9);
            assert!(r.gap_opt.unwrap() >= -1e-9);
        }
        assert!(rows.iter().all(|r| r.wall_time_s.is_none()));
    }

    #[test]
    fn oversized_oracle_is_skipped() {
        let mut s = spec(vec![Algorithm::Oracle, Algorithm::Greedy]);
        s.oracle_max_states = 10.0;
        let rows = run_experiment(&s, 1, true).unwrap();
        assert_eq!(rows[0].status, "skipped");
        assert_eq!(rows[1].reference, None);
        assert_eq!(rows[rows.len() - 2].status, "0/2 ok");
        assert!(rows[1].wall_time_s.is_some());
    }

    #[test]
    fn csv_has_header_and_empty_fields() {
        let s = spec(vec![Algorithm::Greedy]);
        let text = results_csv(&run_experiment(&s, 2, false).unwrap());
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sweep_param,sweep_value,seed,algorithm,status,cost,lower_bound,reference,gap_lbd,gap_opt,wall_time_s"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("num_contents,3.0,0,greedy,ok,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            param = "rho"
            values = [0.1, 0.2]
            seeds = 3
            algorithms = ["greedy", "lda", "lda-nr"]
            [base]
            num_contents = 10
            [lda]
            iterations = 20
        "#;
        let s: SweepSpec = toml::from_str(text).unwrap();
        assert_eq!(s.algorithms[2], Algorithm::LdaNoRecommendation);
        assert_eq!(s.base.num_contents, 10);
        assert_eq!(s.lda.iterations, 20);
        assert_eq!(s.lda.quantization_m, 10_000);
        s.validate().unwrap();
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        let mut s = spec(vec![]);
        assert!(matches!(s.validate(), Err(SweepError::Empty("algorithms"))));
        s.algorithms = vec![Algorithm::Greedy];
        s.values.clear();
        assert!(matches!(s.validate(), Err(SweepError::Empty("values"))));
    }
}
