//! Seeded simulation of interference and order effects against context memory.
//!
//! Each memory level `m` has reliability `r(m) = 1 - 2^-m`. Every trial
//! runs in one of two modes: with probability `r(m)` the agent answers from
//! classically recorded branches, drawing `(a, b)` from the fixed A-then-B
//! joint; otherwise it answers from the coherent amplitude state. Three arms
//! are simulated per level: A then B, B then A, and B alone. Interference is
//! fitted from the A-then-B conditionals and the B-alone frequency; the order
//! effect compares the two sequential arms.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bookkeeping::mutual_information;
use crate::error::{Error, Result};
use crate::intervention::{
    apply, op_from_file, sequential_stats, state_from_value, InterventionModel, InterventionOp, OpFile,
    SharedState, StateKind,
};
use crate::projection::{extract_phase, ltp_predict, BranchData};
use crate::scenario::{Behavior, Context, Distribution, Observable, Scenario};

/// Branch-weight product below which no phase is fitted.
pub const UNFIT_THRESHOLD: f64 = 1e-6;

pub fn reliability(m: u32) -> f64 {
    1.0 - 0.5f64.powi(m as i32)
}

#[derive(Clone, Debug)]
pub struct TradeoffConfig {
    pub question_a: InterventionOp,
    pub question_b: InterventionOp,
    pub initial: SharedState,
    pub memory_levels: Vec<u32>,
    pub trials: u64,
    pub seed: u64,
    /// Number of seeds, `seed, seed + 1, ...`.
    pub replicates: u64,
    pub noise: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuestionFile {
    pub id: String,
    #[serde(flatten)]
    pub op: OpFile,
}

/// On-disk configuration; questions use the intervention model op layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TradeoffConfigFile {
    pub dimension: usize,
    pub initial: Value,
    pub question_pair: [QuestionFile; 2],
    pub memory_levels: Vec<u32>,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: u64,
    #[serde(default)]
    pub noise: f64,
}

fn one() -> u64 {
    1
}

impl TradeoffConfig {
    pub fn validate(&self) -> Result<()> {
        for q in [&self.question_a, &self.question_b] {
            if q.kind() != StateKind::Amplitude || q.outcome_count() != 2 {
                return Err(Error::InvalidConfig(format!("question `{}` must be a binary amplitude op", q.id())));
            }
            if q.dimension() != self.initial.dimension() || self.initial.kind() != StateKind::Amplitude {
                return Err(Error::InvalidConfig(format!("question `{}` does not act on the initial state", q.id())));
            }
        }
        if self.memory_levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("memory_levels must be sorted ascending".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::InvalidConfig(format!("noise {} outside [0, 0.5)", self.noise)));
        }
        Ok(())
    }

    pub fn from_file(file: TradeoffConfigFile) -> Result<Self> {
        let dim = file.dimension;
        let initial = state_from_value(&file.initial, StateKind::Amplitude, dim, "initial")?;
        let [qa, qb] = file.question_pair;
        let cfg = TradeoffConfig {
            question_a: op_from_file(&qa.id, &qa.op, StateKind::Amplitude, dim)?,
            question_b: op_from_file(&qb.id, &qb.op, StateKind::Amplitude, dim)?,
            initial,
            memory_levels: file.memory_levels,
            trials: file.trials,
            seed: file.seed,
            replicates: file.replicates,
            noise: file.noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn model(&self) -> Result<InterventionModel> {
        let ops = BTreeMap::from([
            ("A".to_string(), self.question_a.clone()),
            ("B".to_string(), self.question_b.clone()),
        ]);
        InterventionModel::new(self.initial.clone(), ops, None)
    }
}

pub fn parse_tradeoff_config(json: &str) -> Result<TradeoffConfig> {
    let file: TradeoffConfigFile = serde_json::from_str(json)?;
    TradeoffConfig::from_file(file)
}

/// Exact probabilities of the amplitude model that drive the simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProbabilities {
    /// A-then-B joint over `(a, b)`, `b` fastest.
    pub joint_ab: [f64; 4],
    /// B-then-A joint re-indexed to `(a, b)`.
    pub joint_ba: [f64; 4],
    /// Born probabilities of B asked alone.
    pub b_alone: [f64; 2],
}

impl ModelProbabilities {
    pub fn branch_data(&self) -> Result<BranchData> {
        conditionals(&self.joint_ab)
    }

    /// `P(B alone) - LTP` of the coherent model.
    pub fn interference(&self) -> Result<f64> {
        Ok(self.b_alone[0] - ltp_predict(&self.branch_data()?))
    }
}

fn conditionals(joint: &[f64; 4]) -> Result<BranchData> {
    let p_a = joint[0] + joint[1];
    let p_not_a = joint[2] + joint[3];
    let cond = |yes: f64, total: f64| if total > 0.0 { yes / total } else { 0.0 };
    BranchData::new(p_a, cond(joint[0], p_a), p_not_a, cond(joint[2], p_not_a))
}

pub fn model_probabilities(cfg: &TradeoffConfig) -> Result<ModelProbabilities> {
    let m = cfg.model()?;
    let ab = sequential_stats(&m, &["A", "B"])?;
    let ba = sequential_stats(&m, &["B", "A"])?;
    let alone = apply(&cfg.question_b, &cfg.initial)?.outcome_probabilities;
    let mut joint_ab = [0.0; 4];
    let mut joint_ba = [0.0; 4];
    for a in 0..2 {
        for b in 0..2 {
            joint_ab[2 * a + b] = ab.get(&[a, b]);
            joint_ba[2 * a + b] = ba.get(&[b, a]);
        }
    }
    Ok(ModelProbabilities {
        joint_ab,
        joint_ba,
        b_alone: [alone[0], alone[1]],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub m: u32,
    pub reliability: f64,
    #[serde(rename = "I_abs")]
    pub i_abs: f64,
    /// Fitted gluing phase in `[0, pi]`; `None` when the level is unfit.
    pub theta: Option<f64>,
    pub fit_feasible: bool,
    pub unfit: bool,
    pub order_effect: f64,
    #[serde(rename = "I_MC")]
    pub i_mc: f64,
    /// Laplace smoothing was applied to an empty cell.
    pub smoothed: bool,
    pub p_a: f64,
    pub p_b_given_a: f64,
    pub p_b_given_not_a: f64,
    pub p_b_observed: f64,
    pub counts_ab: [u64; 4],
    pub counts_ba: [u64; 4],
    pub counts_b: [u64; 2],
}

impl LevelRow {
    /// Frequencies of the three arms as a behavior with observables `A`, `B`
    /// and contexts `AB`, `BA` (both tabulated over `(A, B)`) and `B`.
    pub fn empirical_behavior(&self) -> Result<Behavior> {
        let s = Scenario::new(
            vec![Observable::new("A", 2), Observable::new("B", 2)],
            vec![
                Context::new("AB", ["A", "B"]),
                Context::new("BA", ["A", "B"]),
                Context::new("Bonly", ["B"]),
            ],
        )?;
        let freq = |c: &[u64]| {
            let total: u64 = c.iter().sum();
            Distribution::new(c.iter().map(|&k| k as f64 / total as f64).collect(), 1e-9)
        };
        Behavior::new(s, vec![freq(&self.counts_ab)?, freq(&self.counts_ba)?, freq(&self.counts_b)?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRun {
    pub seed: u64,
    pub trials: u64,
    pub levels: Vec<LevelRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub model: ModelProbabilities,
    pub noise: f64,
    pub runs: Vec<TradeoffRun>,
}

pub fn run_tradeoff(cfg: &TradeoffConfig) -> Result<TradeoffReport> {
    cfg.validate()?;
    let model = model_probabilities(cfg)?;
    let seeds: Vec<u64> = (0..cfg.replicates).map(|k| cfg.seed.wrapping_add(k)).collect();
    let runs = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let model = &model;
                scope.spawn(move || -> Result<TradeoffRun> {
                    let levels = cfg
                        .memory_levels
                        .iter()
                        .enumerate()
                        .map(|(idx, &m)| simulate_level(cfg, model, seed, idx as u64, m))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(TradeoffRun {
                        seed,
                        trials: cfg.trials,
                        levels,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tradeoff worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(TradeoffReport {
        model,
        noise: cfg.noise,
        runs,
    })
}

fn simulate_level(cfg: &TradeoffConfig, model: &ModelProbabilities, seed: u64, stream: u64, m: u32) -> Result<LevelRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let r = reliability(m);
    let weights = |w: &[f64]| WeightedIndex::new(w.iter().copied()).map_err(|e| Error::InvalidConfig(e.to_string()));
    let classical = weights(&model.joint_ab)?;
    let coherent_ba = weights(&model.joint_ba)?;
    let coherent_b = weights(&model.b_alone)?;
    let flip = |rng: &mut ChaCha8Rng, answer: usize| {
        if cfg.noise > 0.0 && rng.random::<f64>() < cfg.noise { 1 - answer } else { answer }
    };

    let mut counts_ab = [0u64; 4];
    let mut counts_ba = [0u64; 4];
    let mut counts_b = [0u64; 2];
    // memory symbol (none, AB, BA) against question order (AB, BA)
    let mut memory = [[0u64; 2]; 3];
    let stores_order = m >= 2;
    for _ in 0..cfg.trials {
        // A then B: both modes draw from the sequential joint
        let is_classical = rng.random::<f64>() < r;
        let k = rng.sample(&classical);
        let (a, b) = (flip(&mut rng, k / 2), flip(&mut rng, k % 2));
        counts_ab[2 * a + b] += 1;
        memory[if is_classical && stores_order { 1 } else { 0 }][0] += 1;

        // B then A
        let is_classical = rng.random::<f64>() < r;
        let k = if is_classical { rng.sample(&classical) } else { rng.sample(&coherent_ba) };
        let (a, b) = (flip(&mut rng, k / 2), flip(&mut rng, k % 2));
        counts_ba[2 * a + b] += 1;
        memory[if is_classical && stores_order { 2 } else { 0 }][1] += 1;

        // B alone
        let is_classical = rng.random::<f64>() < r;
        let b = if is_classical { rng.sample(&classical) % 2 } else { rng.sample(&coherent_b) };
        counts_b[flip(&mut rng, b)] += 1;
    }

    let mut smoothed = false;
    let mut smooth = |c: &[u64]| -> Vec<f64> {
        let pad = if c.contains(&0) {
            smoothed = true;
            1.0
        } else {
            0.0
        };
        let total: f64 = c.iter().map(|&k| k as f64 + pad).sum();
        c.iter().map(|&k| (k as f64 + pad) / total).collect()
    };
    let ab = smooth(&counts_ab);
    let ba = smooth(&counts_ba);
    let pb = smooth(&counts_b);
    let d = conditionals(&[ab[0], ab[1], ab[2], ab[3]])?;
    let observed = pb[0];
    let i_abs = (observed - ltp_predict(&d)).abs();
    // judged on raw frequencies so smoothing never manufactures a phase
    let raw_total = counts_ab.iter().sum::<u64>() as f64;
    let raw = conditionals(&counts_ab.map(|k| k as f64 / raw_total))?;
    let (r_a, r_not_a) = crate::projection::realization_weights(&raw);
    let unfit = r_a * r_not_a < UNFIT_THRESHOLD;
    let (theta, fit_feasible) = if unfit {
        (None, false)
    } else {
        let fit = extract_phase(observed, &d, 1e-9)?;
        (Some(fit.theta), fit.feasible)
    };
    let order_effect = 0.5 * ab.iter().zip(&ba).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let total = (2 * cfg.trials) as f64;
    let joint: Vec<Vec<f64>> = memory
        .iter()
        .map(|row| row.iter().map(|&k| k as f64 / total).collect())
        .collect();
    let i_mc = mutual_information(&joint)?;
    Ok(LevelRow {
        m,
        reliability: r,
        i_abs,
        theta,
        fit_feasible,
        unfit,
        order_effect,
        i_mc,
        smoothed,
        p_a: d.p_a,
        p_b_given_a: d.p_b_given_a,
        p_b_given_not_a: d.p_b_given_not_a,
        p_b_observed: observed,
        counts_ab,
        counts_ba,
        counts_b,
    })
}

/// Outcome of checking that `|I|` does not grow with memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// Consecutive levels `(m_k, m_k+1)` where `|I|` went up.
    pub inversions: Vec<(u32, u32)>,
    pub worst_increase: f64,
}

/// Non-increasing `I_abs` across levels, tolerating at most `allowed`
/// increases, each no larger than `slack`.
pub fn check_monotone(levels: &[LevelRow], slack: f64, allowed: usize) -> MonotoneCheck {
    check_monotone_by(levels, |r| r.i_abs, slack, allowed)
}

/// [`check_monotone`] on any per-level quantity, e.g. the order effect.
pub fn check_monotone_by(
    levels: &[LevelRow],
    key: impl Fn(&LevelRow) -> f64,
    slack: f64,
    allowed: usize,
) -> MonotoneCheck {
    let mut inversions = Vec::new();
    let mut worst_increase: f64 = 0.0;
    for w in levels.windows(2) {
        let rise = key(&w[1]) - key(&w[0]);
        if rise > 0.0 {
            inversions.push((w[0].m, w[1].m));
            worst_increase = worst_increase.max(rise);
        }
    }
    MonotoneCheck {
        monotone: inversions.len() <= allowed && worst_increase <= slack,
        inversions,
        worst_increase,
    }
}

/// Default slack for [`check_monotone`]: three binomial standard errors at `trials`.
pub fn sampling_slack(trials: u64) -> f64 {
    3.0 / (trials as f64).sqrt()
}

pub const CSV_HEADER: [&str; 6] =["seed", "m", "I_abs", "theta", "order_effect", "I_MC"];

/// One row per `(seed, m)`; an unfit level leaves `theta` empty.
pub fn report_to_csv_string(r: &TradeoffReport) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for run in &r.runs {
        for row in &run.levels {
            w.write_record([
                run.seed.to_string(),
                row.m.to_string(),
                format!("{:?}", row.i_abs),
                row.theta.map(|t| format!("{t:?}")).unwrap_or_default(),
                format!("{:?}", row.order_effect),
                format!("{:?}", row.i_mc),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes the CSV atomically (temporary file in the target directory, then rename).
pub fn fit_report_to_csv(r: &TradeoffReport, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, report_to_csv_string(r)?.as_bytes())
}

/// Parsed CSV row, for round-trip checks and downstream tooling.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    pub m: u32,
    #[serde(rename = "I_abs")]
    pub i_abs: f64,
    pub theta: Option<f64>,
    pub order_effect: f64,
    #[serde(rename = "I_MC")]
    pub i_mc: f64,
}

pub fn read_report_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
