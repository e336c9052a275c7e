//! Discrete-event simulation of the batch-arrival PS queue and of TLPS.
//!
//! Both disciplines run on one engine with two PS queues. Each queue keeps a
//! virtual clock that advances at rate `1/n` while the queue is served, so a
//! job entering with `w` units of work leaves when the clock reaches
//! `clock_at_entry + w`. Time jumps straight from event to event, and nothing
//! is discretised.
//!
//! - TLPS: a job's first `θ` units go through the high queue, and any
//!   remainder then joins the low queue. The low queue runs only while the high
//!   queue is empty.
//! - BPS: every job goes straight to the low queue (`θ = 0`), and arrivals come
//!   in batches.
//!
//! Replication `r` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `r`.
//! Replications run in parallel and are merged in index order, so results
//! are bit-identical for a given seed and config.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::distributions::HyperExp;
use crate::error::{check_positive, Error, Result};

/// Tail mass at which the geometric batch law is cut off.
pub const GEOMETRIC_TAIL: f64 = 1e-12;

/// Batch-means count used for error bars when there is a single replication.
pub const SINGLE_RUN_BATCHES: usize = 20;

/// Slack allowed on the high-queue service cap, for clock rounding.
const CAP_SLACK: f64 = 1e-9;

/// Law of the number of jobs arriving together.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchLaw {
    /// `(size, probability)`, sizes strictly increasing.
    pmf: Vec<(u32, f64)>,
}

impl BatchLaw {
    pub fn new(mut pmf: Vec<(u32, f64)>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidBatchLaw("empty pmf".into()));
        }
        pmf.sort_by_key(|&(k, _)| k);
        let mut sum = 0.0;
        for (i, &(k, p)) in pmf.iter().enumerate() {
            if k == 0 {
                return Err(Error::InvalidBatchLaw(
                    "batch sizes must be at least 1".into(),
                ));
            }
            if i > 0 && pmf[i - 1].0 == k {
                return Err(Error::InvalidBatchLaw(format!("size {k} listed twice")));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidBatchLaw(format!(
                    "probability {p} for size {k}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidBatchLaw(format!(
                "probabilities sum to {sum}"
            )));
        }
        pmf.retain(|&(_, p)| p > 0.0);
        for e in &mut pmf {
            e.1 /= sum;
        }
        Ok(Self { pmf })
    }

    pub fn deterministic(k: u32) -> Result<Self> {
        Self::new(vec![(k, 1.0)])
    }

    /// Geometric on `{1, 2, …}` with the given mean, truncated once the
    /// remaining tail drops below [`GEOMETRIC_TAIL`].
    pub fn geometric(mean: f64) -> Result<Self> {
        if !(mean >= 1.0 && mean.is_finite()) {
            return Err(Error::InvalidBatchLaw(format!("geometric mean {mean} < 1")));
        }
        let q = 1.0 - 1.0 / mean;
        let mut pmf = Vec::new();
        let (mut k, mut mass, mut tail) = (1u32, 1.0 - q, 1.0);
        while tail > GEOMETRIC_TAIL {
            pmf.push((k, mass));
            tail -= mass;
            mass *= q;
            k += 1;
        }
        let total: f64 = pmf.iter().map(|e| e.1).sum();
        Self::new(pmf.into_iter().map(|(k, p)| (k, p / total)).collect())
    }

    /// Some law with `E[K] = n_bar` and size-biased companion count `b_extra`.
    ///
    /// Uses a deterministic size when that fits. Otherwise it spreads mass
    /// over `{a, a+1, K}`, with `a < n_bar ≤ a+1` and `K` grown until all
    /// three probabilities are nonnegative.
    pub fn realizing(n_bar: f64, b_extra: f64) -> Result<Self> {
        if !(n_bar >= 1.0 && n_bar.is_finite() && b_extra >= 0.0 && b_extra.is_finite()) {
            return Err(Error::InvalidBatchLaw(format!(
                "no batch law with n_bar = {n_bar}, b_extra = {b_extra}"
            )));
        }
        let second = n_bar * (b_extra + 1.0);
        let var = second - n_bar * n_bar;
        let tol = 1e-12 * second;
        if n_bar.fract() == 0.0 && var.abs() <= tol {
            return Self::deterministic(n_bar as u32);
        }
        let a = n_bar.ceil() - 1.0;
        if a < 1.0 {
            return Err(Error::InvalidBatchLaw(format!(
                "n_bar = 1 forces b_extra = 0, got {b_extra}"
            )));
        }
        let f = n_bar - a;
        if var < f * (1.0 - f) - tol {
            return Err(Error::InvalidBatchLaw(format!(
                "b_extra = {b_extra} is below the minimum for n_bar = {n_bar}"
            )));
        }
        // Probabilities on {a, a+1, K} from the three moment equations. The
        // mass on K shrinks like 1/K², so the search stays short.
        for k in (a as u64 + 2)..(a as u64 + 2 + 1_000_000) {
            let kk = k as f64;
            let pk = (var - f * (1.0 - f)) / ((kk - a) * (kk - a - 1.0));
            let p1 = f - pk * (kk - a);
            let p0 = 1.0 - p1 - pk;
            if p0 >= 0.0 && p1 >= 0.0 && pk >= 0.0 {
                return Self::new(vec![(a as u32, p0), (a as u32 + 1, p1), (k as u32, pk)]);
            }
        }
        Err(Error::InvalidBatchLaw(format!(
            "b_extra = {b_extra} too large to realise for n_bar = {n_bar}"
        )))
    }

    pub fn pmf(&self) -> &[(u32, f64)] {
        &self.pmf
    }

    /// `(E[K], (E[K²] - E[K]) / E[K])`.
    pub fn stats(&self) -> (f64, f64) {
        let m1: f64 = self.pmf.iter().map(|&(k, p)| k as f64 * p).sum();
        let m2: f64 = self.pmf.iter().map(|&(k, p)| (k as f64).powi(2) * p).sum();
        (m1, (m2 - m1) / m1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SimScenario {
    Bps {
        lambda: f64,
        batch: BatchLaw,
        service: HyperExp,
    },
    Tlps {
        lambda: f64,
        jobsize: HyperExp,
        theta: f64,
    },
}

impl SimScenario {
    pub fn rho(&self) -> f64 {
        match self {
            Self::Bps {
                lambda,
                batch,
                service,
            } => lambda * batch.stats().0 * service.mean(),
            Self::Tlps {
                lambda, jobsize, ..
            } => lambda * jobsize.mean(),
        }
    }

    fn law(&self) -> &HyperExp {
        match self {
            Self::Bps { service, .. } => service,
            Self::Tlps { jobsize, .. } => jobsize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub scenario: SimScenario,
    /// Arrival index at which a replication stops recording.
    pub horizon: usize,
    /// Leading jobs whose sojourns are discarded.
    pub warmup: usize,
    pub replications: usize,
    pub seed: u64,
    /// Interior bin edges `e_1 < … < e_k`. The bins are `[0, e_1)`, …,
    /// `[e_k, ∞)`.
    pub size_bins: Vec<f64>,
}

impl SimConfig {
    /// One replication, seed 0, a 10% warmup and a single size bin.
    pub fn new(scenario: SimScenario, horizon: usize) -> Self {
        Self {
            scenario,
            horizon,
            warmup: horizon / 10,
            replications: 1,
            seed: 0,
            size_bins: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.scenario {
            SimScenario::Bps { lambda, .. } => check_positive("lambda", *lambda)?,
            SimScenario::Tlps { lambda, theta, .. } => {
                check_positive("lambda", *lambda)?;
                if !(*theta >= 0.0) {
                    return Err(Error::NegativeArgument {
                        name: "theta",
                        value: *theta,
                    });
                }
            }
        }
        let rho = self.scenario.rho();
        if !(rho < 1.0) {
            return Err(Error::UnstableConfig { rho });
        }
        if self.horizon <= self.warmup {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must exceed warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        for (i, &e) in self.size_bins.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidBins(format!(
                    "edge {e} is not positive and finite"
                )));
            }
            if i > 0 && e <= self.size_bins[i - 1] {
                return Err(Error::InvalidBins(
                    "edges must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    fn bin_of(&self, size: f64) -> usize {
        self.size_bins.partition_point(|&e| e <= size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_sojourn: f64,
    pub stderr: f64,
    /// Half-width of the Student-t 95% interval.
    pub ci95: f64,
    pub bins: Vec<BinStat>,
    pub replications: usize,
    pub seed: u64,
    pub jobs: u64,
    pub replication_means: Vec<f64>,
}

impl SimResult {
    /// `|analytic - mean| < k · stderr`.
    pub fn agrees_with(&self, analytic: f64, k: f64) -> bool {
        (analytic - self.mean_sojourn).abs() < k * self.stderr
    }
}

/// Runs `cfg.replications` independent replications and pools them.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let units_per_rep = if cfg.replications == 1 {
        SINGLE_RUN_BATCHES.min(cfg.horizon - cfg.warmup)
    } else {
        1
    };
    let runs: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r as u64, units_per_rep))
        .collect::<Result<_>>()?;
    Ok(pool(cfg, &runs))
}

/// Same as [`simulate`], checking that the scenario is a BPS one.
pub fn simulate_bps(cfg: &SimConfig) -> Result<SimResult> {
    match cfg.scenario {
        SimScenario::Bps { .. } => simulate(cfg),
        _ => Err(Error::InvalidConfig("expected a BPS scenario".into())),
    }
}

/// Same as [`simulate`], checking that the scenario is a TLPS one.
pub fn simulate_tlps(cfg: &SimConfig) -> Result<SimResult> {
    match cfg.scenario {
        SimScenario::Tlps { .. } => simulate(cfg),
        _ => Err(Error::InvalidConfig("expected a TLPS scenario".into())),
    }
}

/// Sums over one error-bar unit (a replication, or a batch of one run).
#[derive(Debug, Clone)]
struct Unit {
    count: u64,
    sum: f64,
    bin_count: Vec<u64>,
    bin_sum: Vec<f64>,
}

impl Unit {
    fn new(bins: usize) -> Self {
        Self {
            count: 0,
            sum: 0.0,
            bin_count: vec![0; bins],
            bin_sum: vec![0.0; bins],
        }
    }
}

struct Replication {
    units: Vec<Unit>,
}

fn pool(cfg: &SimConfig, runs: &[Replication]) -> SimResult {
    let units: Vec<&Unit> = runs.iter().flat_map(|r| r.units.iter()).collect();
    let jobs: u64 = units.iter().map(|u| u.count).sum();
    let (mean, stderr) = ratio_estimate(units.iter().map(|u| (u.count, u.sum)));
    let dof = units.len().saturating_sub(1).max(1) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN);
    let nbins = cfg.size_bins.len() + 1;
    let bins = (0..nbins)
        .map(|b| {
            let (mean, stderr) =
                ratio_estimate(units.iter().map(|u| (u.bin_count[b], u.bin_sum[b])));
            BinStat {
                lo: if b == 0 { 0.0 } else { cfg.size_bins[b - 1] },
                hi: cfg.size_bins.get(b).copied().unwrap_or(f64::INFINITY),
                count: units.iter().map(|u| u.bin_count[b]).sum(),
                mean,
                stderr,
            }
        })
        .collect();
    let replication_means = runs
        .iter()
        .map(|r| {
            let (c, s) = r
                .units
                .iter()
                .fold((0u64, 0.0), |(c, s), u| (c + u.count, s + u.sum));
            s / c as f64
        })
        .collect();
    SimResult {
        mean_sojourn: mean,
        stderr,
        ci95: t * stderr,
        bins,
        replications: cfg.replications,
        seed: cfg.seed,
        jobs,
        replication_means,
    }
}

/// Ratio estimator `Σ s / Σ n` over units, with the usual delta-method error:
/// `sqrt(Σ (s_u - M n_u)² / (U (U - 1))) / n̄`.
fn ratio_estimate(units: impl Iterator<Item = (u64, f64)> + Clone) -> (f64, f64) {
    let u = units.clone().count();
    let n: u64 = units.clone().map(|(c, _)| c).sum();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = units.clone().map(|(_, s)| s).sum::<f64>() / n as f64;
    if u < 2 {
        return (m, f64::NAN);
    }
    let ss: f64 = units.map(|(c, s)| (s - m * c as f64).powi(2)).sum();
    let n_avg = n as f64 / u as f64;
    (m, (ss / (u * (u - 1)) as f64).sqrt() / n_avg)
}

#[derive(Debug, Clone, Copy)]
struct Tag {
    finish: f64,
    seq: u64,
    slot: usize,
}

impl PartialEq for Tag {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Tag {}

impl PartialOrd for Tag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tag {
    fn cmp(&self, other: &Self) -> Ordering {
        self.finish
            .total_cmp(&other.finish)
            .then(self.seq.cmp(&other.seq))
    }
}

/// PS queue on a virtual clock: the attained service of every job present.
#[derive(Debug, Default)]
struct PsQueue {
    clock: f64,
    heap: BinaryHeap<Reverse<Tag>>,
    seq: u64,
}

impl PsQueue {
    fn len(&self) -> usize {
        self.heap.len()
    }

    fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    fn push(&mut self, slot: usize, work: f64) {
        self.seq += 1;
        self.heap.push(Reverse(Tag {
            finish: self.clock + work,
            seq: self.seq,
            slot,
        }));
    }

    /// Real time until the next completion if this queue is the one served.
    fn time_to_completion(&self) -> f64 {
        match self.heap.peek() {
            Some(Reverse(t)) => ((t.finish - self.clock) * self.len() as f64).max(0.0),
            None => f64::INFINITY,
        }
    }

    fn advance(&mut self, dt: f64) {
        if !self.is_empty() {
            self.clock += dt / self.len() as f64;
        }
    }

    fn pop(&mut self) -> usize {
        let Reverse(t) = self.heap.pop().expect("pop from empty queue");
        self.clock = self.clock.max(t.finish);
        if self.heap.is_empty() {
            // Tags are relative to the clock, so an empty queue can restart
            // at zero and keep full precision.
            self.clock = 0.0;
        }
        t.slot
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    arrival: f64,
    size: f64,
    index: usize,
    /// High-queue clock on entry, for the service-cap check.
    high_entry: f64,
}

fn run_replication(cfg: &SimConfig, stream: u64, units_per_rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let (lambda, theta, batch) = match &cfg.scenario {
        SimScenario::Bps { lambda, batch, .. } => (*lambda, 0.0, Some(batch)),
        SimScenario::Tlps { lambda, theta, .. } => (*lambda, *theta, None),
    };
    let law = cfg.scenario.law();
    let batch_sampler = match batch {
        Some(b) if b.pmf().len() > 1 => Some(
            WeightedIndex::new(b.pmf().iter().map(|e| e.1))
                .map_err(|e| Error::InvalidBatchLaw(e.to_string()))?,
        ),
        _ => None,
    };
    let fixed_batch = batch.map_or(1, |b| b.pmf()[0].0);

    let recorded_total = cfg.horizon - cfg.warmup;
    let mut units = vec![Unit::new(cfg.size_bins.len() + 1); units_per_rep];
    let mut recorded = 0usize;

    let mut high = PsQueue::default();
    let mut low = PsQueue::default();
    let mut jobs: Vec<Job> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    let mut next_index = 0usize;

    let exp = |rng: &mut ChaCha8Rng| -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / lambda
    };
    let mut now = 0.0;
    let mut next_arrival = exp(&mut rng);

    while recorded < recorded_total {
        let dt_high = high.time_to_completion();
        let dt_low = if high.is_empty() {
            low.time_to_completion()
        } else {
            f64::INFINITY
        };
        let dt_arrival = next_arrival - now;

        debug_assert_eq!(high.len() + low.len(), jobs.len() - free.len());

        if dt_arrival <= dt_high && dt_arrival <= dt_low {
            let low_clock = low.clock;
            if high.is_empty() {
                low.advance(dt_arrival);
            } else {
                high.advance(dt_arrival);
            }
            debug_assert!(high.is_empty() || low.clock == low_clock);
            now = next_arrival;
            next_arrival = now + exp(&mut rng);

            let k = match &batch_sampler {
                Some(w) => batch.unwrap().pmf()[w.sample(&mut rng)].0,
                None => fixed_batch,
            };
            for _ in 0..k {
                let job = Job {
                    arrival: now,
                    size: law.sample(&mut rng),
                    index: next_index,
                    high_entry: high.clock,
                };
                next_index += 1;
                let slot = match free.pop() {
                    Some(s) => {
                        jobs[s] = job;
                        s
                    }
                    None => {
                        jobs.push(job);
                        jobs.len() - 1
                    }
                };
                if theta > 0.0 {
                    high.push(slot, job.size.min(theta));
                } else {
                    low.push(slot, job.size);
                }
            }
            continue;
        }

        let from_high = dt_high <= dt_low;
        let slot = if from_high {
            let low_clock = low.clock;
            high.advance(dt_high);
            now += dt_high;
            let slot = high.pop();
            debug_assert!(low.clock == low_clock);
            slot
        } else {
            low.advance(dt_low);
            now += dt_low;
            low.pop()
        };
        let job = jobs[slot];
        if from_high {
            // The cap only holds while the clock was not reset, i.e. if other
            // high jobs remain; after a reset, pop() has already checked the tag.
            debug_assert!(high.is_empty() || high.clock - job.high_entry <= theta + CAP_SLACK);
            if job.size > theta {
                low.push(slot, job.size - theta);
                continue;
            }
        }
        free.push(slot);
        if job.index >= cfg.warmup && job.index < cfg.horizon {
            let sojourn = now - job.arrival;
            let u = (job.index - cfg.warmup) * units_per_rep / recorded_total;
            let b = cfg.bin_of(job.size);
            let unit = &mut units[u];
            unit.count += 1;
            unit.sum += sojourn;
            unit.bin_count[b] += 1;
            unit.bin_sum[b] += sojourn;
            recorded += 1;
        }
    }
    Ok(Replication { units })
}
