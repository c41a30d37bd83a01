//! Full runs and Monte Carlo aggregation.
//!
//! Each slot first advances learning by one hop and then resolves the random
//! access channel. The event happens at the start of slot 0, and a critical
//! device that first succeeds in slot `t` records a delay of `t + 1` slots.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytics;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geometry::{self, Adjacency, Deployment, EventPlacement};
use crate::learning::{Decision, Hop, LearningParams, Propagation, Status};
use crate::observe::State;
use crate::rach::{self, ChannelRole, RachState};

/// Event placements tried before a run is rejected.
pub const EVENT_RETRIES: usize = 100;

/// How a critical device got through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessRoute {
    Contention,
    Scheduled,
    /// Never succeeded within the slot budget.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalDelay {
    pub device: u32,
    /// Slots from the event to the first success, or the slot budget when censored.
    pub slots: u64,
    pub route: AccessRoute,
}

impl CriticalDelay {
    pub fn censored(&self) -> bool {
        self.route == AccessRoute::Censored
    }

    pub fn ms(&self, slot_ms: f64) -> f64 {
        self.slots as f64 * slot_ms
    }
}

/// Everything measured in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: u64,
    pub n: usize,
    pub n_a: u32,
    pub h_t: State,
    pub t_min: u64,
    pub max_slots: u64,
    pub slot_ms: f64,
    pub d_th_ms: f64,
    pub delays: Vec<CriticalDelay>,
    /// Fraction of all devices decided on the true state, after each slot.
    pub learned_correct: Vec<f64>,
    /// Decided devices and how many of them decided on the true state.
    pub decided: usize,
    pub decided_correct: usize,
    pub reverts: usize,
}

impl MetricsRecord {
    pub fn threshold_met(&self, delay: &CriticalDelay) -> bool {
        !delay.censored() && delay.ms(self.slot_ms) <= self.d_th_ms + 1e-9
    }

    pub fn peak_learned_correct(&self) -> f64 {
        self.learned_correct.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-slot trace of learning hops.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    pub hops: Vec<(u64, Hop)>,
}

impl Trace {
    /// `slot,sender,receiver,phase,observation,outcome` rows. Seeds have an
    /// empty sender.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "slot,sender,receiver,phase,observation,outcome")?;
        for (slot, hop) in &self.hops {
            let sender = hop.sender.map(|s| s.to_string()).unwrap_or_default();
            let outcome = match (hop.outcome.revert, hop.outcome.decision) {
                (true, _) => "revert".to_string(),
                (false, Some(Decision::Learned(s))) => s.to_string(),
                (false, Some(Decision::Rejected { favored })) => format!("not_{favored}"),
                (false, None) => "relay".to_string(),
            };
            writeln!(
                out,
                "{slot},{sender},{},{},{},{outcome}",
                hop.receiver, hop.phase, hop.observation
            )?;
        }
        Ok(())
    }
}

fn learning_params(cfg: &SimConfig) -> Result<Option<LearningParams>> {
    let Some(k) = cfg.k else { return Ok(None) };
    Ok(Some(LearningParams {
        k,
        alpha: cfg.alpha,
        m: cfg.m,
        block_s: cfg.block_s(),
        block_r: cfg.block_r(),
        revert_pivot: cfg.revert_pivot()?,
        revert_scale: cfg.revert_scale,
    }))
}

/// Contention-free preambles a device reallocates for each learned count.
fn beta_table(cfg: &SimConfig) -> Result<Vec<u32>> {
    let d_th = cfg.d_th();
    (0..=cfg.s_max)
        .map(|s| {
            if s < 2 {
                Ok(0)
            } else {
                Ok(analytics::reallocation_count(cfg.p_c, s, d_th)?.min(cfg.p_f))
            }
        })
        .collect()
}

/// Draws a deployment and an event with at least one and at most `s_max`
/// critical devices.
pub fn draw_scenario(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Deployment, EventPlacement)> {
    let dep = geometry::deploy(cfg.width, cfg.length, cfg.lambda, rng);
    if dep.is_empty() {
        return Err(Error::RunRejected("deployment drew no devices".into()));
    }
    for _ in 0..EVENT_RETRIES {
        let event = geometry::place_event(&dep, cfg.trigger_radius, rng)?;
        if (1..=cfg.s_max).contains(&event.n_a()) {
            return Ok((dep, event));
        }
    }
    Err(Error::RunRejected(format!(
        "no event among {EVENT_RETRIES} placements triggered between 1 and {} devices",
        cfg.s_max
    )))
}

/// One complete run.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<MetricsRecord> {
    run_traced(cfg, seed, None)
}

pub fn run_traced(cfg: &SimConfig, seed: u64, trace: Option<&mut Trace>) -> Result<MetricsRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dep, event) = draw_scenario(cfg, &mut rng)?;
    let adj = geometry::neighbors(&dep, cfg.r_c);
    let mut record = run_scenario(cfg, &dep, &adj, &event, &mut rng, trace)?;
    record.seed = seed;
    Ok(record)
}

/// A run on a fixed deployment and event.
pub fn run_scenario(
    cfg: &SimConfig,
    dep: &Deployment,
    adj: &Adjacency,
    event: &EventPlacement,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Trace>,
) -> Result<MetricsRecord> {
    let n = dep.len();
    let h_t = event.n_a();
    if h_t == 0 {
        return Err(Error::RunRejected(
            "event triggered no critical devices".into(),
        ));
    }
    let model = cfg.observation_model()?;
    if !model.contains(h_t) {
        return Err(Error::RunRejected(format!(
            "{h_t} critical devices exceed the state space 1..={}",
            model.s_max()
        )));
    }
    let rach = RachState {
        split: cfg.split()?,
        schedule: rach::build_schedule(n, cfg.p_f, rng)?,
    };
    let t_min = rach.schedule.t_min();
    let max_slots = cfg.max_slots.unwrap_or(4 * t_min);
    let betas = beta_table(cfg)?;
    let params = learning_params(cfg)?;
    let dist: Vec<f64> = dep
        .positions
        .iter()
        .map(|p| p.distance(&event.site.position))
        .collect();
    let observe = |dev: u32, r: &mut ChaCha8Rng| model.sample(dist[dev as usize], h_t, r);

    let mut propagation = params.map(|p| Propagation::new(n, p));
    let mut beta = vec![0u32; n];
    let mut pending = vec![false; n];
    for &c in &event.critical {
        pending[c as usize] = true;
    }
    let mut waiting: Vec<u32> = event.critical.clone();
    let mut delays = Vec::with_capacity(waiting.len());

    let mut correct = 0usize;
    let mut decided = 0usize;
    let mut reverts = 0usize;
    let mut last_change = 0u64;
    let mut learned_correct = Vec::new();
    let mut intents: Vec<(u32, u32)> = Vec::new();

    for slot in 0..max_slots {
        if let Some(prop) = propagation.as_mut() {
            let hops = if slot == 0 {
                prop.seed(&event.critical, observe, rng)?
            } else {
                prop.propagate(adj, observe, rng)?
            };
            for hop in &hops {
                reverts += usize::from(hop.outcome.revert);
                if let Some(d) = hop.outcome.decision {
                    debug_assert_eq!(prop.status(hop.receiver as usize), Status::Decided(d));
                    decided += 1;
                    last_change = slot;
                    if let Some(s) = d.estimate() {
                        beta[hop.receiver as usize] = betas[s as usize];
                        if s == h_t {
                            correct += 1;
                        }
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.hops.extend(hops.into_iter().map(|h| (slot, h)));
            }
        }

        intents.clear();
        for &dev in rach.schedule.due(slot) {
            if pending[dev as usize] {
                continue;
            }
            let role = ChannelRole {
                critical: false,
                beta: beta[dev as usize],
            };
            if let Some(p) = rach.device_intent(dev as usize, role, slot, rng) {
                intents.push((dev, p));
            }
        }
        for &dev in &waiting {
            let role = ChannelRole {
                critical: true,
                beta: beta[dev as usize],
            };
            let p = rach
                .device_intent(dev as usize, role, slot, rng)
                .expect("critical devices always transmit");
            intents.push((dev, p));
        }
        let outcome = rach::resolve_slot(&intents);
        debug_assert_eq!(
            outcome.successes.len() + outcome.collided_intents + (n - intents.len()),
            n
        );
        for &(dev, preamble) in &outcome.successes {
            if pending[dev as usize] {
                pending[dev as usize] = false;
                let route = if rach.schedule.is_due(dev as usize, slot)
                    && preamble == rach.assigned_preamble(dev as usize)
                {
                    AccessRoute::Scheduled
                } else {
                    AccessRoute::Contention
                };
                delays.push(CriticalDelay {
                    device: dev,
                    slots: slot + 1,
                    route,
                });
            }
        }
        waiting.retain(|&d| pending[d as usize]);
        learned_correct.push(correct as f64 / n as f64);

        let quiet = propagation.as_ref().is_none_or(|p| p.is_quiescent());
        if !cfg.run_to_budget && waiting.is_empty() && (quiet || slot - last_change >= t_min) {
            break;
        }
    }
    for dev in waiting {
        delays.push(CriticalDelay {
            device: dev,
            slots: max_slots,
            route: AccessRoute::Censored,
        });
    }
    delays.sort_by_key(|d| d.device);

    Ok(MetricsRecord {
        seed: 0,
        n,
        n_a: h_t,
        h_t,
        t_min,
        max_slots,
        slot_ms: cfg.slot_ms,
        d_th_ms: cfg.d_th_ms,
        delays,
        learned_correct,
        decided,
        decided_correct: correct,
        reverts,
    })
}

/// Seed of run `index` under `master`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(index))
}

/// Pooled statistics over many runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: u32,
    pub master_seed: u64,
    pub d_th_ms: f64,
    /// Every critical delay across runs in milliseconds, ascending. Censored
    /// delays sit at their run's slot budget.
    pub delays_ms: Vec<f64>,
    pub censored: usize,
    /// Delays that met the target.
    pub met: usize,
    /// NaN when every delay was censored.
    pub mean_uncensored_ms: f64,
    /// Pointwise mean over runs; a run that stopped early holds its last value.
    pub mean_learned_correct: Vec<f64>,
    pub slot_ms: f64,
    pub decided: usize,
    pub decided_correct: usize,
}

impl Aggregate {
    pub fn from_records(records: &[MetricsRecord], master_seed: u64) -> Self {
        let slot_ms = records.first().map_or(0.25, |r| r.slot_ms);
        let d_th_ms = records.first().map_or(0.0, |r| r.d_th_ms);
        let mut delays_ms: Vec<f64> = records
            .iter()
            .flat_map(|r| r.delays.iter().map(|d| d.ms(r.slot_ms)))
            .collect();
        delays_ms.sort_by(f64::total_cmp);
        let censored = records
            .iter()
            .flat_map(|r| &r.delays)
            .filter(|d| d.censored())
            .count();
        let met = records
            .iter()
            .map(|r| r.delays.iter().filter(|d| r.threshold_met(d)).count())
            .sum();
        let uncensored: Vec<f64> = records
            .iter()
            .flat_map(|r| {
                r.delays
                    .iter()
                    .filter(|d| !d.censored())
                    .map(|d| d.ms(r.slot_ms))
            })
            .collect();
        let mean_uncensored_ms = if uncensored.is_empty() {
            f64::NAN
        } else {
            uncensored.iter().sum::<f64>() / uncensored.len() as f64
        };
        let len = records
            .iter()
            .map(|r| r.learned_correct.len())
            .max()
            .unwrap_or(0);
        let mut mean = vec![0.0; len];
        for r in records {
            let last = r.learned_correct.last().copied().unwrap_or(0.0);
            for (i, m) in mean.iter_mut().enumerate() {
                *m += r.learned_correct.get(i).copied().unwrap_or(last);
            }
        }
        for m in &mut mean {
            *m /= records.len().max(1) as f64;
        }
        Aggregate {
            runs: records.len() as u32,
            master_seed,
            d_th_ms,
            delays_ms,
            censored,
            met,
            mean_uncensored_ms,
            mean_learned_correct: mean,
            slot_ms,
            decided: records.iter().map(|r| r.decided).sum(),
            decided_correct: records.iter().map(|r| r.decided_correct).sum(),
        }
    }

    pub fn samples(&self) -> usize {
        self.delays_ms.len()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.samples().max(1) as f64
    }

    /// Fraction of pooled delays at or below `d_ms`.
    pub fn cdf_at(&self, d_ms: f64) -> f64 {
        let below = self.delays_ms.partition_point(|&d| d <= d_ms + 1e-9);
        below as f64 / self.samples().max(1) as f64
    }

    /// Fraction of critical messages that met the delay target. Censored
    /// delays never count as met.
    pub fn threshold_satisfaction(&self) -> f64 {
        self.met as f64 / self.samples().max(1) as f64
    }

    /// Mean of the uncensored delays in milliseconds.
    pub fn mean_delay_ms(&self) -> f64 {
        self.mean_uncensored_ms
    }

    /// Step points `(delay_ms, cumulative_probability)` at each distinct delay.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let total = self.samples() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &d) in self.delays_ms.iter().enumerate() {
            let p = (i + 1) as f64 / total;
            match out.last_mut() {
                Some(last) if last.0 == d => last.1 = p,
                _ => out.push((d, p)),
            }
        }
        out
    }

    /// Highest mean learned-correct fraction, as a percentage.
    pub fn peak_learned_correct_pct(&self) -> f64 {
        100.0
            * self
                .mean_learned_correct
                .iter()
                .copied()
                .fold(0.0, f64::max)
    }

    pub fn decided_correct_fraction(&self) -> f64 {
        self.decided_correct as f64 / self.decided.max(1) as f64
    }
}

/// Runs `runs` independent replications. Run `i` uses
/// [`run_seed`]`(master_seed, i)`, so the result does not depend on
/// `parallel`.
pub fn monte_carlo(
    cfg: &SimConfig,
    runs: u32,
    master_seed: u64,
    parallel: usize,
) -> Result<Aggregate> {
    let records = run_many(cfg, runs, master_seed, parallel)?;
    Ok(Aggregate::from_records(&records, master_seed))
}

pub fn run_many(
    cfg: &SimConfig,
    runs: u32,
    master_seed: u64,
    parallel: usize,
) -> Result<Vec<MetricsRecord>> {
    if runs == 0 {
        return Err(Error::Config {
            rule: "runs",
            detail: "at least one run is required".into(),
        });
    }
    cfg.validate()?;
    let one = |i: u32| run(cfg, run_seed(master_seed, i as u64));
    if parallel <= 1 {
        return (0..runs).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::RunRejected(format!("worker pool: {e}")))?;
    pool.install(|| (0..runs).into_par_iter().map(one).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn small() -> SimConfig {
        SimConfig {
            width: 25.0,
            length: 25.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small();
        assert_eq!(run(&cfg, 42).unwrap(), run(&cfg, 42).unwrap());
        assert_ne!(run(&cfg, 42).unwrap(), run(&cfg, 43).unwrap());
    }

    #[test]
    fn single_critical_device_succeeds_at_once() {
        let cfg = SimConfig {
            p_c: 2,
            p_f: 62,
            ..small()
        };
        let positions = vec![
            Point::new(5.0, 5.0),
            Point::new(20.0, 20.0),
            Point::new(6.0, 5.0),
        ];
        let dep = Deployment::from_positions(25.0, 25.0, positions);
        let adj = geometry::neighbors(&dep, cfg.r_c);
        let event = geometry::event_at(&dep, Point::new(5.0, 5.0), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = run_scenario(&cfg, &dep, &adj, &event, &mut rng, None).unwrap();
        assert_eq!(rec.delays.len(), 1);
        assert_eq!(rec.delays[0].slots, 1);
        assert!((rec.delays[0].ms(cfg.slot_ms) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_scenario_without_critical_devices() {
        let cfg = small();
        let dep = Deployment::from_positions(25.0, 25.0, vec![Point::new(1.0, 1.0)]);
        let adj = geometry::neighbors(&dep, cfg.r_c);
        let event = geometry::event_at(&dep, Point::new(20.0, 20.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = run_scenario(&cfg, &dep, &adj, &event, &mut rng, None).unwrap_err();
        assert!(matches!(err, Error::RunRejected(_)));
    }

    #[test]
    fn zero_trigger_radius_is_rejected() {
        let cfg = SimConfig {
            trigger_radius: 0.0,
            ..small()
        };
        assert!(matches!(run(&cfg, 1), Err(Error::RunRejected(_))));
    }

    #[test]
    fn metrics_are_consistent() {
        let cfg = small();
        for seed in 0..20 {
            let rec = run(&cfg, seed).unwrap();
            assert_eq!(rec.delays.len() as u32, rec.n_a);
            assert!(rec.learned_correct.iter().all(|f| (0.0..=1.0).contains(f)));
            assert!(rec.decided_correct <= rec.decided && rec.decided <= rec.n);
            for d in &rec.delays {
                assert!(d.slots >= 1 && d.slots <= rec.max_slots);
                if d.route == AccessRoute::Scheduled {
                    assert!(d.slots - 1 < rec.max_slots);
                }
            }
        }
    }

    #[test]
    fn run_to_budget_uses_every_slot() {
        let cfg = SimConfig {
            run_to_budget: true,
            ..small()
        };
        let rec = run(&cfg, 4).unwrap();
        assert_eq!(rec.learned_correct.len() as u64, rec.max_slots);
        assert_eq!(rec.max_slots, 4 * rec.t_min);
        let early = run(&small(), 4).unwrap();
        assert!(early.learned_correct.len() as u64 <= rec.max_slots);
        assert_eq!(early.delays, rec.delays);
    }

    #[test]
    fn trace_rows() {
        let cfg = small();
        let mut trace = Trace::default();
        let rec = run_traced(&cfg, 5, Some(&mut trace)).unwrap();
        let seeds = trace
            .hops
            .iter()
            .filter(|(_, h)| h.sender.is_none())
            .count();
        assert_eq!(seeds as u32, rec.n_a);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("slot,sender,receiver,phase,observation,outcome\n"));
        assert_eq!(text.lines().count(), trace.hops.len() + 1);
    }

    #[test]
    fn aggregate_of_single_run() {
        let cfg = small();
        let rec = run(&cfg, run_seed(9, 0)).unwrap();
        let agg = monte_carlo(&cfg, 1, 9, 1).unwrap();
        assert_eq!(agg.samples(), rec.delays.len());
        let met = rec.delays.iter().filter(|d| rec.threshold_met(d)).count();
        assert!(
            (agg.threshold_satisfaction() - met as f64 / rec.delays.len() as f64).abs() < 1e-12
        );
        assert!(
            (agg.peak_learned_correct_pct() - 100.0 * rec.peak_learned_correct()).abs() < 1e-12
        );
    }

    #[test]
    fn monte_carlo_ignores_parallelism() {
        let cfg = small();
        let a = monte_carlo(&cfg, 6, 3, 1).unwrap();
        let b = monte_carlo(&cfg, 6, 3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cdf_ends_at_one_and_matches_satisfaction() {
        let cfg = small();
        let agg = monte_carlo(&cfg, 5, 1, 1).unwrap();
        let cdf = agg.cdf();
        assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert!(
            (agg.cdf_at(agg.d_th_ms) - agg.threshold_satisfaction()).abs()
                <= 1.0 / agg.samples() as f64
        );
    }
}
