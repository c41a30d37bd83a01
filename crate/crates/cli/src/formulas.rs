//! `analytics` subcommand: closed-form queries.

use clap::{Args, Subcommand};

use rachlearn_core::analytics::{self, DelaySlots, PreambleSplit, RunStats};

use crate::error::{CliError, Result};

#[derive(Debug, Subcommand)]
pub enum Formula {
    /// Shortest period that gives every device a contention-free slot.
    MinPeriod {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p_f: u32,
    },
    /// Success probability of a periodic message on the contention pool.
    PeriodicSuccess {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        n_p: f64,
    },
    /// Single-slot success probability of a critical message.
    CriticalSuccess {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        n_a: u32,
    },
    /// Expected delay over the contention pool.
    ContentionDelay {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        n_a: u32,
        #[command(flatten)]
        unit: SlotUnit,
    },
    /// Expected wait for the scheduled contention-free slot.
    ContentionFreeDelay {
        #[arg(long)]
        t_min: u64,
        #[command(flatten)]
        unit: SlotUnit,
    },
    /// Expected delay once `beta` preambles are reallocated.
    PostLearningDelay {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        p_f: u32,
        #[arg(long)]
        beta: u32,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        n_a: u32,
        #[command(flatten)]
        unit: SlotUnit,
    },
    /// Smallest number of preambles to reallocate to meet a delay target.
    Realloc {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        n_a: u32,
        #[arg(long, required_unless_present = "d_th_slots")]
        d_th_ms: Option<f64>,
        #[arg(long, conflicts_with = "d_th_ms")]
        d_th_slots: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        slot_ms: f64,
    },
    /// Probability of an unfavored run of length alpha within n_e observations.
    RunProbability {
        #[arg(long)]
        n_e: u32,
        #[arg(long)]
        alpha: u32,
        #[arg(long)]
        p: f64,
    },
    /// Expected observations until an unfavored run of length alpha.
    ExpectedReturnTime {
        #[arg(long)]
        alpha: u32,
        #[arg(long)]
        p: f64,
    },
    /// Revert probability after n_e second-phase observations.
    RevertProbability {
        #[arg(long)]
        n_e: f64,
        #[arg(long)]
        pivot: f64,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
    },
    /// Detection radius extended by the memory.
    EffectiveRadius {
        #[arg(long)]
        r_d: f64,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        r_c: f64,
    },
    /// Expected correctly learned devices among one slot's scheduled group.
    LearnedCount {
        #[arg(long)]
        t: u64,
        #[arg(long)]
        r_c: f64,
        #[arg(long)]
        r_d_eff: f64,
        #[arg(long)]
        p_f: u32,
        #[arg(long)]
        area: f64,
    },
    /// Distribution of preambles actually freed, one `b,probability` row per value.
    ReallocPmf {
        #[arg(long)]
        n_t: u32,
        #[arg(long)]
        p_f: u32,
        #[arg(long)]
        beta: u32,
    },
    /// Expected number of preambles actually freed.
    ExpectedRealloc {
        #[arg(long)]
        n_t: u32,
        #[arg(long)]
        p_f: u32,
        #[arg(long)]
        beta: u32,
    },
    /// Lowest expected delay with an expected number of freed preambles.
    LowestExpectedDelay {
        #[arg(long)]
        p_c: u32,
        #[arg(long)]
        e_beta: f64,
        #[arg(long)]
        n_a: u32,
        #[command(flatten)]
        unit: SlotUnit,
    },
}

#[derive(Debug, Args)]
pub struct SlotUnit {
    /// Report milliseconds with this slot duration instead of slots.
    #[arg(long)]
    slot_ms: Option<f64>,
}

impl SlotUnit {
    fn show(&self, d: DelaySlots) -> String {
        match self.slot_ms {
            Some(ms) => format!("{} ms", fmt(d.to_ms(ms))),
            None => format!("{} slots", fmt(d.value())),
        }
    }
}

fn fmt(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        let s = format!("{x:.10}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

pub fn evaluate(formula: &Formula) -> Result<String> {
    let out = match *formula {
        Formula::MinPeriod { n, p_f } => format!("T_min = {}", analytics::min_period(n, p_f)?),
        Formula::PeriodicSuccess { p_c, n_p } => fmt(analytics::periodic_success_prob(p_c, n_p)?),
        Formula::CriticalSuccess { p_c, n_a } => fmt(analytics::critical_success_prob(p_c, n_a)?),
        Formula::ContentionDelay { p_c, n_a, ref unit } => {
            unit.show(analytics::contention_delay(p_c, n_a)?)
        }
        Formula::ContentionFreeDelay { t_min, ref unit } => {
            unit.show(analytics::contention_free_delay(t_min)?)
        }
        Formula::PostLearningDelay {
            p_c,
            p_f,
            beta,
            n,
            n_a,
            ref unit,
        } => {
            let split = PreambleSplit::new(p_c, p_f)?;
            unit.show(analytics::post_learning_delay(split, beta, n, n_a)?)
        }
        Formula::Realloc {
            p_c,
            n_a,
            d_th_ms,
            d_th_slots,
            slot_ms,
        } => {
            let d_th = match (d_th_slots, d_th_ms) {
                (Some(slots), _) => DelaySlots::new(slots),
                (None, Some(ms)) => analytics::slots_from_ms(ms, slot_ms),
                (None, None) => return Err(CliError::Usage("a delay target is required".into())),
            };
            format!("β = {}", analytics::reallocation_count(p_c, n_a, d_th)?)
        }
        Formula::RunProbability { n_e, alpha, p } => {
            fmt(analytics::run_probability(n_e, RunStats::new(alpha, p)?))
        }
        Formula::ExpectedReturnTime { alpha, p } => {
            fmt(analytics::expected_return_time(RunStats::new(alpha, p)?))
        }
        Formula::RevertProbability { n_e, pivot, scale } => {
            fmt(analytics::revert_probability(n_e, pivot, scale)?)
        }
        Formula::EffectiveRadius { r_d, m, r_c } => {
            format!(
                "{} m",
                fmt(analytics::effective_detection_radius(r_d, m, r_c)?)
            )
        }
        Formula::LearnedCount {
            t,
            r_c,
            r_d_eff,
            p_f,
            area,
        } => fmt(analytics::learned_count(t, r_c, r_d_eff, p_f, area)?),
        Formula::ReallocPmf { n_t, p_f, beta } => {
            let mut rows = vec!["b,probability".to_string()];
            for b in 0..=beta {
                rows.push(format!(
                    "{b},{}",
                    fmt(analytics::realloc_pmf(n_t, p_f, beta, b)?)
                ));
            }
            rows.join("\n")
        }
        Formula::ExpectedRealloc { n_t, p_f, beta } => {
            format!(
                "E[β_t] = {}",
                fmt(analytics::expected_realloc(n_t, p_f, beta)?)
            )
        }
        Formula::LowestExpectedDelay {
            p_c,
            e_beta,
            n_a,
            ref unit,
        } => unit.show(analytics::lowest_expected_delay(p_c, e_beta, n_a)?),
    };
    Ok(out)
}
