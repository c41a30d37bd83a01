//! Experiment parameters.

use serde::{Deserialize, Serialize};

use crate::analytics::{self, DelaySlots, PreambleSplit, RunStats};
use crate::error::{Error, Result};
use crate::observe::{ObservationModel, PROB_EPS};

/// Master seed used when none is given.
pub const DEFAULT_MASTER_SEED: u64 = 20_190_611;

/// Drops float noise such as `1 - 0.9 = 0.09999999999999998` from messages.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Every parameter of one experiment point.
///
/// Missing keys take the defaults of [`SimConfig::default`]; unknown keys
/// are rejected when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Deployment width in meters.
    pub width: f64,
    /// Deployment length in meters.
    pub length: f64,
    /// Device density per square meter.
    pub lambda: f64,
    /// Device-to-device communication range in meters.
    pub r_c: f64,
    /// Detection range around the event in meters.
    pub r_d: f64,
    /// Devices within this distance of the event carry critical messages.
    pub trigger_radius: f64,
    pub slot_ms: f64,
    /// Total preamble count.
    pub p: u32,
    pub p_c: u32,
    pub p_f: u32,
    /// Observations needed to choose a favored state. `None` disables
    /// learning altogether.
    pub k: Option<u32>,
    /// Unfavored run length that arms a revert.
    pub alpha: u32,
    /// Memory budget in bits.
    pub m: u32,
    /// S-block length; defaults to `alpha`.
    pub block_s: Option<u32>,
    /// R-block length; defaults to `alpha`.
    pub block_r: Option<u32>,
    /// Detection probability inside the detection range.
    pub p_11: f64,
    /// Missed-detection probability outside the detection range.
    pub p_01_outside: f64,
    /// Largest candidate number of critical messages.
    pub s_max: u32,
    /// Delay target in milliseconds.
    pub d_th_ms: f64,
    /// Revert sigmoid scale.
    pub revert_scale: f64,
    /// Revert sigmoid pivot; derived from the run curves when absent.
    pub revert_pivot: Option<f64>,
    /// Slot budget per run; `4 * T_min` when absent.
    pub max_slots: Option<u64>,
    /// Keep running to the slot budget after the stop rule fires.
    pub run_to_budget: bool,
    pub runs: u32,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width: 100.0,
            length: 100.0,
            lambda: 2.0,
            r_c: 2.0,
            r_d: 10.0,
            trigger_radius: 1.0,
            slot_ms: 0.25,
            p: 64,
            p_c: 1,
            p_f: 63,
            k: Some(3),
            alpha: 5,
            m: 5,
            block_s: None,
            block_r: None,
            p_11: 0.9,
            p_01_outside: 0.9,
            s_max: 20,
            d_th_ms: 2.5,
            revert_scale: 0.5,
            revert_pivot: None,
            max_slots: None,
            run_to_budget: false,
            runs: 200,
            master_seed: DEFAULT_MASTER_SEED,
        }
    }
}

/// Outcome of checking a single configuration rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleCheck {
    pub rule: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SimConfig {
    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    /// `w * l * lambda`, the mean device count.
    pub fn expected_devices(&self) -> f64 {
        self.area() * self.lambda
    }

    pub fn split(&self) -> Result<PreambleSplit> {
        PreambleSplit::new(self.p_c, self.p_f)
    }

    pub fn d_th(&self) -> DelaySlots {
        analytics::slots_from_ms(self.d_th_ms, self.slot_ms)
    }

    pub fn p_01_inside(&self) -> f64 {
        1.0 - self.p_11
    }

    pub fn block_s(&self) -> u32 {
        self.block_s.unwrap_or(self.alpha)
    }

    pub fn block_r(&self) -> u32 {
        self.block_r.unwrap_or(self.alpha)
    }

    pub fn observation_model(&self) -> Result<ObservationModel> {
        ObservationModel::new(self.s_max, self.p_01_inside(), self.p_01_outside, self.r_d)
    }

    /// Revert pivot: the configured override, or the first observation count
    /// separating the wrong-state and right-state run curves of an
    /// in-range observer.
    pub fn revert_pivot(&self) -> Result<f64> {
        if let Some(a) = self.revert_pivot {
            return Ok(a);
        }
        let model = self.observation_model()?;
        let p_right = 1.0 - model.p_01_inside();
        let p_wrong = model.p_01_inside() / (model.s_max() - 1) as f64;
        let wrong = RunStats::new(self.alpha, p_wrong)?;
        let right = RunStats::new(self.alpha, p_right)?;
        Ok(analytics::default_revert_pivot(self.alpha, wrong, right) as f64)
    }

    /// Checks every rule and reports each one.
    pub fn rule_checks(&self) -> Vec<RuleCheck> {
        let mut out = Vec::new();
        let mut rule = |rule: &'static str, passed: bool, detail: String| {
            out.push(RuleCheck {
                rule,
                passed,
                detail,
            })
        };
        rule(
            "geometry",
            self.width > 0.0 && self.length > 0.0 && self.lambda > 0.0,
            format!(
                "w = {}, l = {}, lambda = {}",
                self.width, self.length, self.lambda
            ),
        );
        rule(
            "radii",
            self.r_c > 0.0 && self.r_d > 0.0 && self.trigger_radius >= 0.0,
            format!(
                "r_c = {}, r_d = {}, trigger = {}",
                self.r_c, self.r_d, self.trigger_radius
            ),
        );
        rule(
            "slot_duration",
            self.slot_ms > 0.0,
            format!("slot = {} ms", self.slot_ms),
        );
        rule(
            "preamble_sum",
            self.p_c.checked_add(self.p_f) == Some(self.p),
            format!("p_c + p_f = {} + {} vs p = {}", self.p_c, self.p_f, self.p),
        );
        rule(
            "contention_pool",
            self.p_c >= 1,
            format!("p_c = {}", self.p_c),
        );
        rule(
            "contention_free_pool",
            self.p_f >= 1,
            format!("p_f = {}", self.p_f),
        );
        rule(
            "first_phase_length",
            self.k.is_none_or(|k| k >= 1),
            match self.k {
                Some(k) => format!("K = {k}"),
                None => "learning disabled".into(),
            },
        );
        rule(
            "run_length",
            self.alpha >= 1,
            format!("alpha = {}", self.alpha),
        );
        rule("memory", self.m >= 2, format!("m = {}", self.m));
        rule(
            "block_lengths",
            self.block_s() >= 1 && self.block_r() >= 1,
            format!("L_S = {}, L_R = {}", self.block_s(), self.block_r()),
        );
        let inside = self.p_01_inside();
        rule(
            "detection_probabilities",
            inside > 0.0 && inside <= self.p_01_outside + PROB_EPS && self.p_01_outside < 1.0,
            format!(
                "need 0 < p_01 = {} <= p_01' = {} < 1",
                tidy(inside),
                self.p_01_outside
            ),
        );
        rule(
            "state_space",
            self.s_max >= 2,
            format!("S_max = {}", self.s_max),
        );
        let d_th = self.d_th().value();
        rule(
            "threshold_feasible",
            d_th > 1.0,
            format!(
                "D_th = {} ms = {} slots, must exceed 1 slot",
                self.d_th_ms, d_th
            ),
        );
        rule(
            "revert_scale",
            self.revert_scale > 0.0 && self.revert_scale <= 0.5,
            format!("C = {}", self.revert_scale),
        );
        rule(
            "max_slots",
            self.max_slots.is_none_or(|s| s >= 1),
            match self.max_slots {
                Some(s) => format!("max slots = {s}"),
                None => "max slots = 4 T_min".into(),
            },
        );
        rule("runs", self.runs >= 1, format!("runs = {}", self.runs));
        out
    }

    /// Fails on the first violated rule.
    pub fn validate(&self) -> Result<()> {
        match self.rule_checks().into_iter().find(|c| !c.passed) {
            Some(c) => Err(Error::Config {
                rule: c.rule,
                detail: c.detail,
            }),
            None => Ok(()),
        }
    }
}
