//! Two-phase finite-memory multi-state sequential learning.
//!
//! A learning sequence starts at a device that observed the event. In the
//! first phase each hop appends its own multi-state observation until `K`
//! observations have accumulated; that device picks the favored state by
//! majority count and starts the second phase. Second-phase hops carry the
//! last `m - 2` binarized observations plus the favored-hypothesis bit `F`
//! and the block-progress bit `Q`, and each hop runs one step of the
//! alternating S/R block test. A run of `alpha` unfavored private beliefs
//! arms a probabilistic revert to the first phase.
//!
//! [`Propagation`] moves messages one hop per call across an [`Adjacency`].

use rand::Rng;

use crate::analytics;
use crate::error::{Error, Result};
use crate::geometry::Adjacency;
use crate::observe::{binarize, State};

/// Protocol constants shared by every device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub k: u32,
    pub alpha: u32,
    pub m: u32,
    pub block_s: u32,
    pub block_r: u32,
    pub revert_pivot: f64,
    pub revert_scale: f64,
}

impl LearningParams {
    fn window_len(&self) -> usize {
        self.m.saturating_sub(2) as usize
    }

    fn block_len(&self, block: Block) -> u32 {
        match block {
            Block::S => self.block_s,
            Block::R => self.block_r,
        }
    }
}

/// Which flip the current block is testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Tests whether `F` should move from unfavored to favored.
    S,
    /// Tests whether `F` should move from favored to unfavored.
    R,
}

impl Block {
    fn other(self) -> Block {
        match self {
            Block::S => Block::R,
            Block::R => Block::S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstPhaseMsg {
    /// Multi-state observations so far, oldest first.
    pub window: Vec<State>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecondPhaseMsg {
    /// The last `m - 2` binary observations, oldest first.
    pub window: Vec<u8>,
    pub favored: State,
    /// Favored-hypothesis bit.
    pub f: bool,
    /// Whether every belief so far in the current block supports its flip.
    pub q: bool,
    pub block: Block,
    pub block_pos: u32,
    /// Consecutive unfavored beliefs, saturating at `alpha`.
    pub run_count: u32,
    /// Second-phase hops so far.
    pub n_e: u32,
}

impl SecondPhaseMsg {
    /// Bits of the protocol payload proper: observations, `F`, and `Q`.
    /// The counters ride alongside and are not part of this budget.
    pub fn payload_bits(&self) -> usize {
        self.window.len() + 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearningMessage {
    First(FirstPhaseMsg),
    Second(SecondPhaseMsg),
}

impl LearningMessage {
    pub fn phase(&self) -> u8 {
        match self {
            LearningMessage::First(_) => 1,
            LearningMessage::Second(_) => 2,
        }
    }

    /// An empty first-phase message, used to start a sequence.
    pub fn seed() -> Self {
        LearningMessage::First(FirstPhaseMsg { window: Vec::new() })
    }
}

/// A device's final conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// The device believes this many critical messages exist.
    Learned(State),
    /// The device rejected the favored state and has no alternative value.
    Rejected { favored: State },
}

impl Decision {
    /// The number of critical messages the device acts on, if any.
    pub fn estimate(&self) -> Option<State> {
        match *self {
            Decision::Learned(s) => Some(s),
            Decision::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnOutcome {
    pub decision: Option<Decision>,
    pub forward: Option<LearningMessage>,
    /// A new first-phase sequence starts at this device.
    pub revert: bool,
}

impl LearnOutcome {
    pub fn decided(&self) -> bool {
        self.decision.is_some()
    }
}

/// Majority state; ties go to the larger state.
pub fn choose_favored(observations: &[State]) -> State {
    assert!(!observations.is_empty(), "no observations to choose from");
    let mut sorted = observations.to_vec();
    sorted.sort_unstable();
    let mut best = (0usize, sorted[0]);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&s| s == sorted[i]).count();
        if j >= best.0 {
            best = (j, sorted[i]);
        }
        i += j;
    }
    best.1
}

/// Favored (1) when any of the window bits or the own bit is 1.
pub fn private_belief(window: &[u8], own: u8) -> u8 {
    u8::from(own == 1 || window.contains(&1))
}

fn second_phase_seed(
    observations: &[State],
    favored: State,
    params: &LearningParams,
) -> SecondPhaseMsg {
    let len = params.window_len();
    let bits: Vec<u8> = observations.iter().map(|&e| binarize(e, favored)).collect();
    let mut window = vec![0u8; len.saturating_sub(bits.len())];
    window.extend_from_slice(&bits[bits.len().saturating_sub(len)..]);
    SecondPhaseMsg {
        window,
        favored,
        f: true,
        q: false,
        block: Block::R,
        block_pos: 0,
        run_count: 0,
        n_e: 0,
    }
}

/// One first-phase hop.
pub fn phase1_step(
    msg: &LearningMessage,
    own: State,
    params: &LearningParams,
) -> Result<LearnOutcome> {
    let LearningMessage::First(first) = msg else {
        return Err(Error::Protocol(
            "second-phase message handed to a first-phase step".into(),
        ));
    };
    let k = params.k as usize;
    if first.window.len() >= k {
        return Err(Error::Protocol(format!(
            "first-phase window already holds {} of {k} observations",
            first.window.len()
        )));
    }
    let mut window = first.window.clone();
    window.push(own);
    if window.len() < k {
        return Ok(LearnOutcome {
            decision: None,
            forward: Some(LearningMessage::First(FirstPhaseMsg { window })),
            revert: false,
        });
    }
    let favored = choose_favored(&window);
    Ok(LearnOutcome {
        decision: Some(Decision::Learned(favored)),
        forward: Some(LearningMessage::Second(second_phase_seed(
            &window, favored, params,
        ))),
        revert: false,
    })
}

/// One second-phase hop.
pub fn phase2_step<R: Rng + ?Sized>(
    msg: &LearningMessage,
    own: State,
    params: &LearningParams,
    rng: &mut R,
) -> Result<LearnOutcome> {
    let LearningMessage::Second(prev) = msg else {
        return Err(Error::Protocol(
            "first-phase message handed to a second-phase step".into(),
        ));
    };
    let own_bit = binarize(own, prev.favored);
    let belief = private_belief(&prev.window, own_bit);
    let mut next = prev.clone();

    next.run_count = if belief == 0 {
        (prev.run_count + 1).min(params.alpha)
    } else {
        0
    };

    let supports = match prev.block {
        Block::S => belief == 1,
        Block::R => belief == 0,
    };
    next.q = if prev.block_pos == 0 {
        supports
    } else {
        prev.q && supports
    };
    next.block_pos = prev.block_pos + 1;
    if next.block_pos >= params.block_len(prev.block) {
        if next.q {
            next.f = prev.block == Block::S;
        }
        next.block = prev.block.other();
        next.block_pos = 0;
        next.q = false;
    }
    next.n_e = prev.n_e + 1;

    if next.run_count >= params.alpha {
        let p_b = analytics::revert_probability(
            next.n_e as f64,
            params.revert_pivot,
            params.revert_scale,
        )?;
        if rng.random::<f64>() < p_b {
            let mut restart = phase1_step(&LearningMessage::seed(), own, params)?;
            restart.revert = true;
            return Ok(restart);
        }
    }

    let decision = if next.f {
        Decision::Learned(prev.favored)
    } else {
        Decision::Rejected {
            favored: prev.favored,
        }
    };
    if !next.window.is_empty() {
        next.window.remove(0);
        next.window.push(own_bit);
    }
    Ok(LearnOutcome {
        decision: Some(decision),
        forward: Some(LearningMessage::Second(next)),
        revert: false,
    })
}

/// Dispatches on the message phase.
pub fn step<R: Rng + ?Sized>(
    msg: &LearningMessage,
    own: State,
    params: &LearningParams,
    rng: &mut R,
) -> Result<LearnOutcome> {
    match msg {
        LearningMessage::First(_) => phase1_step(msg, own, params),
        LearningMessage::Second(_) => phase2_step(msg, own, params, rng),
    }
}

/// Per-device learning status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Has not taken part in any sequence.
    Idle,
    /// Started or relayed a sequence without deciding. Such a device accepts
    /// later offers but only to decide; it never relays again.
    Listening,
    Decided(Decision),
}

/// One executed hop, for tracing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    /// `None` for sequence seeds.
    pub sender: Option<u32>,
    pub receiver: u32,
    pub phase: u8,
    pub observation: State,
    pub outcome: LearnOutcome,
}

/// Hop-by-hop spread of learning messages over a fixed neighborhood graph.
#[derive(Debug, Clone)]
pub struct Propagation {
    params: LearningParams,
    status: Vec<Status>,
    outbox: Vec<(u32, LearningMessage)>,
}

impl Propagation {
    pub fn new(devices: usize, params: LearningParams) -> Self {
        Propagation {
            params,
            status: vec![Status::Idle; devices],
            outbox: Vec::new(),
        }
    }

    pub fn status(&self, device: usize) -> Status {
        self.status[device]
    }

    pub fn statuses(&self) -> &[Status] {
        &self.status
    }

    /// Messages that will be offered on the next call to [`Self::propagate`].
    pub fn pending(&self) -> &[(u32, LearningMessage)] {
        &self.outbox
    }

    pub fn is_quiescent(&self) -> bool {
        self.outbox.is_empty()
    }

    /// Starts a sequence at each initiator from its own observation.
    pub fn seed<R, F>(
        &mut self,
        initiators: &[u32],
        mut observe: F,
        rng: &mut R,
    ) -> Result<Vec<Hop>>
    where
        R: Rng + ?Sized,
        F: FnMut(u32, &mut R) -> State,
    {
        let mut hops = Vec::with_capacity(initiators.len());
        for &dev in initiators {
            if self.status[dev as usize] != Status::Idle {
                continue;
            }
            let observation = observe(dev, rng);
            let outcome = phase1_step(&LearningMessage::seed(), observation, &self.params)?;
            self.status[dev as usize] = match outcome.decision {
                Some(d) => Status::Decided(d),
                None => Status::Listening,
            };
            if let Some(fwd) = &outcome.forward {
                self.outbox.push((dev, fwd.clone()));
            }
            hops.push(Hop {
                sender: None,
                receiver: dev,
                phase: 1,
                observation,
                outcome,
            });
        }
        self.outbox.sort_by_key(|(s, _)| *s);
        Ok(hops)
    }

    /// Advances every live sequence by one hop.
    ///
    /// Each message emitted in the previous call is offered to the sender's
    /// neighbors that can still decide. A receiver offered several messages
    /// takes one uniformly at random, draws a fresh observation, and runs the
    /// matching step.
    pub fn propagate<R, F>(
        &mut self,
        adj: &Adjacency,
        mut observe: F,
        rng: &mut R,
    ) -> Result<Vec<Hop>>
    where
        R: Rng + ?Sized,
        F: FnMut(u32, &mut R) -> State,
    {
        let mut offers: Vec<(u32, u32)> = Vec::new();
        for (idx, (sender, _)) in self.outbox.iter().enumerate() {
            for &nb in adj.neighbors(*sender as usize) {
                if matches!(self.status[nb as usize], Status::Idle | Status::Listening) {
                    offers.push((nb, idx as u32));
                }
            }
        }
        offers.sort_unstable();

        let outbox = std::mem::take(&mut self.outbox);
        let mut hops = Vec::new();
        let mut i = 0;
        while i < offers.len() {
            let receiver = offers[i].0;
            let n = offers[i..].iter().take_while(|o| o.0 == receiver).count();
            let pick = if n == 1 { 0 } else { rng.random_range(0..n) };
            let (sender, msg) = &outbox[offers[i + pick].1 as usize];
            i += n;

            let observation = observe(receiver, rng);
            let outcome = step(msg, observation, &self.params, rng)?;
            let slot = &mut self.status[receiver as usize];
            match *slot {
                Status::Idle => {
                    *slot = match outcome.decision {
                        Some(d) => Status::Decided(d),
                        None => Status::Listening,
                    };
                    if let Some(fwd) = &outcome.forward {
                        self.outbox.push((receiver, fwd.clone()));
                    }
                }
                Status::Listening => match outcome.decision {
                    Some(d) => *slot = Status::Decided(d),
                    None => continue,
                },
                Status::Decided(_) => unreachable!("decided devices are never offered messages"),
            }
            hops.push(Hop {
                sender: Some(*sender),
                receiver,
                phase: msg.phase(),
                observation,
                outcome,
            });
        }
        Ok(hops)
    }
}
