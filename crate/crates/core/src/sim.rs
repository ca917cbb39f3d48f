//! Discrete-event engine for bulk-synchronous compute/communicate programs.
//!
//! Every rank runs `n_steps` steps. A step is a compute phase (execution,
//! then sampled noise, then any injected delay) followed by posting all
//! sends and receives of the step at once and blocking in a waitall until
//! every one of them has completed.
//!
//! Messages resolve through [`resolve_message`]. Eager sends complete
//! locally at the post; the payload lands `cost` later or whenever the
//! receiver posts. Rendezvous transfers need both sides, and a sender first
//! collects the clear-to-send of *every* rendezvous destination of the step
//! before any payload leaves. That sender handshake is what makes a delayed
//! rank block two ranks on each side under bidirectional rendezvous.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comm::{message_cost, CostModel, Protocol, ProtocolConfig, Topology};
use crate::error::{Error, Result};
use crate::perturbation::{injected_delay, noise_table, DelaySpec, NoiseSpec};

/// Full description of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_ranks: usize,
    pub n_steps: usize,
    pub t_exec_us: f64,
    pub topology: Topology,
    pub protocol: ProtocolConfig,
    pub cost: CostModel,
    pub noise: NoiseSpec,
    pub delays: Vec<DelaySpec>,
    pub seed: u64,
}

impl Scenario {
    /// A noise-free, delay-free scenario with default protocol and cost.
    pub fn new(n_ranks: usize, n_steps: usize, t_exec_us: f64, topology: Topology) -> Self {
        Self {
            n_ranks,
            n_steps,
            t_exec_us,
            topology,
            protocol: ProtocolConfig::default(),
            cost: CostModel::default(),
            noise: NoiseSpec::off(),
            delays: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ranks < 2 {
            return Err(Error::InvalidScenario("n_ranks must be >= 2".into()));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidScenario("n_steps must be >= 1".into()));
        }
        if !(self.t_exec_us.is_finite() && self.t_exec_us >= 0.0) {
            return Err(Error::InvalidScenario(
                "t_exec_us must be finite and >= 0".into(),
            ));
        }
        self.topology.validate(self.n_ranks)?;
        self.cost.validate()?;
        let e = self.noise.mean_relative_delay;
        if !(e.is_finite() && e >= 0.0) {
            return Err(Error::InvalidScenario(
                "noise.mean_relative_delay must be finite and >= 0".into(),
            ));
        }
        if self.protocol.eager_buffer_cap == Some(0) {
            return Err(Error::InvalidScenario(
                "protocol.eager_buffer_cap must be >= 1 when set".into(),
            ));
        }
        for (i, d) in self.delays.iter().enumerate() {
            if d.rank >= self.n_ranks {
                return Err(Error::InvalidScenario(format!(
                    "delays[{i}].rank {} out of range [0, {})",
                    d.rank, self.n_ranks
                )));
            }
            if d.step < 1 || d.step > self.n_steps {
                return Err(Error::InvalidScenario(format!(
                    "delays[{i}].step {} out of range [1, {}]",
                    d.step, self.n_steps
                )));
            }
            if !(d.duration_us.is_finite() && d.duration_us > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "delays[{i}].duration_us must be finite and > 0"
                )));
            }
        }
        Ok(())
    }

    /// Noise-free cost of one message, the baseline subtracted from waits.
    pub fn message_cost(&self) -> f64 {
        message_cost(self.protocol.message_size_bytes, &self.cost)
    }

    pub fn base_protocol(&self) -> Protocol {
        self.protocol.protocol()
    }

    /// SHA-256 (hex) of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The same scenario with every injected delay removed.
    pub fn without_delays(&self) -> Self {
        Self {
            delays: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseKind {
    Exec,
    InjectedDelay,
    NoiseDelay,
    Comm,
    Idle,
}

impl PhaseKind {
    pub fn label(self) -> &'static str {
        match self {
            PhaseKind::Exec => "EXEC",
            PhaseKind::InjectedDelay => "INJECTED_DELAY",
            PhaseKind::NoiseDelay => "NOISE_DELAY",
            PhaseKind::Comm => "COMM",
            PhaseKind::Idle => "IDLE",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "EXEC" => PhaseKind::Exec,
            "INJECTED_DELAY" => PhaseKind::InjectedDelay,
            "NOISE_DELAY" => PhaseKind::NoiseDelay,
            "COMM" => PhaseKind::Comm,
            "IDLE" => PhaseKind::Idle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub rank: usize,
    pub step: usize,
    pub kind: PhaseKind,
    pub t_start_us: f64,
    pub t_end_us: f64,
}

impl PhaseRecord {
    pub fn duration_us(&self) -> f64 {
        self.t_end_us - self.t_start_us
    }
}

/// Simulated timeline of every rank.
///
/// Records are sorted by `(rank, t_start_us)`; zero-length phases are not
/// recorded. `step_end_us[rank][step - 1]` is the waitall completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario_digest: String,
    pub n_ranks: usize,
    pub n_steps: usize,
    pub records: Vec<PhaseRecord>,
    pub final_time_us: Vec<f64>,
    pub step_end_us: Vec<Vec<f64>>,
}

impl Trace {
    pub fn rank_records(&self, rank: usize) -> impl Iterator<Item = &PhaseRecord> {
        self.records.iter().filter(move |r| r.rank == rank)
    }

    pub fn makespan_us(&self) -> f64 {
        self.final_time_us.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageCompletion {
    pub send_complete_us: f64,
    pub recv_complete_us: f64,
}

/// Completion times of one point-to-point message.
pub fn resolve_message(
    send_post_us: f64,
    recv_post_us: f64,
    cost_us: f64,
    protocol: Protocol,
) -> MessageCompletion {
    match protocol {
        Protocol::Eager => MessageCompletion {
            send_complete_us: send_post_us,
            recv_complete_us: recv_post_us.max(send_post_us + cost_us),
        },
        Protocol::Rendezvous => {
            let done = send_post_us.max(recv_post_us) + cost_us;
            MessageCompletion {
                send_complete_us: done,
                recv_complete_us: done,
            }
        }
    }
}

/// Messages of one step; identical for every step.
#[derive(Debug, Clone)]
pub(crate) struct CommPlan {
    pub messages: Vec<(usize, usize)>,
    pub sends: Vec<Vec<usize>>,
    pub recvs: Vec<Vec<usize>>,
}

impl CommPlan {
    pub fn new(topology: &Topology, n_ranks: usize) -> Self {
        let mut messages = Vec::new();
        let mut sends = vec![Vec::new(); n_ranks];
        let mut recvs = vec![Vec::new(); n_ranks];
        for src in 0..n_ranks {
            for dst in topology.send_targets(n_ranks, src) {
                let id = messages.len();
                messages.push((src, dst));
                sends[src].push(id);
                recvs[dst].push(id);
            }
        }
        Self {
            messages,
            sends,
            recvs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Post,
    Waitall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: Time,
    seq: u64,
    kind: EventKind,
    rank: usize,
    step: usize,
}

#[derive(Debug)]
struct StepState {
    post: Vec<Option<f64>>,
    protocol: Vec<Option<Protocol>>,
    send_done: Vec<Option<f64>>,
    recv_done: Vec<Option<f64>>,
    waitall_scheduled: Vec<bool>,
    finished: usize,
}

impl StepState {
    fn new(n_ranks: usize, n_messages: usize) -> Self {
        Self {
            post: vec![None; n_ranks],
            protocol: vec![None; n_messages],
            send_done: vec![None; n_messages],
            recv_done: vec![None; n_messages],
            waitall_scheduled: vec![false; n_ranks],
            finished: 0,
        }
    }
}

/// Phase boundaries of a rank's current compute phase.
#[derive(Debug, Clone, Copy, Default)]
struct ComputePhase {
    ready: f64,
    exec_end: f64,
    noise_end: f64,
    post: f64,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    plan: CommPlan,
    noise: Vec<Vec<f64>>,
    cost: f64,
    base_protocol: Protocol,
    steps: Vec<Option<StepState>>,
    phase: Vec<ComputePhase>,
    outstanding: Vec<VecDeque<(usize, usize)>>,
    heap: BinaryHeap<std::cmp::Reverse<Event>>,
    seq: u64,
    records: Vec<Vec<PhaseRecord>>,
    step_end: Vec<Vec<f64>>,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let n = scenario.n_ranks;
        let plan = CommPlan::new(&scenario.topology, n);
        Self {
            noise: noise_table(
                &scenario.noise,
                scenario.t_exec_us,
                scenario.seed,
                n,
                scenario.n_steps,
            ),
            cost: scenario.message_cost(),
            base_protocol: scenario.base_protocol(),
            steps: (0..=scenario.n_steps).map(|_| None).collect(),
            phase: vec![ComputePhase::default(); n],
            outstanding: vec![VecDeque::new(); n],
            heap: BinaryHeap::new(),
            seq: 0,
            records: vec![Vec::new(); n],
            step_end: vec![Vec::with_capacity(scenario.n_steps); n],
            plan,
            scenario,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind, rank: usize, step: usize) {
        self.seq += 1;
        self.heap.push(std::cmp::Reverse(Event {
            time: Time(time),
            seq: self.seq,
            kind,
            rank,
            step,
        }));
    }

    fn begin_step(&mut self, rank: usize, step: usize, ready: f64) {
        let exec_end = ready + self.scenario.t_exec_us;
        let noise_end = exec_end + self.noise[rank][step - 1];
        let post = noise_end + injected_delay(rank, step, &self.scenario.delays);
        self.phase[rank] = ComputePhase {
            ready,
            exec_end,
            noise_end,
            post,
        };
        self.push(post, EventKind::Post, rank, step);
    }

    fn step_state(&mut self, step: usize) -> &mut StepState {
        let (n, m) = (self.scenario.n_ranks, self.plan.messages.len());
        self.steps[step].get_or_insert_with(|| StepState::new(n, m))
    }

    fn run(mut self) -> Trace {
        for rank in 0..self.scenario.n_ranks {
            self.begin_step(rank, 1, 0.0);
        }
        while let Some(std::cmp::Reverse(ev)) = self.heap.pop() {
            match ev.kind {
                EventKind::Post => self.on_post(ev.rank, ev.step, ev.time.0),
                EventKind::Waitall => self.on_waitall(ev.rank, ev.step, ev.time.0),
            }
        }
        let records = self.records.into_iter().flatten().collect();
        let final_time_us = self
            .step_end
            .iter()
            .map(|ends| *ends.last().expect("every rank completes"))
            .collect();
        Trace {
            scenario_digest: self.scenario.digest(),
            n_ranks: self.scenario.n_ranks,
            n_steps: self.scenario.n_steps,
            records,
            final_time_us,
            step_end_us: self.step_end,
        }
    }

    /// Eager sends of `rank` whose payload has not been delivered before `t`.
    fn count_outstanding(&mut self, rank: usize, t: f64) -> usize {
        let steps = &self.steps;
        self.outstanding[rank].retain(|&(step, m)| {
            let delivered = steps[step]
                .as_ref()
                .and_then(|s| s.recv_done[m])
                .map_or(false, |x| x < t);
            !delivered
        });
        self.outstanding[rank].len()
    }

    fn on_post(&mut self, rank: usize, step: usize, t: f64) {
        let cap = self.scenario.protocol.eager_buffer_cap;
        let mut in_flight = match cap {
            Some(_) => self.count_outstanding(rank, t),
            None => 0,
        };
        let sends = self.plan.sends[rank].clone();
        let base = self.base_protocol;
        let mut newly_eager = Vec::new();
        {
            let st = self.step_state(step);
            st.post[rank] = Some(t);
            for &m in &sends {
                let mut proto = base;
                if proto == Protocol::Eager {
                    if let Some(cap) = cap {
                        if in_flight >= cap {
                            proto = Protocol::Rendezvous;
                        } else {
                            in_flight += 1;
                            newly_eager.push((step, m));
                        }
                    }
                }
                st.protocol[m] = Some(proto);
                if proto == Protocol::Eager {
                    st.send_done[m] = Some(t);
                }
            }
        }
        self.outstanding[rank].extend(newly_eager);

        // This post can complete the handshake of any rank sending to us.
        let mut senders = vec![rank];
        senders.extend(self.plan.recvs[rank].iter().map(|&m| self.plan.messages[m].0));
        senders.sort_unstable();
        senders.dedup();

        let mut touched = Vec::new();
        for &s in &senders {
            self.try_resolve_sender(s, step);
            touched.push(s);
            touched.extend(self.plan.sends[s].iter().map(|&m| self.plan.messages[m].1));
        }
        touched.sort_unstable();
        touched.dedup();
        for r in touched {
            self.try_schedule_waitall(r, step);
        }
    }

    /// Handshake completion of `sender`: its own post and the posts of all
    /// its rendezvous destinations.
    fn handshake(&self, st: &StepState, sender: usize) -> Option<f64> {
        let mut hs = st.post[sender]?;
        for &m in &self.plan.sends[sender] {
            if st.protocol[m] == Some(Protocol::Rendezvous) {
                hs = hs.max(st.post[self.plan.messages[m].1]?);
            }
        }
        Some(hs)
    }

    fn try_resolve_sender(&mut self, sender: usize, step: usize) {
        let Some(st) = self.steps[step].as_ref() else {
            return;
        };
        let Some(send_post) = st.post[sender] else {
            return;
        };
        let hs = self.handshake(st, sender);
        let mut updates = Vec::new();
        for &m in &self.plan.sends[sender] {
            if st.recv_done[m].is_some() {
                continue;
            }
            let Some(recv_post) = st.post[self.plan.messages[m].1] else {
                continue;
            };
            match st.protocol[m].expect("protocol fixed at sender post") {
                Protocol::Eager => {
                    let c = resolve_message(send_post, recv_post, self.cost, Protocol::Eager);
                    updates.push((m, c));
                }
                Protocol::Rendezvous => {
                    if let Some(hs) = hs {
                        let c = resolve_message(hs, recv_post, self.cost, Protocol::Rendezvous);
                        updates.push((m, c));
                    }
                }
            }
        }
        let st = self.steps[step].as_mut().expect("present");
        for (m, c) in updates {
            st.send_done[m] = Some(c.send_complete_us);
            st.recv_done[m] = Some(c.recv_complete_us);
        }
    }

    fn try_schedule_waitall(&mut self, rank: usize, step: usize) {
        let st = self.steps[step].as_ref().expect("present");
        if st.waitall_scheduled[rank] {
            return;
        }
        let Some(mut done) = st.post[rank] else {
            return;
        };
        for &m in &self.plan.sends[rank] {
            match st.send_done[m] {
                Some(x) => done = done.max(x),
                None => return,
            }
        }
        for &m in &self.plan.recvs[rank] {
            match st.recv_done[m] {
                Some(x) => done = done.max(x),
                None => return,
            }
        }
        self.steps[step].as_mut().expect("present").waitall_scheduled[rank] = true;
        self.push(done, EventKind::Waitall, rank, step);
    }

    fn on_waitall(&mut self, rank: usize, step: usize, t: f64) {
        let ph = self.phase[rank];
        let interval = t - ph.post;
        let comm = interval.min(self.cost);
        let idle_end = ph.post + (interval - comm);
        let phases = [
            (PhaseKind::Exec, ph.ready, ph.exec_end),
            (PhaseKind::NoiseDelay, ph.exec_end, ph.noise_end),
            (PhaseKind::InjectedDelay, ph.noise_end, ph.post),
            (PhaseKind::Idle, ph.post, idle_end),
            (PhaseKind::Comm, idle_end, t),
        ];
        for (kind, t_start_us, t_end_us) in phases {
            if t_end_us > t_start_us {
                self.records[rank].push(PhaseRecord {
                    rank,
                    step,
                    kind,
                    t_start_us,
                    t_end_us,
                });
            }
        }
        self.step_end[rank].push(t);

        let keep_states = self.scenario.protocol.eager_buffer_cap.is_some();
        let n = self.scenario.n_ranks;
        let st = self.steps[step].as_mut().expect("present");
        st.finished += 1;
        if st.finished == n && !keep_states {
            self.steps[step] = None;
        }
        if step < self.scenario.n_steps {
            self.begin_step(rank, step + 1, t);
        }
    }
}

/// Runs the scenario to completion.
pub fn simulate(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    Ok(Engine::new(scenario).run())
}
