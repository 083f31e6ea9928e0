//! Deterministic cluster simulator.
//!
//! Each instance is a FIFO fluid queue: requests deposit `per_request_cost`
//! CPU-seconds of work and the server drains work at `instance_capacity`
//! CPU-seconds per second, so a request's response time is its queue delay
//! plus the service time. Sessions are routed round-robin across the active
//! instances, arrivals inside a second are evenly spaced, and per-minute
//! interval-average CPU percent is ingested into the metric store. The
//! controller hook runs on minute boundaries and may rescale the cluster.
//!
//! The whole loop is single-threaded and free of wall-clock reads, so a
//! (trace, config, seed) triple reproduces its outputs byte for byte.

use std::collections::VecDeque;

use crate::orchestrator::{ClusterState, InstancePhase};
use crate::store::{MetricPoint, MetricStore, SeriesKey};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no active instance to route to")]
    NoActiveInstance,
    #[error("config error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// CPU-seconds burned per request.
    pub per_request_cost: f64,
    /// CPU-seconds per second an instance can process (1.0 = one vCPU).
    pub instance_capacity: f64,
    /// Metric sampling period, seconds.
    pub metric_period_s: i64,
    /// Client threads the offered load is modeled after.
    pub threads: usize,
    /// Sessions each thread splits its request budget into; a session is
    /// the unit of load-balancer routing.
    pub sessions_per_thread: usize,
    /// Reserved for stochastic arrival variants; the default evenly spaced
    /// arrival model is deterministic and does not consume it.
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            per_request_cost: 0.01,
            instance_capacity: 1.0,
            metric_period_s: 60,
            threads: 6,
            sessions_per_thread: 1000,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.per_request_cost > 0.0 && self.per_request_cost.is_finite()) {
            return Err(SimError::ConfigError("per_request_cost must be > 0".into()));
        }
        if !(self.instance_capacity > 0.0 && self.instance_capacity.is_finite()) {
            return Err(SimError::ConfigError("instance_capacity must be > 0".into()));
        }
        if self.metric_period_s <= 0 {
            return Err(SimError::ConfigError("metric period must be positive".into()));
        }
        if self.threads == 0 || self.sessions_per_thread == 0 {
            return Err(SimError::ConfigError("threads and sessions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Round-robin session router; `next_index` survives membership changes and
/// is reduced modulo the current list length at routing time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionRouter {
    next_index: usize,
}

impl SessionRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route<'a>(&mut self, active: &'a [String]) -> Result<&'a str, SimError> {
        if active.is_empty() {
            return Err(SimError::NoActiveInstance);
        }
        let choice = &active[self.next_index % active.len()];
        self.next_index = self.next_index.wrapping_add(1);
        Ok(choice)
    }
}

/// One completed request as observed by the client side.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    /// Seconds since the scenario epoch the request was sent.
    pub send_ts: f64,
    pub completion_ts: f64,
    pub response_ms: f64,
    pub instance_id: String,
}

#[derive(Debug, Clone)]
struct PendingRequest {
    send_ts: f64,
    remaining: f64,
}

/// Fluid FIFO queue of one instance.
#[derive(Debug, Clone)]
pub struct InstanceQueue {
    pub id: String,
    pending: VecDeque<PendingRequest>,
    /// Simulation time work has been drained up to.
    clock: f64,
    processed_in_period: f64,
}

impl InstanceQueue {
    pub fn new(id: impl Into<String>, now: f64) -> Self {
        Self { id: id.into(), pending: VecDeque::new(), clock: now, processed_in_period: 0.0 }
    }

    pub fn queued(&self) -> usize {
        self.pending.len()
    }

    pub fn backlog(&self) -> f64 {
        self.pending.iter().map(|r| r.remaining).sum()
    }

    /// Processes queued work up to time `t`, emitting a record for every
    /// request whose work completes. No-op when `t` is not ahead of the
    /// queue's clock.
    pub fn drain_until(&mut self, t: f64, capacity: f64, records: &mut Vec<ResponseRecord>) {
        if t <= self.clock {
            return;
        }
        let mut budget = (t - self.clock) * capacity;
        let mut now = self.clock;
        while budget > 0.0 {
            let Some(front) = self.pending.front_mut() else {
                break;
            };
            if front.remaining <= budget {
                budget -= front.remaining;
                now += front.remaining / capacity;
                self.processed_in_period += front.remaining;
                let done = self.pending.pop_front().expect("front exists");
                records.push(ResponseRecord {
                    send_ts: done.send_ts,
                    completion_ts: now,
                    response_ms: (now - done.send_ts) * 1000.0,
                    instance_id: self.id.clone(),
                });
            } else {
                front.remaining -= budget;
                self.processed_in_period += budget;
                budget = 0.0;
            }
        }
        self.clock = t;
    }

    /// Routes one request here: first drains work up to the send instant,
    /// then appends the request's cost to the backlog.
    pub fn arrive(
        &mut self,
        send_ts: f64,
        cost: f64,
        capacity: f64,
        records: &mut Vec<ResponseRecord>,
    ) {
        self.drain_until(send_ts, capacity, records);
        self.pending.push_back(PendingRequest { send_ts, remaining: cost });
    }

    /// Interval-average CPU percent for the period ending at `minute_end`;
    /// the caller must have drained up to `minute_end` first. Resets the
    /// period accumulator.
    pub fn sample_cpu(&mut self, minute_end: i64, capacity: f64, period_s: i64) -> MetricPoint {
        let busy_fraction = self.processed_in_period / (capacity * period_s as f64);
        self.processed_in_period = 0.0;
        MetricPoint::new(minute_end, 100.0 * busy_fraction.min(1.0))
    }

    fn take_pending(&mut self) -> VecDeque<PendingRequest> {
        std::mem::take(&mut self.pending)
    }
}

/// Controller callback invoked on every minute boundary, after that minute's
/// CPU samples have been ingested. The hook runs the forecast/alarm/scaling
/// decisions and may mutate the cluster.
pub trait MinuteHook {
    fn on_minute(&mut self, now: i64, store: &MetricStore, cluster: &mut ClusterState);
}

/// Controller disabled: nothing reacts to the metrics.
pub struct NoopHook;

impl MinuteHook for NoopHook {
    fn on_minute(&mut self, _now: i64, _store: &MetricStore, _cluster: &mut ClusterState) {}
}

/// Per-second snapshot handed to [`simulate_with_inspector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimTick {
    pub second: i64,
    pub injected: u64,
    pub completed: u64,
    pub queued: u64,
}

#[derive(Debug)]
pub struct SimOutput {
    /// Completed requests sorted by send time.
    pub records: Vec<ResponseRecord>,
    pub injected: u64,
    pub completed: u64,
    pub queued_at_end: u64,
    /// CPU-seconds of work still queued when the run ended.
    pub backlog_cpu_s_at_end: f64,
}

/// Runs the event loop for `duration_s` seconds of simulated time.
///
/// `trace` holds cluster-wide request rates, one per minute pinning the
/// arrival rate for its 60 seconds. Per-instance `cpu.percent` samples land
/// in `store` on every minute boundary, after which `hook` runs.
pub fn simulate(
    trace: &[f64],
    cluster: &mut ClusterState,
    store: &MetricStore,
    hook: &mut dyn MinuteHook,
    cfg: &SimConfig,
    duration_s: i64,
) -> Result<SimOutput, SimError> {
    simulate_with_inspector(trace, cluster, store, hook, cfg, duration_s, |_| {})
}

/// [`simulate`] with a per-second inspector for conservation checks.
pub fn simulate_with_inspector(
    trace: &[f64],
    cluster: &mut ClusterState,
    store: &MetricStore,
    hook: &mut dyn MinuteHook,
    cfg: &SimConfig,
    duration_s: i64,
    mut inspect: impl FnMut(&SimTick),
) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    if duration_s < 0 {
        return Err(SimError::ConfigError("duration must be non-negative".into()));
    }
    if (trace.len() as i64) * 60 < duration_s {
        return Err(SimError::ConfigError(format!(
            "trace covers {} s, need {duration_s} s",
            trace.len() * 60
        )));
    }
    if trace.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(SimError::ConfigError("trace rates must be finite and >= 0".into()));
    }

    // session length: each client thread splits its share of the total
    // request budget into equal contiguous chunks
    let total_requests: f64 = trace
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let secs = (duration_s - (m as i64) * 60).clamp(0, 60);
            r * secs as f64
        })
        .sum();
    let session_len =
        ((total_requests / (cfg.threads * cfg.sessions_per_thread) as f64).floor() as u64).max(1);

    let mut engine = SimEngine {
        queues: Vec::new(),
        router: SessionRouter::new(),
        session_left: 0,
        session_target: 0,
        records: Vec::new(),
        injected: 0,
        cfg: cfg.clone(),
        session_len,
    };

    // instances serving from the epoch
    engine.sync_queues(cluster, 0.0);

    let mut carry = 0.0; // fractional arrivals carried across seconds
    for second in 0..duration_s {
        if second > 0 && second % cfg.metric_period_s == 0 {
            engine.minute_boundary(second, cluster, store, hook)?;
        }
        cluster.tick(second);
        engine.sync_queues(cluster, second as f64);

        let rate = trace[(second / 60) as usize];
        carry += rate;
        let n = carry.floor() as u64;
        carry -= n as f64;
        engine.spread_arrivals(second, n)?;

        inspect(&SimTick {
            second,
            injected: engine.injected,
            completed: engine.records.len() as u64,
            queued: engine.queued(),
        });
    }

    // close the run: drain everything that can complete by the horizon and
    // emit the final sample when the run ends on a minute boundary
    if duration_s > 0 && duration_s % cfg.metric_period_s == 0 {
        engine.minute_boundary(duration_s, cluster, store, hook)?;
    } else {
        for q in &mut engine.queues {
            q.drain_until(duration_s as f64, cfg.instance_capacity, &mut engine.records);
        }
    }

    let completed = engine.records.len() as u64;
    let queued_at_end = engine.queued();
    let backlog_cpu_s_at_end: f64 = engine.queues.iter().map(InstanceQueue::backlog).sum();
    let mut records = engine.records;
    records.sort_by(|a, b| {
        (a.send_ts, a.completion_ts, &a.instance_id)
            .partial_cmp(&(b.send_ts, b.completion_ts, &b.instance_id))
            .expect("finite timestamps")
    });
    Ok(SimOutput { records, injected: engine.injected, completed, queued_at_end, backlog_cpu_s_at_end })
}

struct SimEngine {
    queues: Vec<InstanceQueue>,
    router: SessionRouter,
    session_left: u64,
    session_target: usize,
    records: Vec<ResponseRecord>,
    injected: u64,
    cfg: SimConfig,
    session_len: u64,
}

impl SimEngine {
    fn queued(&self) -> u64 {
        self.queues.iter().map(|q| q.queued() as u64).sum()
    }

    /// Creates queues for newly active instances and retires queues of
    /// terminated ones, re-routing their pending requests.
    fn sync_queues(&mut self, cluster: &ClusterState, now: f64) {
        for inst in cluster.active_instances() {
            if !self.queues.iter().any(|q| q.id == inst.id) {
                self.queues.push(InstanceQueue::new(inst.id.clone(), now));
            }
        }
        self.queues.sort_by(|a, b| a.id.cmp(&b.id));

        let terminated: Vec<usize> = self
            .queues
            .iter()
            .enumerate()
            .filter(|(_, q)| {
                cluster
                    .instances
                    .iter()
                    .any(|i| i.id == q.id && i.phase == InstancePhase::Terminated)
            })
            .map(|(idx, _)| idx)
            .collect();
        if terminated.is_empty() {
            return;
        }
        let mut orphans = VecDeque::new();
        for idx in terminated.into_iter().rev() {
            let mut q = self.queues.remove(idx);
            q.drain_until(now, self.cfg.instance_capacity, &mut self.records);
            orphans.append(&mut q.take_pending());
        }
        // queue indices shifted and the session target may be gone
        self.session_left = 0;
        // orphaned requests re-enter the balancer with their original send
        // time, keeping the work they already received
        while let Some(req) = orphans.pop_front() {
            let ids: Vec<String> = self.queues.iter().map(|q| q.id.clone()).collect();
            if let Ok(target) = self.router.route(&ids) {
                let target = target.to_string();
                if let Some(q) = self.queues.iter_mut().find(|q| q.id == target) {
                    q.pending.push_back(req);
                }
            }
        }
    }

    fn spread_arrivals(&mut self, second: i64, n: u64) -> Result<(), SimError> {
        if n == 0 {
            return Ok(());
        }
        if self.queues.is_empty() {
            return Err(SimError::NoActiveInstance);
        }
        let ids: Vec<String> = self.queues.iter().map(|q| q.id.clone()).collect();
        for j in 0..n {
            if self.session_left == 0 {
                let target = self.router.route(&ids)?;
                self.session_target =
                    self.queues.iter().position(|q| q.id == target).expect("route picks a queue");
                self.session_left = self.session_len;
            }
            let send_ts = second as f64 + j as f64 / n as f64;
            self.queues[self.session_target].arrive(
                send_ts,
                self.cfg.per_request_cost,
                self.cfg.instance_capacity,
                &mut self.records,
            );
            self.session_left -= 1;
            self.injected += 1;
        }
        Ok(())
    }

    fn minute_boundary(
        &mut self,
        now: i64,
        cluster: &mut ClusterState,
        store: &MetricStore,
        hook: &mut dyn MinuteHook,
    ) -> Result<(), SimError> {
        for q in &mut self.queues {
            q.drain_until(now as f64, self.cfg.instance_capacity, &mut self.records);
            let sample = q.sample_cpu(now, self.cfg.instance_capacity, self.cfg.metric_period_s);
            store.ingest(&SeriesKey::with_dim("cpu.percent", "instance_id", &q.id), sample)?;
        }
        hook.on_minute(now, store, cluster);
        self.sync_queues(cluster, now as f64);
        Ok(())
    }
}
