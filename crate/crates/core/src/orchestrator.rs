//! Cluster lifecycle state machine.
//!
//! Applies scale notifications under min/max bounds, a fixed step of one
//! instance, a cooldown window measured from the last *effective* action and
//! a boot delay before a new instance starts serving. Rejected actions do
//! not consume the cooldown.

use crate::alarm::ScaleAction;
use crate::store::{MetricPoint, MetricStore, SeriesKey, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstancePhase {
    Booting,
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub phase: InstancePhase,
    pub created_at: i64,
    /// Scheduled (and once active, actual) time the instance starts serving.
    pub serving_since: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrchestratorConfig {
    pub min_size: usize,
    pub max_size: usize,
    /// Instances added or removed per effective action.
    pub step: usize,
    pub cooldown_s: i64,
    /// Boot plus warm-up time before a new instance serves requests.
    pub boot_delay_s: i64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { min_size: 2, max_size: 5, step: 1, cooldown_s: 1200, boot_delay_s: 360 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionOutcome {
    Effective,
    RejectedCooldown,
    RejectedBounds,
}

impl ActionOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            ActionOutcome::Effective => "effective",
            ActionOutcome::RejectedCooldown => "rejected_cooldown",
            ActionOutcome::RejectedBounds => "rejected_bounds",
        }
    }
}

/// The orchestrated fleet. All transitions are applied through
/// [`ClusterState::handle_notification`] and [`ClusterState::tick`], one at
/// a time in event order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub instances: Vec<Instance>,
    pub config: OrchestratorConfig,
    pub last_effective_action: Option<i64>,
    next_id: u64,
}

impl ClusterState {
    /// Boots a fresh cluster of `min_size` instances already serving at
    /// `now`; their creation predates the scenario epoch by the boot delay.
    pub fn new(config: OrchestratorConfig, now: i64) -> Self {
        assert!(config.min_size >= 1 && config.min_size <= config.max_size);
        assert!(config.step >= 1);
        let mut cluster =
            Self { instances: Vec::new(), config, last_effective_action: None, next_id: 0 };
        for _ in 0..config.min_size {
            let id = cluster.fresh_id();
            cluster.instances.push(Instance {
                id,
                phase: InstancePhase::Active,
                created_at: now - config.boot_delay_s,
                serving_since: now,
            });
        }
        cluster
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("i-{:06}", self.next_id)
    }

    /// Instances that are not terminated, i.e. the size the cloud bills for.
    pub fn size(&self) -> usize {
        self.instances.iter().filter(|i| i.phase != InstancePhase::Terminated).count()
    }

    /// Serving instances at `now`, ordered by id.
    pub fn active_instances(&self) -> Vec<&Instance> {
        let mut active: Vec<&Instance> =
            self.instances.iter().filter(|i| i.phase == InstancePhase::Active).collect();
        active.sort_by(|a, b| a.id.cmp(&b.id));
        active
    }

    pub fn active_count(&self) -> usize {
        self.instances.iter().filter(|i| i.phase == InstancePhase::Active).count()
    }

    /// Applies a scaling notification at `now`.
    ///
    /// Cooldown is checked first, then bounds; only an effective action
    /// updates `last_effective_action`. Scale-out adds one booting instance;
    /// scale-in terminates the most recently added non-terminated instance,
    /// keeping the longest-warm ones.
    pub fn handle_notification(&mut self, action: ScaleAction, now: i64) -> ActionOutcome {
        if let Some(last) = self.last_effective_action {
            if now - last < self.config.cooldown_s {
                return ActionOutcome::RejectedCooldown;
            }
        }
        match action {
            ScaleAction::ScaleOut => {
                if self.size() + self.config.step > self.config.max_size {
                    return ActionOutcome::RejectedBounds;
                }
                for _ in 0..self.config.step {
                    let id = self.fresh_id();
                    self.instances.push(Instance {
                        id,
                        phase: InstancePhase::Booting,
                        created_at: now,
                        serving_since: now + self.config.boot_delay_s,
                    });
                }
            }
            ScaleAction::ScaleIn => {
                if self.size() < self.config.min_size + self.config.step {
                    return ActionOutcome::RejectedBounds;
                }
                for _ in 0..self.config.step {
                    let victim = self
                        .instances
                        .iter_mut()
                        .filter(|i| i.phase != InstancePhase::Terminated)
                        .max_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)))
                        .expect("bounds check guarantees a candidate");
                    victim.phase = InstancePhase::Terminated;
                }
            }
        }
        self.last_effective_action = Some(now);
        ActionOutcome::Effective
    }

    /// Promotes booting instances whose boot delay has elapsed at `now`.
    /// Activation keeps the scheduled serving time, so a late tick does not
    /// shift it.
    pub fn tick(&mut self, now: i64) {
        for instance in &mut self.instances {
            if instance.phase == InstancePhase::Booting && now >= instance.serving_since {
                instance.phase = InstancePhase::Active;
            }
        }
    }

    /// Ids of instances terminated by scale-in, newest first.
    pub fn terminated_ids(&self) -> Vec<&str> {
        self.instances
            .iter()
            .filter(|i| i.phase == InstancePhase::Terminated)
            .map(|i| i.id.as_str())
            .collect()
    }

    /// Records `cluster.size` and `cluster.active` into the store at `now`.
    pub fn record_metrics(&self, store: &MetricStore, now: i64) -> Result<(), StoreError> {
        store.ingest(&SeriesKey::bare("cluster.size"), MetricPoint::new(now, self.size() as f64))?;
        store.ingest(
            &SeriesKey::bare("cluster.active"),
            MetricPoint::new(now, self.active_count() as f64),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster() -> ClusterState {
        ClusterState::new(OrchestratorConfig::default(), 0)
    }

    #[test]
    fn initial_cluster_has_min_size_active() {
        let c = cluster();
        assert_eq!(c.size(), 2);
        assert_eq!(c.active_count(), 2);
        for i in &c.instances {
            assert!(i.serving_since >= i.created_at + c.config.boot_delay_s);
        }
    }

    #[test]
    fn scale_out_at_max_is_rejected() {
        let mut c = cluster();
        for k in 0..3 {
            assert_eq!(
                c.handle_notification(ScaleAction::ScaleOut, k * 1300),
                ActionOutcome::Effective
            );
        }
        assert_eq!(c.size(), 5);
        assert_eq!(
            c.handle_notification(ScaleAction::ScaleOut, 10_000),
            ActionOutcome::RejectedBounds
        );
        assert_eq!(c.size(), 5);
    }

    #[test]
    fn scale_in_at_min_is_rejected() {
        let mut c = cluster();
        assert_eq!(
            c.handle_notification(ScaleAction::ScaleIn, 100),
            ActionOutcome::RejectedBounds
        );
        assert_eq!(c.size(), 2);
        // a rejected action does not consume the cooldown
        assert_eq!(c.last_effective_action, None);
    }

    #[test]
    fn cooldown_window_enforced() {
        let mut c = cluster();
        assert_eq!(c.handle_notification(ScaleAction::ScaleOut, 600), ActionOutcome::Effective);
        assert_eq!(
            c.handle_notification(ScaleAction::ScaleOut, 1500),
            ActionOutcome::RejectedCooldown
        );
        assert_eq!(c.handle_notification(ScaleAction::ScaleOut, 1801), ActionOutcome::Effective);
    }

    #[test]
    fn rejected_actions_do_not_refresh_cooldown() {
        let mut c = cluster();
        assert_eq!(c.handle_notification(ScaleAction::ScaleOut, 0), ActionOutcome::Effective);
        for t in [100, 500, 900] {
            assert_eq!(
                c.handle_notification(ScaleAction::ScaleOut, t),
                ActionOutcome::RejectedCooldown
            );
        }
        assert_eq!(c.last_effective_action, Some(0));
        assert_eq!(c.handle_notification(ScaleAction::ScaleOut, 1200), ActionOutcome::Effective);
    }

    #[test]
    fn boot_delay_gates_activation() {
        let mut c = cluster();
        c.handle_notification(ScaleAction::ScaleOut, 0);
        assert_eq!(c.active_count(), 2);
        c.tick(359);
        assert_eq!(c.active_count(), 2);
        c.tick(360);
        assert_eq!(c.active_count(), 3);
        let newest = c.instances.last().unwrap();
        assert_eq!(newest.serving_since, 360);
    }

    #[test]
    fn tick_without_booting_instances_is_identity() {
        let mut c = cluster();
        let before = c.clone();
        c.tick(10_000);
        assert_eq!(c, before);
    }

    #[test]
    fn staggered_boots_activate_independently() {
        let mut c = ClusterState::new(
            OrchestratorConfig { cooldown_s: 60, ..OrchestratorConfig::default() },
            0,
        );
        c.handle_notification(ScaleAction::ScaleOut, 0);
        c.handle_notification(ScaleAction::ScaleOut, 60);
        // per-instance timer oracle: activation at created_at + boot_delay
        let expected: Vec<i64> = c
            .instances
            .iter()
            .filter(|i| i.phase == InstancePhase::Booting)
            .map(|i| i.created_at + 360)
            .collect();
        assert_eq!(expected, vec![360, 420]);
        c.tick(360);
        assert_eq!(c.active_count(), 3);
        c.tick(419);
        assert_eq!(c.active_count(), 3);
        c.tick(420);
        assert_eq!(c.active_count(), 4);
    }

    #[test]
    fn active_count_unchanged_right_after_scale_out() {
        let mut c = cluster();
        c.handle_notification(ScaleAction::ScaleOut, 0);
        assert_eq!(c.size(), 3);
        assert_eq!(c.active_count(), 2);
    }

    #[test]
    fn scale_in_removes_newest_instance() {
        let mut c = cluster();
        c.handle_notification(ScaleAction::ScaleOut, 0);
        c.tick(360);
        assert_eq!(c.active_count(), 3);
        assert_eq!(c.handle_notification(ScaleAction::ScaleIn, 1300), ActionOutcome::Effective);
        assert_eq!(c.active_count(), 2);
        // the longest-warm instances survive
        assert_eq!(c.terminated_ids(), vec!["i-000003"]);
        let ids: Vec<&str> = c.active_instances().iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["i-000001", "i-000002"]);
    }

    #[test]
    fn active_instances_are_ordered_by_id() {
        let mut c = cluster();
        c.handle_notification(ScaleAction::ScaleOut, 0);
        c.tick(360);
        let ids: Vec<&str> = c.active_instances().iter().map(|i| i.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn fuzzed_interleavings_respect_bounds_and_cooldown() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let mut c = cluster();
            let mut now = 0i64;
            let mut effective_times = Vec::new();
            for _ in 0..40 {
                now += rng.gen_range(1..900);
                if rng.gen_bool(0.3) {
                    c.tick(now);
                    continue;
                }
                let action = if rng.gen_bool(0.5) {
                    ScaleAction::ScaleOut
                } else {
                    ScaleAction::ScaleIn
                };
                if c.handle_notification(action, now) == ActionOutcome::Effective {
                    effective_times.push(now);
                }
                assert!(c.size() >= 2 && c.size() <= 5, "size {} out of bounds", c.size());
            }
            for pair in effective_times.windows(2) {
                assert!(pair[1] - pair[0] >= 1200);
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut events = Vec::new();
        let mut now = 0i64;
        for _ in 0..200 {
            now += rng.gen_range(1..600);
            events.push((now, rng.gen_range(0..3u8)));
        }
        let run = |events: &[(i64, u8)]| {
            let mut c = cluster();
            for &(t, kind) in events {
                match kind {
                    0 => c.tick(t),
                    1 => {
                        c.handle_notification(ScaleAction::ScaleOut, t);
                    }
                    _ => {
                        c.handle_notification(ScaleAction::ScaleIn, t);
                    }
                }
            }
            c
        };
        assert_eq!(run(&events), run(&events));
    }

    #[test]
    fn record_metrics_emits_size_series() {
        let store = MetricStore::new();
        let mut c = cluster();
        c.record_metrics(&store, 60).unwrap();
        c.handle_notification(ScaleAction::ScaleOut, 60);
        c.record_metrics(&store, 120).unwrap();
        let size = store.query(&SeriesKey::bare("cluster.size"), 0, 200).unwrap();
        assert_eq!(size.values(), vec![2.0, 3.0]);
        let active = store.query(&SeriesKey::bare("cluster.active"), 0, 200).unwrap();
        assert_eq!(active.values(), vec![2.0, 2.0]);
    }
}
