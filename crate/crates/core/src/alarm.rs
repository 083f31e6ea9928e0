//! Threshold alarms with consecutive-period semantics.
//!
//! An alarm fires a scaling notification only after its comparator has been
//! violated by `required_periods` consecutive evaluated samples; any
//! non-violating sample resets the streak. The violation counter resets when
//! a notification is emitted, so a full new run of violations is needed
//! before the alarm can fire again. Samples missing at evaluation time are
//! skipped without touching the streak.

use crate::store::{MetricPoint, MetricStore, SeriesKey};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlarmError {
    #[error("alarm {id}: sample at {timestamp} not newer than last evaluated {last}")]
    StaleSample { id: String, timestamp: i64, last: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    GreaterThan,
    LessThan,
}

impl Comparator {
    fn violated(&self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::GreaterThan => value > threshold,
            Comparator::LessThan => value < threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAction {
    ScaleOut,
    ScaleIn,
}

impl ScaleAction {
    pub fn name(&self) -> &'static str {
        match self {
            ScaleAction::ScaleOut => "scale_out",
            ScaleAction::ScaleIn => "scale_in",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlarmDefinition {
    pub id: String,
    pub metric: SeriesKey,
    pub comparator: Comparator,
    pub threshold: f64,
    pub required_periods: u32,
    pub action: ScaleAction,
}

impl AlarmDefinition {
    pub fn new(
        id: impl Into<String>,
        metric: SeriesKey,
        comparator: Comparator,
        threshold: f64,
        required_periods: u32,
        action: ScaleAction,
    ) -> Self {
        assert!(required_periods >= 1, "required_periods must be >= 1");
        assert!(threshold.is_finite(), "threshold must be finite");
        Self { id: id.into(), metric, comparator, threshold, required_periods, action }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmStatus {
    Ok,
    Alarm,
}

/// Mutable evaluation state of one alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmState {
    pub consecutive_violations: u32,
    pub status: AlarmStatus,
    pub last_evaluated: Option<i64>,
}

impl Default for AlarmState {
    fn default() -> Self {
        Self { consecutive_violations: 0, status: AlarmStatus::Ok, last_evaluated: None }
    }
}

/// A scaling request emitted by a fired alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub alarm_id: String,
    pub action: ScaleAction,
    pub timestamp: i64,
}

/// Applies one sample to the alarm state machine.
///
/// Returns the updated state and, exactly when the violation streak reaches
/// `required_periods`, one notification. Samples must arrive in strictly
/// increasing timestamp order per alarm.
pub fn evaluate(
    state: &AlarmState,
    def: &AlarmDefinition,
    sample: MetricPoint,
) -> Result<(AlarmState, Option<Notification>), AlarmError> {
    if let Some(last) = state.last_evaluated {
        if sample.timestamp <= last {
            return Err(AlarmError::StaleSample {
                id: def.id.clone(),
                timestamp: sample.timestamp,
                last,
            });
        }
    }
    let mut next = state.clone();
    next.last_evaluated = Some(sample.timestamp);
    if def.comparator.violated(sample.value, def.threshold) {
        next.consecutive_violations += 1;
        if next.consecutive_violations >= def.required_periods {
            next.status = AlarmStatus::Alarm;
            next.consecutive_violations = 0;
            let notification = Notification {
                alarm_id: def.id.clone(),
                action: def.action,
                timestamp: sample.timestamp,
            };
            return Ok((next, Some(notification)));
        }
        next.status = AlarmStatus::Ok;
    } else {
        next.consecutive_violations = 0;
        next.status = AlarmStatus::Ok;
    }
    Ok((next, None))
}

/// A set of alarms evaluated against the live store once per period.
#[derive(Debug)]
pub struct AlarmEngine {
    alarms: Vec<(AlarmDefinition, AlarmState)>,
}

impl AlarmEngine {
    pub fn new(defs: Vec<AlarmDefinition>) -> Self {
        Self { alarms: defs.into_iter().map(|d| (d, AlarmState::default())).collect() }
    }

    pub fn states(&self) -> impl Iterator<Item = &(AlarmDefinition, AlarmState)> {
        self.alarms.iter()
    }

    /// One scheduled evaluation pass: each alarm looks at the latest sample
    /// of its metric and evaluates it if it is new. Missing metrics or
    /// absent new samples are skipped, preserving the violation streak.
    pub fn evaluate_period(&mut self, store: &MetricStore) -> Vec<Notification> {
        let mut notifications = Vec::new();
        for (def, state) in &mut self.alarms {
            let latest = match store.latest(&def.metric) {
                Ok(Some(point)) => point,
                Ok(None) | Err(_) => {
                    log::debug!("alarm {}: no data for {}", def.id, def.metric.label());
                    continue;
                }
            };
            if state.last_evaluated.is_some_and(|last| latest.timestamp <= last) {
                continue; // no new sample this period
            }
            let (next, notification) =
                evaluate(state, def, latest).expect("newer sample cannot be stale");
            *state = next;
            if let Some(n) = notification {
                notifications.push(n);
            }
        }
        notifications
    }
}

/// Wires the engine to a period clock: for each period the producer hook
/// runs first (ingesting that period's samples, or nothing on a gap), then
/// every alarm is evaluated once against its latest sample. Returns all
/// notifications in firing order.
pub fn evaluate_stream(
    engine: &mut AlarmEngine,
    store: &MetricStore,
    periods: usize,
    mut produce: impl FnMut(usize, &MetricStore),
) -> Vec<Notification> {
    let mut notifications = Vec::new();
    for period in 0..periods {
        produce(period, store);
        notifications.extend(engine.evaluate_period(store));
    }
    notifications
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MetricStore;

    fn def(threshold: f64, periods: u32) -> AlarmDefinition {
        AlarmDefinition::new(
            "cpu-high",
            SeriesKey::bare("pred.cpu.avg"),
            Comparator::GreaterThan,
            threshold,
            periods,
            ScaleAction::ScaleOut,
        )
    }

    fn run_sequence(def: &AlarmDefinition, values: &[f64]) -> Vec<usize> {
        let mut state = AlarmState::default();
        let mut fired = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let (next, notification) =
                evaluate(&state, def, MetricPoint::new((i as i64 + 1) * 60, v)).unwrap();
            state = next;
            if notification.is_some() {
                fired.push(i);
            }
        }
        fired
    }

    #[test]
    fn fires_on_third_consecutive_violation() {
        assert_eq!(run_sequence(&def(80.0, 3), &[85.0, 85.0, 85.0]), vec![2]);
    }

    #[test]
    fn broken_streak_does_not_fire() {
        assert_eq!(run_sequence(&def(80.0, 3), &[85.0, 85.0, 70.0, 85.0, 85.0]), Vec::<usize>::new());
    }

    #[test]
    fn counter_resets_after_firing() {
        // continuous violation: fires at index 2 and again at 5, not before
        assert_eq!(run_sequence(&def(80.0, 3), &[85.0; 8]), vec![2, 5]);
    }

    #[test]
    fn comparators_are_strict() {
        assert_eq!(run_sequence(&def(80.0, 1), &[80.0]), Vec::<usize>::new());
        assert_eq!(run_sequence(&def(80.0, 1), &[80.0001]), vec![0]);
        let low = AlarmDefinition::new(
            "cpu-low",
            SeriesKey::bare("cpu.avg.actual"),
            Comparator::LessThan,
            15.0,
            1,
            ScaleAction::ScaleIn,
        );
        let mut state = AlarmState::default();
        let (next, n) = evaluate(&state, &low, MetricPoint::new(60, 15.0)).unwrap();
        assert!(n.is_none());
        state = next;
        let (_, n) = evaluate(&state, &low, MetricPoint::new(120, 14.9)).unwrap();
        assert_eq!(n.unwrap().action, ScaleAction::ScaleIn);
    }

    #[test]
    fn stale_sample_rejected() {
        let d = def(80.0, 3);
        let state = AlarmState { last_evaluated: Some(120), ..AlarmState::default() };
        let err = evaluate(&state, &d, MetricPoint::new(120, 85.0)).unwrap_err();
        assert!(matches!(err, AlarmError::StaleSample { .. }));
    }

    #[test]
    fn status_alarm_exactly_on_firing_evaluation() {
        let d = def(80.0, 2);
        let mut state = AlarmState::default();
        let (s1, _) = evaluate(&state, &d, MetricPoint::new(60, 85.0)).unwrap();
        assert_eq!(s1.status, AlarmStatus::Ok);
        state = s1;
        let (s2, n) = evaluate(&state, &d, MetricPoint::new(120, 85.0)).unwrap();
        assert_eq!(s2.status, AlarmStatus::Alarm);
        assert!(n.is_some());
        state = s2;
        let (s3, _) = evaluate(&state, &d, MetricPoint::new(180, 10.0)).unwrap();
        assert_eq!(s3.status, AlarmStatus::Ok);
    }

    /// Naive oracle: at each step, rescan the entire history for the length
    /// of the violating suffix and re-derive every firing index from
    /// scratch, counting streaks from the previous firing.
    fn oracle_fired_indices(values: &[f64], threshold: f64, periods: u32) -> Vec<usize> {
        let mut fired = Vec::new();
        let mut last_fire: Option<usize> = None;
        for i in 0..values.len() {
            let mut streak = 0u32;
            for (j, &v) in values[..=i].iter().enumerate() {
                if last_fire.is_some_and(|lf| j <= lf) {
                    continue;
                }
                if v > threshold {
                    streak += 1;
                } else {
                    streak = 0;
                }
            }
            if streak >= periods {
                fired.push(i);
                last_fire = Some(i);
            }
        }
        fired
    }

    #[test]
    fn random_sequences_match_full_rescan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..500 {
            let len = rng.gen_range(1..=200);
            let threshold = rng.gen_range(10.0..90.0);
            let periods = rng.gen_range(1..=5);
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..100.0)).collect();
            let d = def(threshold, periods);
            assert_eq!(
                run_sequence(&d, &values),
                oracle_fired_indices(&values, threshold, periods),
                "threshold {threshold} periods {periods} values {values:?}"
            );
        }
    }

    #[test]
    fn no_violations_no_notifications() {
        assert_eq!(run_sequence(&def(80.0, 3), &[10.0; 50]), Vec::<usize>::new());
    }

    #[test]
    fn replay_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..100.0)).collect();
        let d = def(50.0, 3);
        assert_eq!(run_sequence(&d, &values), run_sequence(&d, &values));
    }

    #[test]
    fn raising_threshold_never_fires_earlier() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let values: Vec<f64> = (0..80).map(|_| rng.gen_range(0.0..100.0)).collect();
            let lo = run_sequence(&def(40.0, 3), &values);
            let hi = run_sequence(&def(60.0, 3), &values);
            match (lo.first(), hi.first()) {
                (None, Some(_)) => panic!("higher threshold fired when lower did not"),
                (Some(l), Some(h)) => assert!(h >= l),
                _ => {}
            }
        }
    }

    #[test]
    fn engine_fires_once_per_streak_from_store() {
        let store = MetricStore::new();
        let key = SeriesKey::bare("pred.cpu.avg");
        let d = AlarmDefinition::new(
            "out",
            key.clone(),
            Comparator::GreaterThan,
            80.0,
            3,
            ScaleAction::ScaleOut,
        );
        let mut engine = AlarmEngine::new(vec![d]);
        // continuous violating data for 5 periods: exactly one notification
        let fired = evaluate_stream(&mut engine, &store, 5, |period, store| {
            store.ingest(&key, MetricPoint::new((period as i64 + 1) * 60, 90.0)).unwrap();
        });
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].timestamp, 180);
    }

    #[test]
    fn engine_preserves_streak_across_missing_samples() {
        let store = MetricStore::new();
        let key = SeriesKey::bare("pred.cpu.avg");
        let d = AlarmDefinition::new(
            "out",
            key.clone(),
            Comparator::GreaterThan,
            80.0,
            3,
            ScaleAction::ScaleOut,
        );
        let mut engine = AlarmEngine::new(vec![d]);
        let mut fired = Vec::new();
        // violations at minutes 1, 2 then a 2-period gap, then minute 5:
        // the streak survives the gap and completes on the third sample
        let samples = [(1, Some(90.0)), (2, Some(90.0)), (3, None), (4, None), (5, Some(90.0))];
        for (m, v) in samples {
            if let Some(v) = v {
                store.ingest(&key, MetricPoint::new(m * 60, v)).unwrap();
            }
            fired.extend(engine.evaluate_period(&store));
        }
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].timestamp, 300);

        // oracle with explicit gap handling: only evaluated samples count
        let evaluated = [90.0, 90.0, 90.0];
        let mut streak = 0;
        let mut oracle_fired = 0;
        for v in evaluated {
            if v > 80.0 {
                streak += 1;
                if streak >= 3 {
                    oracle_fired += 1;
                    streak = 0;
                }
            } else {
                streak = 0;
            }
        }
        assert_eq!(oracle_fired, 1);
    }

    #[test]
    fn independent_alarms_do_not_interact() {
        let d1 = AlarmDefinition::new(
            "a1",
            SeriesKey::bare("m1"),
            Comparator::GreaterThan,
            80.0,
            3,
            ScaleAction::ScaleOut,
        );
        let d2 = AlarmDefinition::new(
            "a2",
            SeriesKey::bare("m2"),
            Comparator::LessThan,
            15.0,
            3,
            ScaleAction::ScaleIn,
        );
        // evaluate in both orders; per-alarm notifications must be identical
        let run = |defs: Vec<AlarmDefinition>| {
            let store = MetricStore::new();
            let mut engine = AlarmEngine::new(defs);
            let mut fired = Vec::new();
            for m in 1..=6 {
                store.ingest(&SeriesKey::bare("m1"), MetricPoint::new(m * 60, 90.0)).unwrap();
                store.ingest(&SeriesKey::bare("m2"), MetricPoint::new(m * 60, 5.0)).unwrap();
                fired.extend(engine.evaluate_period(&store));
            }
            let a1: Vec<_> = fired.iter().filter(|n| n.alarm_id == "a1").cloned().collect();
            let a2: Vec<_> = fired.iter().filter(|n| n.alarm_id == "a2").cloned().collect();
            (a1, a2)
        };
        let forward = run(vec![d1.clone(), d2.clone()]);
        let backward = run(vec![d2, d1]);
        assert_eq!(forward, backward);
        assert_eq!(forward.0.len(), 2); // minutes 3 and 6
        assert_eq!(forward.1.len(), 2);
    }
}
