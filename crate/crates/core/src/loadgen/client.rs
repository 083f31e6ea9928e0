//! Rate-paced open-loop TCP client.
//!
//! Each thread walks the trace, sending requests at the scheduled instants
//! regardless of outstanding replies, so server saturation shows up as
//! latency growth instead of a reduced send rate. A thread's request budget
//! is split into `sessions` contiguous chunks; every chunk opens a fresh
//! connection to the next target in round-robin order. Replies are consumed
//! by a per-session reader thread and merged into one response log.

use super::proto::{read_frame, write_frame, Frame};
use super::{LoadGenError, WorkloadTrace};
use crate::sim::ResponseRecord;
use std::io::Write as _;
use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

/// Target list shared with the control loop, which may add or remove
/// addresses while the client is running.
pub type SharedTargets = Arc<RwLock<Vec<SocketAddr>>>;

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub threads: usize,
    /// Connection chunks per thread.
    pub sessions: usize,
    /// Per-thread request rates; each segment held for `segment_secs`.
    pub trace: WorkloadTrace,
    /// 60 in the standard setup; tests shrink it.
    pub segment_secs: u64,
    pub payload_len: usize,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            threads: 6,
            sessions: 1000,
            trace: WorkloadTrace { rates: vec![1.0] },
            segment_secs: 60,
            payload_len: 16,
            connect_timeout: Duration::from_secs(2),
            read_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug)]
pub struct ClientReport {
    /// Completed round trips, sorted by send time.
    pub records: Vec<ResponseRecord>,
    pub sent: u64,
    pub received: u64,
    /// Requests that could not be delivered after a retry.
    pub failed_sends: u64,
    /// Requests sent per trace segment, summed over threads.
    pub sent_per_segment: Vec<u64>,
}

/// Runs the paced client against a fixed target list.
pub fn run_client(cfg: &ClientConfig, targets: &[SocketAddr]) -> Result<ClientReport, LoadGenError> {
    let shared: SharedTargets = Arc::new(RwLock::new(targets.to_vec()));
    run_client_with_targets(cfg, shared)
}

/// Runs the paced client against a target list that may change between
/// sessions (live-mode scaling).
pub fn run_client_with_targets(
    cfg: &ClientConfig,
    targets: SharedTargets,
) -> Result<ClientReport, LoadGenError> {
    if cfg.threads == 0 || cfg.sessions == 0 {
        return Err(LoadGenError::InvalidTrace("threads and sessions must be >= 1".into()));
    }
    if targets.read().expect("targets lock").is_empty() {
        return Err(LoadGenError::NoTargets);
    }
    let epoch = Instant::now();
    let mut handles = Vec::new();
    for thread_idx in 0..cfg.threads {
        let cfg = cfg.clone();
        let targets = Arc::clone(&targets);
        handles.push(std::thread::spawn(move || thread_main(thread_idx, &cfg, &targets, epoch)));
    }
    let mut records = Vec::new();
    let mut sent = 0;
    let mut received = 0;
    let mut failed_sends = 0;
    let mut sent_per_segment = vec![0u64; cfg.trace.len()];
    for h in handles {
        let out = h.join().expect("client thread panicked");
        records.extend(out.records);
        sent += out.sent;
        received += out.received;
        failed_sends += out.failed_sends;
        for (total, part) in sent_per_segment.iter_mut().zip(out.sent_per_segment) {
            *total += part;
        }
    }
    records.sort_by(|a, b| {
        (a.send_ts, a.completion_ts)
            .partial_cmp(&(b.send_ts, b.completion_ts))
            .expect("finite timestamps")
    });
    Ok(ClientReport { records, sent, received, failed_sends, sent_per_segment })
}

struct ThreadOutput {
    records: Vec<ResponseRecord>,
    sent: u64,
    received: u64,
    failed_sends: u64,
    sent_per_segment: Vec<u64>,
}

/// Send schedule entry: segment index and offset from the epoch.
struct Slot {
    segment: usize,
    at: Duration,
}

fn schedule(trace: &WorkloadTrace, segment_secs: u64) -> Vec<Slot> {
    let mut slots = Vec::new();
    for (segment, &rate) in trace.rates.iter().enumerate() {
        let n = (rate * segment_secs as f64).round() as u64;
        let segment_start = segment as u64 * segment_secs;
        for j in 0..n {
            let offset = j as f64 / rate; // seconds into the segment
            slots.push(Slot {
                segment,
                at: Duration::from_secs_f64(segment_start as f64 + offset),
            });
        }
    }
    slots
}

struct Session {
    stream: TcpStream,
    reader: std::thread::JoinHandle<Vec<ResponseRecord>>,
    sent: u64,
}

fn open_session(
    cfg: &ClientConfig,
    targets: &SharedTargets,
    rr_counter: &mut usize,
    epoch: Instant,
) -> Result<Session, LoadGenError> {
    let addr = {
        let list = targets.read().expect("targets lock");
        if list.is_empty() {
            return Err(LoadGenError::NoTargets);
        }
        let addr = list[*rr_counter % list.len()];
        *rr_counter += 1;
        addr
    };
    let stream = TcpStream::connect_timeout(&addr, cfg.connect_timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(cfg.read_timeout))?;
    let read_half = stream.try_clone()?;
    let instance = addr.to_string();
    let reader = std::thread::spawn(move || read_replies(read_half, instance, epoch));
    Ok(Session { stream, reader, sent: 0 })
}

fn read_replies(mut stream: TcpStream, instance: String, epoch: Instant) -> Vec<ResponseRecord> {
    let mut records = Vec::new();
    loop {
        match read_frame(&mut stream) {
            Ok(Some(frame)) => {
                let now = epoch.elapsed().as_secs_f64();
                let send_ts = frame.send_ts_ns as f64 / 1e9;
                records.push(ResponseRecord {
                    send_ts,
                    completion_ts: now,
                    response_ms: (now - send_ts) * 1000.0,
                    instance_id: instance.clone(),
                });
            }
            Ok(None) => break,
            Err(e) => {
                log::debug!("reader stopped: {e}");
                break;
            }
        }
    }
    records
}

fn close_session(session: Session, records: &mut Vec<ResponseRecord>) -> u64 {
    let Session { stream, reader, sent } = session;
    // half-close lets the server drain and answer everything in flight
    let _ = stream.shutdown(std::net::Shutdown::Write);
    let got = reader.join().expect("reader thread panicked");
    let received = got.len() as u64;
    records.extend(got);
    let _ = sent;
    received
}

fn thread_main(
    thread_idx: usize,
    cfg: &ClientConfig,
    targets: &SharedTargets,
    epoch: Instant,
) -> ThreadOutput {
    let slots = schedule(&cfg.trace, cfg.segment_secs);
    let budget = slots.len();
    let mut out = ThreadOutput {
        records: Vec::new(),
        sent: 0,
        received: 0,
        failed_sends: 0,
        sent_per_segment: vec![0; cfg.trace.len()],
    };
    if budget == 0 {
        return out;
    }
    // contiguous chunk boundaries; spreads the remainder across sessions
    let session_of = |req_idx: usize| req_idx * cfg.sessions / budget;
    let payload = vec![thread_idx as u8; cfg.payload_len];

    let mut rr_counter = thread_idx; // stagger threads across targets
    let mut session: Option<Session> = None;
    let mut current_session_id = usize::MAX;

    for (req_idx, slot) in slots.iter().enumerate() {
        if session_of(req_idx) != current_session_id {
            if let Some(s) = session.take() {
                out.received += close_session(s, &mut out.records);
            }
            current_session_id = session_of(req_idx);
        }
        // open-loop pacing: sleep until the scheduled instant
        let now = epoch.elapsed();
        if slot.at > now {
            std::thread::sleep(slot.at - now);
        }

        let mut attempts = 0;
        loop {
            if session.is_none() {
                match open_session(cfg, targets, &mut rr_counter, epoch) {
                    Ok(s) => session = Some(s),
                    Err(e) => {
                        log::debug!("connect failed: {e}");
                        attempts += 1;
                        if attempts >= 2 {
                            out.failed_sends += 1;
                            break;
                        }
                        continue;
                    }
                }
            }
            let s = session.as_mut().expect("session just opened");
            let frame = Frame {
                send_ts_ns: epoch.elapsed().as_nanos() as u64,
                payload: payload.clone(),
            };
            match write_frame(&mut s.stream, &frame).and_then(|()| Ok(s.stream.flush()?)) {
                Ok(()) => {
                    s.sent += 1;
                    out.sent += 1;
                    out.sent_per_segment[slot.segment] += 1;
                    break;
                }
                Err(e) => {
                    // broken connection: drop it and retry once on a fresh
                    // session, per-request
                    log::debug!("send failed: {e}");
                    out.received += close_session(session.take().expect("present"), &mut out.records);
                    attempts += 1;
                    if attempts >= 2 {
                        out.failed_sends += 1;
                        break;
                    }
                }
            }
        }
    }
    if let Some(s) = session.take() {
        out.received += close_session(s, &mut out.records);
    }
    out
}
