//! TCP server that burns a fixed amount of CPU per request.

use super::proto::{read_frame, write_frame, Frame};
use super::LoadGenError;
use std::io::BufWriter;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::Instant;

/// Accepts connections and answers each request frame after a busy loop
/// calibrated to `per_request_cost` CPU-seconds.
pub struct Server {
    listener: TcpListener,
    iters_per_request: u64,
}

impl Server {
    /// Binds the listen address and calibrates the busy loop against the
    /// monotonic clock, so the cost stays stable across hosts.
    pub fn bind(addr: &str, per_request_cost_s: f64) -> Result<Self, LoadGenError> {
        if !(per_request_cost_s >= 0.0 && per_request_cost_s.is_finite()) {
            return Err(LoadGenError::Protocol("per-request cost must be >= 0".into()));
        }
        let listener = TcpListener::bind(addr)?;
        let iters_per_request = if per_request_cost_s == 0.0 {
            0
        } else {
            (calibrate_iters_per_second() * per_request_cost_s) as u64
        };
        Ok(Self { listener, iters_per_request })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, LoadGenError> {
        Ok(self.listener.local_addr()?)
    }

    /// Blocking accept loop; one handler thread per connection. Runs until
    /// the process is killed.
    pub fn run(self) -> Result<(), LoadGenError> {
        let iters = self.iters_per_request;
        for stream in self.listener.incoming() {
            match stream {
                Ok(stream) => {
                    std::thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, iters) {
                            log::debug!("connection closed: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread and returns the bound
    /// address. The thread lives until process exit; tests bind port 0.
    pub fn spawn(self) -> Result<SocketAddr, LoadGenError> {
        let addr = self.local_addr()?;
        std::thread::spawn(move || {
            if let Err(e) = self.run() {
                log::error!("server stopped: {e}");
            }
        });
        Ok(addr)
    }
}

fn handle_connection(stream: TcpStream, iters_per_request: u64) -> Result<(), LoadGenError> {
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        burn(iters_per_request);
        write_frame(&mut writer, &Frame { send_ts_ns: frame.send_ts_ns, payload: Vec::new() })?;
        use std::io::Write;
        writer.flush()?;
    }
    Ok(())
}

/// CPU-bound spin unit; black_box keeps the optimizer from deleting it.
#[inline]
fn spin_chunk(mut x: u64, iters: u64) -> u64 {
    for _ in 0..iters {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        x ^= x >> 33;
    }
    std::hint::black_box(x)
}

fn burn(iters: u64) {
    if iters > 0 {
        spin_chunk(0x9E3779B97F4A7C15, iters);
    }
}

fn calibrate_iters_per_second() -> f64 {
    // warm up, then time a fixed chunk count
    spin_chunk(1, 100_000);
    let chunk = 2_000_000u64;
    let mut total_iters = 0u64;
    let start = Instant::now();
    while start.elapsed().as_millis() < 60 {
        spin_chunk(total_iters, chunk);
        total_iters += chunk;
    }
    total_iters as f64 / start.elapsed().as_secs_f64()
}
