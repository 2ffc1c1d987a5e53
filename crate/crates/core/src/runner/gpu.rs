//! GPU memory sampling through an external probe command.
//!
//! The probe is any shell command that prints one base-10 integer (MB in use)
//! and exits zero, for example
//! `nvidia-smi --query-gpu=memory.used --format=csv,noheader,nounits`.
//! A nonzero exit or unparsable output counts as a failed sample.

use std::process::Command;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RunnerError;

pub const MIN_INTERVAL_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpuProbe {
    pub probe_command: String,
    pub interval_ms: u64,
    #[serde(default)]
    pub gpu_total_mb: Option<u64>,
}

impl GpuProbe {
    pub fn new(probe_command: impl Into<String>) -> Self {
        GpuProbe {
            probe_command: probe_command.into(),
            interval_ms: 100,
            gpu_total_mb: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.interval_ms < MIN_INTERVAL_MS {
            return Err(RunnerError::Config(format!(
                "probe interval must be >= {MIN_INTERVAL_MS} ms"
            )));
        }
        if self.probe_command.trim().is_empty() {
            return Err(RunnerError::Config("probe command is empty".into()));
        }
        Ok(())
    }

    fn sample(&self) -> Option<u64> {
        let out = Command::new("sh")
            .arg("-c")
            .arg(&self.probe_command)
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        // multi-GPU utilities print one line per device; take the first
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .next()?
            .trim()
            .parse()
            .ok()
    }
}

/// A running sampler. The first sample is taken as soon as the window opens,
/// so even a window shorter than the interval yields one reading.
pub struct GpuWindow {
    stop: Sender<()>,
    worker: JoinHandle<(Option<u64>, usize)>,
}

impl GpuWindow {
    pub fn start(probe: &GpuProbe) -> Self {
        let (stop, rx) = mpsc::channel();
        let probe = probe.clone();
        let worker = std::thread::spawn(move || {
            let interval = Duration::from_millis(probe.interval_ms);
            let mut peak: Option<u64> = None;
            let mut attempts = 0;
            loop {
                attempts += 1;
                if let Some(v) = probe.sample() {
                    peak = Some(peak.map_or(v, |p| p.max(v)));
                }
                match rx.recv_timeout(interval) {
                    Err(RecvTimeoutError::Timeout) => continue,
                    Ok(()) | Err(RecvTimeoutError::Disconnected) => break,
                }
            }
            (peak, attempts)
        });
        GpuWindow { stop, worker }
    }

    /// Closes the window and returns the peak reading, or `None` when every
    /// sample failed.
    pub fn stop(self) -> Option<u64> {
        let _ = self.stop.send(());
        match self.worker.join() {
            Ok((Some(peak), _)) => Some(peak),
            Ok((None, attempts)) => {
                log::warn!("GPU probe failed on all {attempts} sample(s); no memory reading");
                None
            }
            Err(_) => {
                log::warn!("GPU sampler thread panicked");
                None
            }
        }
    }
}

/// Samples the probe while `work` runs and returns its output with the peak.
pub fn sample_gpu_peak<R>(probe: &GpuProbe, work: impl FnOnce() -> R) -> (R, Option<u64>) {
    let window = GpuWindow::start(probe);
    let out = work();
    (out, window.stop())
}
