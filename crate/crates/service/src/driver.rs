//! The simulation driver thread. It alone owns the [`Session`]; everything
//! else talks to it through a request queue and the snapshot broadcast.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use reglove_core::harness::ScenarioReport;
use reglove_core::session::{LogEntry, OperatorCommand, Rejection, Session, SessionConfig};
use tokio::sync::{broadcast, oneshot, watch};

use crate::ServiceError;

/// Snapshots kept for clients that fall behind before they are skipped
/// ahead to the newest one.
const BROADCAST_DEPTH: usize = 64;

#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub session: SessionConfig,
    pub scenario_dir: Option<PathBuf>,
    pub base_config: Option<toml::Table>,
    /// Command log, appended as commands are applied.
    pub log_path: Option<PathBuf>,
    /// Wall-clock time per simulation frame. Defaults to the frame's
    /// simulated length (real time).
    pub frame_interval: Option<Duration>,
}

impl DriverConfig {
    pub fn new(session: SessionConfig) -> Self {
        DriverConfig {
            session,
            scenario_dir: None,
            base_config: None,
            log_path: None,
            frame_interval: None,
        }
    }
}

enum Request {
    Command(OperatorCommand, oneshot::Sender<Result<u64, Rejection>>),
    Reports(oneshot::Sender<BTreeMap<String, ScenarioReport>>),
    Scenarios(oneshot::Sender<Vec<String>>),
    Log(oneshot::Sender<Vec<u8>>),
    Shutdown,
}

/// Cheap, cloneable access to a running driver.
#[derive(Clone)]
pub struct DriverHandle {
    requests: mpsc::Sender<Request>,
    snapshots: broadcast::Sender<Arc<str>>,
    latest: watch::Receiver<Arc<str>>,
}

impl DriverHandle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.requests.send(make(tx)).map_err(|_| ServiceError::DriverGone)?;
        rx.await.map_err(|_| ServiceError::DriverGone)
    }

    /// Queues a command for the next frame boundary. On success returns
    /// the frame it took effect at.
    pub async fn command(&self, cmd: OperatorCommand) -> Result<Result<u64, Rejection>, ServiceError> {
        self.ask(|tx| Request::Command(cmd, tx)).await
    }

    pub async fn reports(&self) -> Result<BTreeMap<String, ScenarioReport>, ServiceError> {
        self.ask(Request::Reports).await
    }

    pub async fn scenarios(&self) -> Result<Vec<String>, ServiceError> {
        self.ask(Request::Scenarios).await
    }

    /// The command log so far, as JSON lines.
    pub async fn log(&self) -> Result<Vec<u8>, ServiceError> {
        self.ask(Request::Log).await
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.snapshots.subscribe()
    }

    /// The most recent snapshot, already serialized.
    pub fn latest(&self) -> Arc<str> {
        self.latest.borrow().clone()
    }
}

pub struct Driver {
    handle: DriverHandle,
    join: Option<JoinHandle<()>>,
}

impl Driver {
    pub fn spawn(cfg: DriverConfig) -> Result<Self, ServiceError> {
        let mut session = Session::new(cfg.session.clone())?;
        if let Some(dir) = &cfg.scenario_dir {
            session = session.with_scenario_dir(dir.clone(), cfg.base_config.clone());
        }
        let mut log = match &cfg.log_path {
            Some(path) => Some(LogWriter::create(path.clone())?),
            None => None,
        };
        if let Some(w) = log.as_mut() {
            w.append(session.log())?;
        }
        let frame_ms = cfg.session.frame_ms;
        let interval = cfg
            .frame_interval
            .unwrap_or_else(|| Duration::from_secs_f64(frame_ms / 1000.0));
        let first: Arc<str> = session.snapshot().to_json().into();
        let (snapshots, _) = broadcast::channel(BROADCAST_DEPTH);
        let (latest_tx, latest) = watch::channel(first);
        let (requests, rx) = mpsc::channel();
        let loop_tx = snapshots.clone();
        let join = thread::Builder::new()
            .name("sim-driver".into())
            .spawn(move || run(session, rx, loop_tx, latest_tx, interval, log))
            .map_err(ServiceError::Io)?;
        Ok(Driver {
            handle: DriverHandle { requests, snapshots, latest },
            join: Some(join),
        })
    }

    pub fn handle(&self) -> DriverHandle {
        self.handle.clone()
    }

    /// Stops the loop and writes the log end marker.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let _ = self.handle.requests.send(Request::Shutdown);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for Driver {
    fn drop(&mut self) {
        self.stop();
    }
}

struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    written: usize,
}

impl LogWriter {
    fn create(path: PathBuf) -> Result<Self, ServiceError> {
        let file = File::create(&path).map_err(ServiceError::Io)?;
        Ok(LogWriter { path, out: BufWriter::new(file), written: 0 })
    }

    fn append(&mut self, entries: &[LogEntry]) -> Result<(), ServiceError> {
        for entry in &entries[self.written..] {
            let line = serde_json::to_string(entry).expect("log entry serializes");
            writeln!(self.out, "{line}").map_err(ServiceError::Io)?;
        }
        self.written = entries.len();
        self.out.flush().map_err(ServiceError::Io)
    }

    fn finish(&mut self, frame: u64) {
        let end = serde_json::to_string(&LogEntry::End { frame }).expect("log entry serializes");
        if let Err(e) = writeln!(self.out, "{end}").and_then(|_| self.out.flush()) {
            log::error!("{}: {e}", self.path.display());
        }
    }
}

fn run(
    mut session: Session,
    rx: mpsc::Receiver<Request>,
    snapshots: broadcast::Sender<Arc<str>>,
    latest: watch::Sender<Arc<str>>,
    interval: Duration,
    mut log: Option<LogWriter>,
) {
    let mut pending: Vec<(OperatorCommand, oneshot::Sender<Result<u64, Rejection>>)> = Vec::new();
    let mut next_frame = Instant::now() + interval;
    loop {
        // gather requests until the frame boundary
        loop {
            let wait = next_frame.saturating_duration_since(Instant::now());
            if wait.is_zero() {
                break;
            }
            match rx.recv_timeout(wait) {
                Ok(Request::Command(cmd, reply)) => pending.push((cmd, reply)),
                Ok(Request::Reports(reply)) => {
                    let _ = reply.send(session.reports().clone());
                }
                Ok(Request::Scenarios(reply)) => {
                    let _ = reply.send(session.list_scenarios());
                }
                Ok(Request::Log(reply)) => {
                    let mut buf = Vec::new();
                    session.write_log(&mut buf).expect("writing to memory");
                    let _ = reply.send(buf);
                }
                Ok(Request::Shutdown) | Err(RecvTimeoutError::Disconnected) => {
                    if let Some(w) = log.as_mut() {
                        let _ = w.append(session.log());
                        w.finish(session.frame());
                    }
                    log::info!("driver stopped at frame {}", session.frame());
                    return;
                }
                Err(RecvTimeoutError::Timeout) => break,
            }
        }

        // commands take effect at the boundary, in arrival order
        for (cmd, reply) in pending.drain(..) {
            let result = session.apply(cmd.clone());
            match &result {
                Ok(()) => log::debug!("frame {}: {cmd:?}", session.frame()),
                Err(r) => log::info!("frame {}: rejected {cmd:?}: {}", session.frame(), r.reason),
            }
            let _ = reply.send(result.map(|_| session.frame()));
        }
        if let Some(w) = log.as_mut() {
            if let Err(e) = w.append(session.log()) {
                log::error!("command log: {e}");
            }
        }

        let snap: Arc<str> = session.advance_frame().to_json().into();
        // no subscribers is fine
        let _ = snapshots.send(snap.clone());
        latest.send_replace(snap);

        next_frame += interval;
        let now = Instant::now();
        if next_frame < now {
            // fell behind: keep the cadence rather than bursting
            next_frame = now;
        }
    }
}
