//! Wall-clock paced sessions with the northbound API attached.

use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;
use tokio::sync::broadcast;

use super::config::{ConfigError, ScenarioConfig};
use super::engine::{Engine, RunOptions};
use super::report::Report;
use crate::control::{ApiState, CommandLog, ScenarioControl, ScenarioState, ScenarioStatus, TelemetryFrame};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pacing factor must be positive, got {0}")]
    InvalidPace(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSnapshot {
    pub status: ScenarioStatus,
    pub latest: Option<TelemetryFrame>,
}

#[derive(Debug, Default)]
struct Flags {
    started: bool,
    stop: bool,
}

struct Shared {
    flags: Mutex<Flags>,
    wake: Condvar,
    snapshot: RwLock<Arc<LiveSnapshot>>,
}

impl Shared {
    fn flags(&self) -> MutexGuard<'_, Flags> {
        self.flags.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn status(&self) -> ScenarioStatus {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).status.clone()
    }

    fn publish(&self, snap: LiveSnapshot) {
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(snap);
    }
}

/// Start/stop handle given to the HTTP layer.
#[derive(Clone)]
pub struct LiveControl(Arc<Shared>);

impl ScenarioControl for LiveControl {
    fn start(&self) -> Result<ScenarioStatus, String> {
        let status = self.0.status();
        if status.state == ScenarioState::Finished {
            return Err("scenario already finished".into());
        }
        self.0.flags().started = true;
        self.0.wake.notify_all();
        Ok(ScenarioStatus {
            state: ScenarioState::Running,
            t: status.t,
        })
    }

    fn stop(&self) -> Result<ScenarioStatus, String> {
        let status = self.0.status();
        if status.state == ScenarioState::Finished {
            return Err("scenario already finished".into());
        }
        self.0.flags().stop = true;
        self.0.wake.notify_all();
        Ok(status)
    }
}

impl LiveControl {
    pub fn status(&self) -> ScenarioStatus {
        self.0.status()
    }

    pub fn is_finished(&self) -> bool {
        self.0.status().state == ScenarioState::Finished
    }

    /// Asks the simulation thread to end the session at the next boundary.
    pub fn request_stop(&self) {
        self.0.flags().stop = true;
        self.0.wake.notify_all();
    }
}

/// Result of a finished live session.
pub struct LiveOutcome {
    pub report: Report,
    pub log: CommandLog,
}

pub struct LiveSession {
    shared: Arc<Shared>,
    api: ApiState,
    thread: JoinHandle<LiveOutcome>,
}

impl LiveSession {
    /// Spawns the simulation thread. It idles until started, either here
    /// (`autostart`) or through `POST /scenario/start`.
    pub fn spawn(config: ScenarioConfig, pace: f64, autostart: bool) -> Result<Self, LiveError> {
        if !(pace > 0.0) {
            return Err(LiveError::InvalidPace(pace));
        }
        let engine = Engine::new(config, RunOptions::default())?;
        let (frames, _) = broadcast::channel(1024);
        let shared = Arc::new(Shared {
            flags: Mutex::new(Flags {
                started: autostart,
                stop: false,
            }),
            wake: Condvar::new(),
            snapshot: RwLock::new(Arc::new(LiveSnapshot {
                status: ScenarioStatus {
                    state: ScenarioState::Idle,
                    t: 0.0,
                },
                latest: None,
            })),
        });
        let api = ApiState {
            gateway: engine.gateway(),
            frames: frames.clone(),
            scenario: Some(Arc::new(LiveControl(Arc::clone(&shared)))),
        };
        let thread_shared = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name("sim".into())
            .spawn(move || drive(engine, pace, thread_shared, frames))
            .expect("spawn simulation thread");
        Ok(LiveSession { shared, api, thread })
    }

    pub fn api_state(&self) -> ApiState {
        self.api.clone()
    }

    pub fn control(&self) -> LiveControl {
        LiveControl(Arc::clone(&self.shared))
    }

    pub fn snapshot(&self) -> Arc<LiveSnapshot> {
        Arc::clone(&self.shared.snapshot.read().unwrap_or_else(|p| p.into_inner()))
    }

    pub fn is_finished(&self) -> bool {
        self.thread.is_finished()
    }

    /// Blocks until the session ends (duration reached or stopped).
    pub fn join(self) -> LiveOutcome {
        self.thread.join().expect("simulation thread panicked")
    }
}

fn drive(mut engine: Engine, pace: f64, shared: Arc<Shared>, frames: broadcast::Sender<TelemetryFrame>) -> LiveOutcome {
    {
        let mut flags = shared.flags();
        while !flags.started && !flags.stop {
            flags = shared.wake.wait(flags).unwrap_or_else(|p| p.into_inner());
        }
    }
    let period = SimTime::from_secs_f64(engine.config().stats_period_s);
    let wall0 = Instant::now();
    let mut latest = None;
    loop {
        if shared.flags().stop {
            engine.stop_now();
        } else {
            let target = engine.now() + period;
            engine.run_until(target);
        }
        for r in engine.take_fresh_reports() {
            let frame = TelemetryFrame::from(&r);
            // No subscribers is fine.
            let _ = frames.send(frame.clone());
            latest = Some(frame);
        }
        let finished = engine.is_finished();
        shared.publish(LiveSnapshot {
            status: ScenarioStatus {
                state: if finished {
                    ScenarioState::Finished
                } else {
                    ScenarioState::Running
                },
                t: engine.now().as_secs_f64(),
            },
            latest: latest.clone(),
        });
        if finished {
            break;
        }
        let due = wall0 + Duration::from_secs_f64(engine.now().as_secs_f64() / pace);
        let mut flags = shared.flags();
        loop {
            let now = Instant::now();
            if flags.stop || now >= due {
                break;
            }
            flags = shared
                .wake
                .wait_timeout(flags, due - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }
    let log = engine.command_log();
    tracing::info!(t = engine.now().as_secs_f64(), commands = log.entries.len(), "live session ended");
    LiveOutcome {
        report: engine.into_report(),
        log,
    }
}
