//! Live session: a trial whose other agent is steered over a socket.
//!
//! Wire format is one JSON object per line, tagged by `type`, each carrying
//! `version`. The server opens with `hello`, then publishes one `state` per
//! tick. Clients send `hello` (optional) and `action` records; a malformed
//! record gets an `error` record back and the session carries on. Commands
//! are queued and the newest is applied at the next tick boundary. When the
//! client disconnects the other agent stops.
//!
//! ```text
//! → {"type":"hello","version":1,"scenario":"interactive_other","seed":1,"dt_s":0.05,"dof":7}
//! ← {"type":"action","version":1,"command":{"kind":"wave","direction":"left"}}
//! ← {"type":"action","version":1,"command":{"kind":"joint_velocity","velocity":[0.3,0,0,0,0,0,0]}}
//! ← {"type":"action","version":1,"command":{"kind":"stop"}}
//! → {"type":"state","version":1,"tick":0,"t":0.0,"phase":"pre_learning","status":"unknown",
//!    "other_joints":[...],"p_self":0.0,"p_cont":0.5,"e_v":null,"finished":false}
//! → {"type":"error","version":1,"message":"..."}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::contingency::Classifier;
use crate::error::{Error, Result};
use crate::evidence::Status;
use crate::simworld::world::HumanCommand;
use crate::DOF;

use super::config::{ScenarioConfig, ScenarioKind};
use super::summary::RunSummary;
use super::trace::{Phase, TraceRecord};
use super::trial::Trial;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<String>,
    },
    Action {
        version: u32,
        command: HumanCommand,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub version: u32,
    pub tick: u64,
    pub t: f64,
    pub phase: Phase,
    pub status: Status,
    pub other_joints: Option<[f64; DOF]>,
    pub p_self: f64,
    pub p_cont: f64,
    pub e_v: Option<[f64; 2]>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: u32,
        scenario: String,
        seed: u64,
        dt_s: f64,
        dof: usize,
    },
    State(StateFrame),
    Error {
        version: u32,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            version: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

impl ClientMessage {
    pub fn action(command: HumanCommand) -> Self {
        ClientMessage::Action {
            version: PROTOCOL_VERSION,
            command,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Transport-free session state. Feed it client lines, tick it, send
/// back what it returns.
pub struct Session {
    trial: Trial,
    pending: Option<HumanCommand>,
    trace: Vec<TraceRecord>,
}

impl Session {
    pub fn new(cfg: &ScenarioConfig, classifier: Arc<Classifier>) -> Result<Self> {
        if cfg.kind != ScenarioKind::InteractiveOther {
            return Err(Error::config("kind", "a live session needs kind = \"interactive_other\""));
        }
        Ok(Self {
            trial: Trial::new(cfg, classifier)?,
            pending: None,
            trace: Vec::new(),
        })
    }

    pub fn hello(&self) -> ServerMessage {
        let cfg = self.trial.config();
        ServerMessage::Hello {
            version: PROTOCOL_VERSION,
            scenario: cfg.kind.name().to_string(),
            seed: cfg.seed,
            dt_s: cfg.world.dt_s,
            dof: DOF,
        }
    }

    /// Handle one client line. Returns the reply, if any.
    pub fn handle_line(&mut self, line: &str) -> Option<ServerMessage> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        let msg: ClientMessage = match serde_json::from_str(line) {
            Ok(m) => m,
            Err(e) => return Some(ServerMessage::error(format!("malformed message: {e}"))),
        };
        let version = match &msg {
            ClientMessage::Hello { version, .. } | ClientMessage::Action { version, .. } => *version,
        };
        if version != PROTOCOL_VERSION {
            return Some(ServerMessage::error(format!(
                "unsupported protocol version {version}, expected {PROTOCOL_VERSION}"
            )));
        }
        match msg {
            ClientMessage::Hello { .. } => Some(self.hello()),
            ClientMessage::Action { command, .. } => {
                if let HumanCommand::JointVelocity { velocity } = &command {
                    if velocity.iter().any(|v| !v.is_finite()) {
                        return Some(ServerMessage::error("joint velocity must be finite"));
                    }
                }
                self.pending = Some(command);
                None
            }
        }
    }

    /// Client gone: the other agent stops and queued input is dropped.
    pub fn disconnect(&mut self) {
        self.pending = None;
        self.trial.freeze_other();
    }

    pub fn is_finished(&self) -> bool {
        self.trial.is_finished()
    }

    /// Apply the newest queued command, advance one tick and publish.
    pub fn tick(&mut self) -> Result<StateFrame> {
        if let Some(cmd) = self.pending.take() {
            self.trial.command_other(cmd)?;
        }
        let other = self.trial.world().state().other_joints;
        let rec = self.trial.tick()?;
        let frame = StateFrame {
            version: PROTOCOL_VERSION,
            tick: rec.tick,
            t: rec.t,
            phase: rec.phase,
            status: rec.status,
            other_joints: other.map(Into::into),
            p_self: rec.p_self,
            p_cont: rec.p_cont,
            e_v: rec.e_v,
            finished: self.trial.is_finished(),
        };
        self.trace.push(rec);
        Ok(frame)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<TraceRecord> {
        self.trace
    }
}

/// Replays recorded self actions as joint-velocity commands, `lag_ticks`
/// behind. Before the lag has elapsed, and after the recording ends, the
/// agent is told to stop.
#[derive(Debug, Clone)]
pub struct ReplayInjector {
    actions: Vec<[f64; DOF]>,
    lag_ticks: usize,
}

impl ReplayInjector {
    pub fn new(trace: &[TraceRecord], lag_s: f64, dt_s: f64) -> Self {
        Self {
            actions: trace.iter().map(|r| r.a).collect(),
            lag_ticks: (lag_s.max(0.0) / dt_s).round() as usize,
        }
    }

    pub fn lag_ticks(&self) -> usize {
        self.lag_ticks
    }

    /// Command to apply during tick `tick`.
    pub fn command(&self, tick: u64) -> HumanCommand {
        let k = tick as usize;
        match k.checked_sub(self.lag_ticks).and_then(|i| self.actions.get(i)) {
            Some(v) => HumanCommand::JointVelocity { velocity: *v },
            None => HumanCommand::Stop,
        }
    }

    pub fn line(&self, tick: u64) -> String {
        ClientMessage::action(self.command(tick)).to_line()
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
    /// Error records sent to the client.
    pub errors: usize,
}

/// Run a session in-process, feeding the injector's commands through the
/// wire format.
pub fn run_replay(cfg: &ScenarioConfig, classifier: Arc<Classifier>, injector: &ReplayInjector) -> Result<SessionOutput> {
    let mut session = Session::new(cfg, classifier)?;
    let mut errors = 0;
    let mut tick = 0;
    while !session.is_finished() {
        if session.handle_line(&injector.line(tick)).is_some() {
            errors += 1;
        }
        session.tick()?;
        tick += 1;
    }
    let trace = session.into_trace();
    Ok(SessionOutput {
        summary: RunSummary::from_trace(&trace),
        trace,
        errors,
    })
}

enum Inbound {
    Line(String),
    Closed,
}

fn write_line(stream: &mut TcpStream, msg: &ServerMessage) -> std::io::Result<()> {
    let mut s = msg.to_line();
    s.push('\n');
    stream.write_all(s.as_bytes())
}

/// Accept one client on `listener` and run the trial live. Paced at
/// `session.speedup` simulated seconds per second (0 = unthrottled).
pub fn serve(cfg: &ScenarioConfig, classifier: Arc<Classifier>, listener: &TcpListener) -> Result<SessionOutput> {
    let mut session = Session::new(cfg, classifier)?;
    let sess_err = |e: std::io::Error| Error::Session(e.to_string());
    let (stream, _) = listener.accept().map_err(sess_err)?;
    stream.set_nodelay(true).map_err(sess_err)?;
    let mut out = stream.try_clone().map_err(sess_err)?;
    let reader = stream.try_clone().map_err(sess_err)?;
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            match line {
                Ok(l) => {
                    if tx.send(Inbound::Line(l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = tx.send(Inbound::Closed);
    });

    let mut connected = write_line(&mut out, &session.hello()).is_ok();
    let mut errors = 0;
    let period = cfg.world.dt_s / cfg.session.speedup.max(f64::MIN_POSITIVE);
    let start = Instant::now();
    let mut tick: u32 = 0;
    while !session.is_finished() {
        while let Ok(msg) = rx.try_recv() {
            match msg {
                Inbound::Line(l) => {
                    if let Some(reply) = session.handle_line(&l) {
                        if matches!(reply, ServerMessage::Error { .. }) {
                            errors += 1;
                        }
                        if connected {
                            connected = write_line(&mut out, &reply).is_ok();
                        }
                    }
                }
                Inbound::Closed => {
                    connected = false;
                    session.disconnect();
                }
            }
        }
        let frame = session.tick()?;
        if connected && write_line(&mut out, &ServerMessage::State(frame)).is_err() {
            connected = false;
            session.disconnect();
        }
        tick += 1;
        if cfg.session.speedup > 0.0 {
            let due = start + Duration::from_secs_f64(period * tick as f64);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    let _ = out.flush();
    let _ = stream.shutdown(std::net::Shutdown::Both);
    let _ = handle.join();
    let trace = session.into_trace();
    Ok(SessionOutput {
        summary: RunSummary::from_trace(&trace),
        trace,
        errors,
    })
}

/// Client side of a replay: connect, answer every state frame with the
/// injector's command for the next tick, return the frames seen.
pub fn replay_client(addr: &str, injector: &ReplayInjector) -> Result<Vec<StateFrame>> {
    let sess_err = |e: std::io::Error| Error::Session(e.to_string());
    let stream = TcpStream::connect(addr).map_err(sess_err)?;
    stream.set_nodelay(true).map_err(sess_err)?;
    let mut out = stream.try_clone().map_err(sess_err)?;
    let mut send = |tick: u64| -> Result<()> {
        let mut line = injector.line(tick);
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(sess_err)
    };
    let mut frames = Vec::new();
    let mut lines = BufReader::new(stream).lines();
    match lines.next() {
        Some(Ok(l)) => match serde_json::from_str::<ServerMessage>(&l) {
            Ok(ServerMessage::Hello { version, .. }) if version == PROTOCOL_VERSION => {}
            _ => return Err(Error::Session(format!("expected hello, got {l}"))),
        },
        _ => return Err(Error::Session("connection closed before hello".into())),
    }
    send(0)?;
    for line in lines {
        let line = line.map_err(sess_err)?;
        match serde_json::from_str::<ServerMessage>(&line) {
            Ok(ServerMessage::State(f)) => {
                let done = f.finished;
                let next = f.tick + 1;
                frames.push(f);
                if done {
                    break;
                }
                send(next)?;
            }
            Ok(ServerMessage::Error { message, .. }) => return Err(Error::Session(message)),
            Ok(ServerMessage::Hello { .. }) => {}
            Err(e) => return Err(Error::Session(format!("malformed server record: {e}"))),
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        let mut c = ScenarioConfig::for_kind(ScenarioKind::InteractiveOther);
        c.recognition.global_timeout_s = 3.0;
        c
    }

    fn session() -> Session {
        Session::new(&cfg(), Arc::new(Classifier::zeros(4, 0.1))).unwrap()
    }

    #[test]
    fn wire_format_is_tagged_and_versioned() {
        let line = ClientMessage::action(HumanCommand::Stop).to_line();
        assert_eq!(line, r#"{"type":"action","version":1,"command":{"kind":"stop"}}"#);
        let e = ServerMessage::error("x").to_line();
        assert_eq!(e, r#"{"type":"error","version":1,"message":"x"}"#);
        let back: ClientMessage =
            serde_json::from_str(r#"{"type":"action","version":1,"command":{"kind":"wave","direction":"left"}}"#).unwrap();
        assert_eq!(back, ClientMessage::action(HumanCommand::Wave { direction: crate::schedule::Side::Left }));
    }

    #[test]
    fn requires_the_interactive_scenario() {
        let c = ScenarioConfig::default();
        let err = Session::new(&c, Arc::new(Classifier::zeros(4, 0.1))).err().unwrap();
        assert!(err.is_config());
    }

    #[test]
    fn malformed_input_gets_an_error_record() {
        let mut s = session();
        for bad in [
            "not json",
            r#"{"type":"dance","version":1}"#,
            r#"{"type":"action","version":9,"command":{"kind":"stop"}}"#,
            r#"{"type":"action","version":1,"command":{"kind":"joint_velocity","velocity":[1,2]}}"#,
        ] {
            assert!(matches!(s.handle_line(bad), Some(ServerMessage::Error { .. })), "{bad}");
        }
        assert!(s.handle_line("").is_none());
        assert!(matches!(s.handle_line(r#"{"type":"hello","version":1}"#), Some(ServerMessage::Hello { .. })));
        assert!(s.tick().is_ok());
    }

    #[test]
    fn newest_command_wins_at_the_tick_boundary() {
        let mut s = session();
        let v = |x: f64| {
            let mut a = [0.0; DOF];
            a[0] = x;
            ClientMessage::action(HumanCommand::JointVelocity { velocity: a }).to_line()
        };
        let q0 = s.trial.world().state().other_joints.unwrap()[0];
        assert!(s.handle_line(&v(0.4)).is_none());
        assert!(s.handle_line(&v(-0.2)).is_none());
        s.tick().unwrap();
        let q1 = s.trial.world().state().other_joints.unwrap()[0];
        assert!((q1 - (q0 - 0.2 * 0.05)).abs() < 1e-12);
    }

    #[test]
    fn idle_session_never_sees_itself() {
        let mut s = session();
        let home = s.trial.world().state().other_joints;
        let mut last = None;
        while !s.is_finished() {
            last = Some(s.tick().unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.status, Status::Other);
        assert!(last.finished);
        assert_eq!(s.trial.world().state().other_joints, home);
        assert!(s.trace().iter().all(|r| r.s_v.is_none() && r.p_self == 0.0));
    }

    #[test]
    fn disconnect_freezes_the_other_agent() {
        let mut s = session();
        s.handle_line(&ClientMessage::action(HumanCommand::Wave { direction: crate::schedule::Side::Left }).to_line());
        for _ in 0..5 {
            s.tick().unwrap();
        }
        s.disconnect();
        s.tick().unwrap();
        let q = s.trial.world().state().other_joints;
        s.tick().unwrap();
        assert_eq!(s.trial.world().state().other_joints, q);
    }

    #[test]
    fn injector_lags_by_whole_ticks() {
        let mut recs = vec![crate::harness::trace::tests::sample_record(0, 0.1); 3];
        for (i, r) in recs.iter_mut().enumerate() {
            r.a = [i as f64 + 1.0; DOF];
        }
        let inj = ReplayInjector::new(&recs, 0.1, 0.05);
        assert_eq!(inj.lag_ticks(), 2);
        assert_eq!(inj.command(1), HumanCommand::Stop);
        assert_eq!(inj.command(2), HumanCommand::JointVelocity { velocity: [1.0; DOF] });
        assert_eq!(inj.command(4), HumanCommand::JointVelocity { velocity: [3.0; DOF] });
        assert_eq!(inj.command(5), HumanCommand::Stop);
    }
}
