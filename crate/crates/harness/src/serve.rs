//! Newline-delimited JSON over TCP.
//!
//! Clients send one JSON object per line:
//!
//! * data: `{"id": "m1", "subject": "b565", "ts": ..., "values": [...]}`, where
//!   `ts` is optional and echoed back untouched;
//! * rules update: `{"control": "rules", "rules": [...]}`;
//! * `{"control": "flush"}` releases everything buffered;
//! * `{"control": "shutdown"}` flushes and stops the server.
//!
//! Released tuples go back to the connection that submitted them as
//! `{"id", "subject", "cluster", "suppressed", "values"}`. Rejected lines are
//! answered with `{"error": "...", "id": ...}`.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;

use ksanon_core::{parse_rule_document, AttributeValue, GeneralizedValue, IncomingTuple, Pipeline, ReleasedTuple};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::schema::{parse_datetime, ColumnKind, Mapping};

#[derive(Deserialize)]
struct DataLine {
    id: String,
    subject: String,
    #[serde(default)]
    ts: Option<Value>,
    values: Vec<Value>,
}

struct State {
    pipeline: Pipeline,
    kinds: Vec<ColumnKind>,
    /// Buffered message id to its connection and echoed `ts`.
    origins: HashMap<String, (u64, Option<Value>)>,
    writers: HashMap<u64, TcpStream>,
    undelivered: u64,
}

struct Shared {
    state: Mutex<State>,
    stop: AtomicBool,
    addr: SocketAddr,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeSummary {
    pub connections: u64,
    /// Releases whose submitting connection had already closed.
    pub undelivered: u64,
}

fn value_from_json(v: &Value, kind: Option<ColumnKind>) -> Result<AttributeValue, String> {
    let r = match (v, kind) {
        (Value::String(s), Some(ColumnKind::Datetime)) => {
            AttributeValue::numeric(parse_datetime(s).ok_or_else(|| format!("`{s}` is not a date-time"))?)
        }
        (Value::String(s), Some(ColumnKind::Path)) => AttributeValue::with_path(s.split('|')),
        (Value::Number(n), _) => AttributeValue::numeric(n.as_f64().ok_or("number out of range")?),
        (Value::String(s), _) => AttributeValue::categorical(s.as_str()),
        (Value::Array(parts), _) => {
            let labels = parts
                .iter()
                .map(|p| p.as_str().map(str::to_owned).ok_or("path elements must be strings"))
                .collect::<Result<Vec<_>, _>>()?;
            AttributeValue::with_path(labels)
        }
        _ => return Err(format!("unsupported value {v}")),
    };
    r.map_err(|e| e.to_string())
}

pub fn value_to_json(v: &GeneralizedValue) -> Value {
    match v {
        GeneralizedValue::Interval { low, high } => json!({"low": low, "high": high}),
        GeneralizedValue::Node { label, leaves } => json!({"node": label, "leaves": leaves}),
        GeneralizedValue::Exact(AttributeValue::Numeric(x)) => json!(x),
        GeneralizedValue::Exact(AttributeValue::Categorical(s)) => json!(s),
        GeneralizedValue::Exact(AttributeValue::CategoricalWithPath(p)) => json!(p),
        GeneralizedValue::Redacted => Value::Null,
    }
}

fn release_line(r: &ReleasedTuple, ts: Option<Value>) -> Value {
    let mut line = json!({
        "id": r.message_id,
        "subject": r.subject_key,
        "cluster": r.cluster_id.to_string(),
        "suppressed": r.suppressed,
        "values": r.generalized.iter().map(value_to_json).collect::<Vec<_>>(),
    });
    if let Some(ts) = ts {
        line["ts"] = ts;
    }
    line
}

fn send(stream: &mut TcpStream, line: &Value) {
    // a vanished peer is noticed by its reader thread
    let _ = writeln!(stream, "{line}");
}

impl State {
    fn dispatch(&mut self, released: Vec<ReleasedTuple>) -> usize {
        let n = released.len();
        for r in released {
            let (conn, ts) = self.origins.remove(&r.message_id).unwrap_or((u64::MAX, None));
            match self.writers.get_mut(&conn) {
                Some(w) => send(w, &release_line(&r, ts)),
                None => self.undelivered += 1,
            }
        }
        n
    }

    fn reply(&mut self, conn: u64, line: Value) {
        if let Some(w) = self.writers.get_mut(&conn) {
            send(w, &line);
        }
    }

    fn error(&mut self, conn: u64, message: impl Into<String>, id: Option<&str>) {
        self.reply(conn, json!({"error": message.into(), "id": id}));
    }

    /// Handles one line; returns true on shutdown.
    fn handle(&mut self, conn: u64, line: &str) -> bool {
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                self.error(conn, format!("malformed line: {e}"), None);
                return false;
            }
        };
        match v.get("control").and_then(Value::as_str) {
            Some("rules") => {
                let rules = v.get("rules").cloned().unwrap_or(Value::Null);
                match parse_rule_document(&rules.to_string()).and_then(|r| {
                    let n = r.len();
                    self.pipeline.broadcast_rules(r).map(|()| n)
                }) {
                    Ok(n) => self.reply(conn, json!({"control": "rules", "applied": n})),
                    Err(e) => self.error(conn, e.to_string(), None),
                }
            }
            Some(c @ ("flush" | "shutdown")) => {
                let released = self.pipeline.flush();
                let n = self.dispatch(released);
                self.reply(conn, json!({"control": c, "released": n}));
                return c == "shutdown";
            }
            Some(other) => self.error(conn, format!("unknown control `{other}`"), None),
            None => self.data(conn, v),
        }
        false
    }

    fn data(&mut self, conn: u64, v: Value) {
        let id = v.get("id").and_then(Value::as_str).map(str::to_owned);
        let line: DataLine = match serde_json::from_value(v) {
            Ok(l) => l,
            Err(e) => return self.error(conn, format!("malformed data line: {e}"), id.as_deref()),
        };
        if self.origins.contains_key(&line.id) {
            return self.error(conn, "message id already buffered", Some(&line.id));
        }
        let values = line
            .values
            .iter()
            .enumerate()
            .map(|(i, x)| value_from_json(x, self.kinds.get(i).copied()).map_err(|e| format!("value {i}: {e}")))
            .collect::<Result<Vec<_>, _>>();
        let values = match values {
            Ok(v) => v,
            Err(e) => return self.error(conn, e, Some(&line.id)),
        };
        let tuple = IncomingTuple::new(line.id.clone(), line.subject, values);
        self.origins.insert(line.id.clone(), (conn, line.ts));
        match self.pipeline.ingest_routed(tuple) {
            Ok(released) => {
                self.dispatch(released);
            }
            Err(e) => {
                self.origins.remove(&line.id);
                self.error(conn, e.to_string(), Some(&line.id));
            }
        }
    }
}

impl Server {
    /// `mapping`, when given, decides how string values are read
    /// (date-times, `|`-separated paths).
    pub fn bind(addr: impl ToSocketAddrs, pipeline: Pipeline, mapping: Option<&Mapping>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let kinds = mapping.map_or_else(Vec::new, |m| m.ordered().iter().map(|c| c.kind).collect());
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                pipeline,
                kinds,
                origins: HashMap::new(),
                writers: HashMap::new(),
                undelivered: 0,
            }),
            stop: AtomicBool::new(false),
            addr: listener.local_addr()?,
        });
        Ok(Self { listener, shared })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.shared.addr
    }

    /// Serves until a client sends `shutdown`.
    pub fn run(self) -> io::Result<ServeSummary> {
        let mut connections = 0u64;
        let mut handles = Vec::new();
        for stream in self.listener.incoming() {
            if self.shared.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let conn = connections;
            connections += 1;
            self.shared.lock().writers.insert(conn, stream.try_clone()?);
            let shared = Arc::clone(&self.shared);
            handles.push(thread::spawn(move || serve_connection(&shared, conn, stream)));
        }
        let undelivered = {
            let mut state = self.shared.lock();
            for w in state.writers.values() {
                let _ = w.shutdown(Shutdown::Both);
            }
            state.writers.clear();
            state.undelivered
        };
        for h in handles {
            let _ = h.join();
        }
        Ok(ServeSummary {
            connections,
            undelivered,
        })
    }
}

fn serve_connection(shared: &Shared, conn: u64, stream: TcpStream) {
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if shared.lock().handle(conn, &line) {
            shared.stop.store(true, Ordering::SeqCst);
            // wake the accept loop
            let _ = TcpStream::connect(shared.addr);
            break;
        }
    }
    shared.lock().writers.remove(&conn);
}
