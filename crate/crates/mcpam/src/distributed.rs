//! Master/worker MCPAM over TCP.
//!
//! Frames are a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON holding an [`Envelope`]. The master owns the dataset and all
//! sampling and decisions; each worker holds one contiguous chunk and answers
//! swap-evaluation and full-eccentricity requests for it.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::clustering::{mcpam_with_backend, LocalBackend, McpamConfig, MedoidResult, SwapBackend, SwapReduction};
use crate::data::{Dataset, KTuple, Point, Schema};
use crate::eccentricity::EccAccumulator;
use crate::error::{Error, Result};
use crate::metric::{Metric, MetricSpec};

pub const PROTOCOL_VERSION: u32 = 1;
const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Message {
    Hello {
        version: u32,
        #[serde(default)]
        worker_id: Option<usize>,
    },
    /// No reply.
    LoadChunk { worker_id: usize, offset: usize, schema: Schema, metric: MetricSpec, points: Vec<Point> },
    /// No reply; replaces the worker's current sample.
    BroadcastSample { sample: Vec<Point> },
    EvalSwaps { current: KTuple, alpha: f64, z: f64 },
    SwapPartialResult { reduction: SwapReduction },
    EvalFullEcc { tuple: KTuple },
    FullEccPartial { acc: EccAccumulator, distance_evals: u64 },
    Shutdown,
    Error { message: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::LoadChunk { .. } => "LoadChunk",
            Message::BroadcastSample { .. } => "BroadcastSample",
            Message::EvalSwaps { .. } => "EvalSwaps",
            Message::SwapPartialResult { .. } => "SwapPartialResult",
            Message::EvalFullEcc { .. } => "EvalFullEcc",
            Message::FullEccPartial { .. } => "FullEccPartial",
            Message::Shutdown => "Shutdown",
            Message::Error { .. } => "Error",
        }
    }
}

/// A message with the round id of the request it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub round: u64,
    #[serde(flatten)]
    pub msg: Message,
}

pub fn encode(env: &Envelope) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(env)?;
    if body.len() > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds limit", body.len())));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Writes one frame, returning the bytes written.
pub fn write_frame<W: Write>(w: &mut W, env: &Envelope) -> Result<usize> {
    let buf = encode(env)?;
    w.write_all(&buf)?;
    w.flush()?;
    Ok(buf.len())
}

/// Reads one frame; `None` on a clean end of stream before a length prefix.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<(Envelope, usize)>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(Error::Protocol(format!("frame length {n} exceeds limit")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(|e| Error::Protocol(format!("truncated frame: {e}")))?;
    let env = serde_json::from_slice(&body).map_err(|e| Error::Protocol(format!("bad frame body: {e}")))?;
    Ok(Some((env, n + 4)))
}

/// Splits [0, m) into c contiguous ranges whose sizes differ by at most one,
/// larger ones first.
pub fn partition(m: usize, c: usize) -> Result<Vec<Range<usize>>> {
    if c == 0 || m < c {
        return Err(Error::InvalidArgument(format!("cannot split {m} points over {c} workers")));
    }
    let (q, r) = (m / c, m % c);
    let mut out = Vec::with_capacity(c);
    let mut start = 0;
    for i in 0..c {
        let len = q + usize::from(i < r);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

struct Chunk {
    id: usize,
    offset: usize,
    points: Vec<Point>,
    metric: Metric,
}

/// Worker-side state machine, independent of the transport.
#[derive(Default)]
pub struct WorkerState {
    chunk: Option<Chunk>,
    sample: Option<Vec<Point>>,
    load_error: Option<String>,
}

impl WorkerState {
    /// Handles one request. Returns the reply (if the kind has one) and
    /// whether to stop.
    pub fn handle(&mut self, env: Envelope) -> (Option<Envelope>, bool) {
        let round = env.round;
        let reply = |msg| Some(Envelope { round, msg });
        let err = |message: String| Some(Envelope { round, msg: Message::Error { message } });
        match env.msg {
            Message::Hello { version, .. } => {
                if version != PROTOCOL_VERSION {
                    return (err(format!("protocol version {version} unsupported, expected {PROTOCOL_VERSION}")), true);
                }
                let id = self.chunk.as_ref().map(|c| c.id);
                (reply(Message::Hello { version: PROTOCOL_VERSION, worker_id: id }), false)
            }
            Message::LoadChunk { worker_id, offset, schema, metric, points } => {
                match Metric::new(&metric, &schema).and_then(|m| {
                    points.iter().try_for_each(|p| schema.check(p))?;
                    Ok(m)
                }) {
                    Ok(metric) => {
                        self.chunk = Some(Chunk { id: worker_id, offset, points, metric });
                        self.load_error = None;
                    }
                    Err(e) => self.load_error = Some(e.to_string()),
                }
                (None, false)
            }
            Message::BroadcastSample { sample } => {
                self.sample = Some(sample);
                (None, false)
            }
            Message::EvalSwaps { current, alpha, z } => {
                let chunk = match self.loaded() {
                    Ok(c) => c,
                    Err(e) => return (err(e), false),
                };
                let Some(sample) = self.sample.as_ref() else {
                    return (err("EvalSwaps before BroadcastSample".into()), false);
                };
                let mut be = LocalBackend::over(&chunk.points, chunk.offset, &chunk.metric);
                match be.eval_swaps(&current, sample, alpha, z) {
                    Ok(reduction) => (reply(Message::SwapPartialResult { reduction }), false),
                    Err(e) => (err(e.to_string()), false),
                }
            }
            Message::EvalFullEcc { tuple } => {
                let chunk = match self.loaded() {
                    Ok(c) => c,
                    Err(e) => return (err(e), false),
                };
                let mut be = LocalBackend::over(&chunk.points, chunk.offset, &chunk.metric);
                match be.full_ecc(&tuple) {
                    Ok((acc, distance_evals)) => (reply(Message::FullEccPartial { acc, distance_evals }), false),
                    Err(e) => (err(e.to_string()), false),
                }
            }
            Message::Shutdown => (None, true),
            other => (err(format!("unexpected {} from master", other.kind())), false),
        }
    }

    fn loaded(&self) -> std::result::Result<&Chunk, String> {
        if let Some(e) = &self.load_error {
            return Err(format!("chunk failed to load: {e}"));
        }
        self.chunk.as_ref().ok_or_else(|| "evaluation requested before LoadChunk".to_string())
    }
}

/// Serves one master connection until Shutdown or disconnect.
pub fn serve(stream: TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut r = BufReader::new(stream.try_clone()?);
    let mut w = BufWriter::new(stream);
    let mut state = WorkerState::default();
    while let Some((env, _)) = read_frame(&mut r)? {
        let (reply, stop) = state.handle(env);
        if let Some(reply) = reply {
            write_frame(&mut w, &reply)?;
        }
        if stop {
            break;
        }
    }
    Ok(())
}

/// Accepts a single master connection on `listener` and serves it.
pub fn worker_loop(listener: TcpListener) -> Result<()> {
    let (stream, _) = listener.accept()?;
    serve(stream)
}

/// Traffic of one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundComm {
    pub round: u64,
    /// "eval_swaps" or "full_ecc".
    pub op: String,
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    pub workers: usize,
    /// Hello, LoadChunk and Shutdown traffic.
    pub setup_messages: u64,
    pub setup_bytes: u64,
    pub rounds: Vec<RoundComm>,
}

struct Conn {
    r: BufReader<TcpStream>,
    w: BufWriter<TcpStream>,
}

fn lost(i: usize, e: impl std::fmt::Display) -> Error {
    Error::Protocol(format!("worker {i}: {e}"))
}

/// [`SwapBackend`] that scatters work to connected workers and merges their
/// partials in ascending worker order.
pub struct RemoteBackend {
    conns: Vec<Conn>,
    round: u64,
    stats: CommStats,
}

impl RemoteBackend {
    /// Connects, checks protocol versions, and loads each worker's chunk.
    pub fn connect<A: ToSocketAddrs>(endpoints: &[A], data: &Dataset, metric: &MetricSpec) -> Result<Self> {
        let ranges = partition(data.len(), endpoints.len())?;
        let mut conns = Vec::with_capacity(endpoints.len());
        for ep in endpoints {
            let s = TcpStream::connect(ep)?;
            s.set_nodelay(true)?;
            conns.push(Conn { r: BufReader::new(s.try_clone()?), w: BufWriter::new(s) });
        }
        let mut be = RemoteBackend { conns, round: 0, stats: CommStats { workers: endpoints.len(), ..Default::default() } };
        be.round += 1;
        let hello = Envelope { round: be.round, msg: Message::Hello { version: PROTOCOL_VERSION, worker_id: None } };
        let mut bytes = 0;
        for (i, c) in be.conns.iter_mut().enumerate() {
            bytes += write_frame(&mut c.w, &hello).map_err(|e| lost(i, e))?;
        }
        for i in 0..be.conns.len() {
            let (env, n) = be.recv(i)?;
            bytes += n;
            if !matches!(env.msg, Message::Hello { version: PROTOCOL_VERSION, .. }) {
                return Err(Error::Protocol(format!("worker {i} answered Hello with {}", env.msg.kind())));
            }
        }
        for (i, r) in ranges.iter().enumerate() {
            be.round += 1;
            let msg = Message::LoadChunk {
                worker_id: i,
                offset: r.start,
                schema: data.schema.clone(),
                metric: metric.clone(),
                points: data.points[r.clone()].to_vec(),
            };
            bytes += write_frame(&mut be.conns[i].w, &Envelope { round: be.round, msg }).map_err(|e| lost(i, e))?;
        }
        be.stats.setup_messages = 3 * be.conns.len() as u64;
        be.stats.setup_bytes = bytes as u64;
        Ok(be)
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    fn recv(&mut self, i: usize) -> Result<(Envelope, usize)> {
        let (env, n) = read_frame(&mut self.conns[i].r)
            .map_err(|e| lost(i, e))?
            .ok_or_else(|| Error::Protocol(format!("worker {i} disconnected")))?;
        if let Message::Error { message } = &env.msg {
            return Err(Error::Protocol(format!("worker {i}: {message}")));
        }
        if env.round != self.round {
            return Err(Error::Protocol(format!("worker {i} answered round {} during round {}", env.round, self.round)));
        }
        Ok((env, n))
    }

    /// Sends `pre` (no reply) then `req` to every worker and collects one
    /// reply from each, in worker order.
    fn exchange(&mut self, op: &str, pre: Option<Message>, req: Message) -> Result<Vec<Message>> {
        self.round += 1;
        let round = self.round;
        let (mut messages, mut bytes) = (0u64, 0usize);
        let pre = pre.map(|msg| encode(&Envelope { round, msg })).transpose()?;
        let req = encode(&Envelope { round, msg: req })?;
        for (i, c) in self.conns.iter_mut().enumerate() {
            if let Some(p) = &pre {
                c.w.write_all(p).map_err(|e| lost(i, e))?;
                messages += 1;
                bytes += p.len();
            }
            c.w.write_all(&req).and_then(|_| c.w.flush()).map_err(|e| lost(i, e))?;
            messages += 1;
            bytes += req.len();
        }
        let mut out = Vec::with_capacity(self.conns.len());
        for i in 0..self.conns.len() {
            let (env, n) = self.recv(i)?;
            messages += 1;
            bytes += n;
            out.push(env.msg);
        }
        self.stats.rounds.push(RoundComm { round, op: op.into(), messages, bytes: bytes as u64 });
        Ok(out)
    }

    /// Tells every worker to stop; errors from already-closed workers are ignored.
    pub fn shutdown(mut self) -> CommStats {
        self.round += 1;
        let env = Envelope { round: self.round, msg: Message::Shutdown };
        for c in &mut self.conns {
            if let Ok(n) = write_frame(&mut c.w, &env) {
                self.stats.setup_bytes += n as u64;
            }
        }
        self.stats
    }
}

impl SwapBackend for RemoteBackend {
    fn full_ecc(&mut self, t: &KTuple) -> Result<(EccAccumulator, u64)> {
        let replies = self.exchange("full_ecc", None, Message::EvalFullEcc { tuple: t.clone() })?;
        let mut acc = EccAccumulator::default();
        let mut evals = 0;
        for (i, m) in replies.into_iter().enumerate() {
            match m {
                Message::FullEccPartial { acc: a, distance_evals } => {
                    acc.merge(&a);
                    evals += distance_evals;
                }
                other => return Err(Error::Protocol(format!("worker {i} sent {} to EvalFullEcc", other.kind()))),
            }
        }
        Ok((acc, evals))
    }

    fn eval_swaps(&mut self, cur: &KTuple, sample: &[Point], alpha: f64, z: f64) -> Result<SwapReduction> {
        let replies = self.exchange(
            "eval_swaps",
            Some(Message::BroadcastSample { sample: sample.to_vec() }),
            Message::EvalSwaps { current: cur.clone(), alpha, z },
        )?;
        let mut red: Option<SwapReduction> = None;
        for (i, m) in replies.into_iter().enumerate() {
            match m {
                Message::SwapPartialResult { reduction } => red = SwapReduction::merge_opt(red, Some(reduction)),
                other => return Err(Error::Protocol(format!("worker {i} sent {} to EvalSwaps", other.kind()))),
            }
        }
        red.ok_or_else(|| Error::Protocol("no worker replied".into()))
    }
}

/// Runs MCPAM with the heavy steps on `endpoints`, then shuts the workers down.
pub fn master_run<A: ToSocketAddrs>(
    data: &Dataset,
    cfg: &McpamConfig,
    metric: &MetricSpec,
    init: KTuple,
    endpoints: &[A],
    single: bool,
) -> Result<(MedoidResult, CommStats)> {
    cfg.validate(data.len())?;
    let mut be = RemoteBackend::connect(endpoints, data, metric)?;
    let res = mcpam_with_backend(data, cfg, init, &mut be, single);
    let stats = be.shutdown();
    Ok((res?, stats))
}
