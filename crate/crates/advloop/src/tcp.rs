//! Real TCP loopback transport: length-prefixed wire messages over a
//! persistent connection, periodic heartbeats, link-down detection, and an
//! optional netem-style egress shaper so impairment experiments also work
//! over the socket path.

use std::collections::BinaryHeap;
use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use advloop_core::netchan::{decode, encode, NetworkCondition, WireError, WireMessage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEARTBEAT_PERIOD: Duration = Duration::from_millis(500);
/// Peer declared gone after three missed heartbeats.
pub const LINK_DOWN_AFTER: Duration = Duration::from_millis(1500);

#[derive(Debug)]
pub enum TransportEvent {
    Message(WireMessage),
    /// The peer is unreachable: socket error or heartbeat silence.
    LinkDown(String),
}

#[derive(Debug)]
pub enum TcpError {
    Io(std::io::Error),
    Closed,
}

impl std::fmt::Display for TcpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TcpError::Io(e) => write!(f, "transport io error: {e}"),
            TcpError::Closed => write!(f, "transport closed"),
        }
    }
}

impl std::error::Error for TcpError {}

impl From<std::io::Error> for TcpError {
    fn from(e: std::io::Error) -> Self {
        TcpError::Io(e)
    }
}

struct Outgoing {
    due: Instant,
    seq_tiebreak: u64,
    msg: WireMessage,
}

impl PartialEq for Outgoing {
    fn eq(&self, other: &Self) -> bool {
        self.due == other.due && self.seq_tiebreak == other.seq_tiebreak
    }
}
impl Eq for Outgoing {}
impl Ord for Outgoing {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: BinaryHeap is a max-heap, we want earliest due first
        (other.due, other.seq_tiebreak).cmp(&(self.due, self.seq_tiebreak))
    }
}
impl PartialOrd for Outgoing {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A connected transport endpoint. Messages submitted with [`Transport::send`]
/// go through the optional egress shaper (delay/jitter/loss); heartbeats
/// bypass it, since they stand in for transport liveness rather than data.
pub struct Transport {
    outgoing: Sender<WireMessage>,
    events: Receiver<TransportEvent>,
    shutdown: Arc<AtomicBool>,
    writer: Option<JoinHandle<()>>,
    reader: Option<JoinHandle<()>>,
}

impl Transport {
    /// Binds, accepts exactly one peer, and returns the connected transport.
    pub fn serve(bind: &str, egress: Option<NetworkCondition>) -> Result<Transport, TcpError> {
        let listener = TcpListener::bind(bind)?;
        let (stream, _addr) = listener.accept()?;
        Transport::from_stream(stream, egress)
    }

    pub fn connect(addr: &str, egress: Option<NetworkCondition>) -> Result<Transport, TcpError> {
        let stream = TcpStream::connect(addr)?;
        Transport::from_stream(stream, egress)
    }

    fn from_stream(stream: TcpStream, egress: Option<NetworkCondition>) -> Result<Transport, TcpError> {
        stream.set_nodelay(true)?;
        let reader_stream = stream.try_clone()?;
        let shutdown = Arc::new(AtomicBool::new(false));

        let (out_tx, out_rx) = std::sync::mpsc::channel::<WireMessage>();
        let (evt_tx, evt_rx) = std::sync::mpsc::channel::<TransportEvent>();

        let writer = {
            let shutdown = shutdown.clone();
            std::thread::spawn(move || writer_loop(stream, out_rx, egress, shutdown))
        };
        let reader = {
            let shutdown = shutdown.clone();
            std::thread::spawn(move || reader_loop(reader_stream, evt_tx, shutdown))
        };

        Ok(Transport {
            outgoing: out_tx,
            events: evt_rx,
            shutdown,
            writer: Some(writer),
            reader: Some(reader),
        })
    }

    /// Queues a message for (possibly shaped) transmission.
    pub fn send(&self, msg: WireMessage) -> Result<(), TcpError> {
        self.outgoing.send(msg).map_err(|_| TcpError::Closed)
    }

    /// Non-blocking poll of received events.
    pub fn try_recv(&self) -> Option<TransportEvent> {
        match self.events.try_recv() {
            Ok(e) => Some(e),
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => Some(TransportEvent::LinkDown("reader exited".into())),
        }
    }

    /// Blocking receive with timeout.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<TransportEvent> {
        match self.events.recv_timeout(timeout) {
            Ok(e) => Some(e),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => {
                Some(TransportEvent::LinkDown("reader exited".into()))
            }
        }
    }
}

impl Drop for Transport {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn writer_loop(
    mut stream: TcpStream,
    out_rx: Receiver<WireMessage>,
    egress: Option<NetworkCondition>,
    shutdown: Arc<AtomicBool>,
) {
    let mut rng = egress.map(|c| ChaCha8Rng::seed_from_u64(c.seed));
    let mut queue: BinaryHeap<Outgoing> = BinaryHeap::new();
    let mut tiebreak = 0u64;
    let mut hb_seq = 0u32;
    let mut next_heartbeat = Instant::now() + HEARTBEAT_PERIOD;
    let start = Instant::now();

    loop {
        if shutdown.load(Ordering::SeqCst) {
            return;
        }
        let now = Instant::now();

        if now >= next_heartbeat {
            hb_seq = hb_seq.wrapping_add(1);
            let hb = WireMessage::heartbeat(hb_seq, start.elapsed().as_micros() as u64);
            if stream.write_all(&encode(&hb)).is_err() {
                return;
            }
            next_heartbeat = now + HEARTBEAT_PERIOD;
        }

        // flush due shaped messages
        while queue.peek().map_or(false, |o| o.due <= Instant::now()) {
            let o = queue.pop().unwrap();
            if stream.write_all(&encode(&o.msg)).is_err() {
                return;
            }
        }

        match out_rx.recv_timeout(Duration::from_millis(2)) {
            Ok(msg) => match (&egress, rng.as_mut()) {
                (Some(cond), Some(rng)) => {
                    let loss_draw: f64 = rng.gen();
                    if loss_draw < cond.loss_prob {
                        continue; // dropped at egress
                    }
                    let jitter_draw: f64 = rng.gen();
                    let jitter_ms = (2.0 * jitter_draw - 1.0) * cond.jitter_ms;
                    let delay = (cond.delay_ms + jitter_ms).max(0.0);
                    tiebreak += 1;
                    queue.push(Outgoing {
                        due: Instant::now() + Duration::from_micros((delay * 1000.0) as u64),
                        seq_tiebreak: tiebreak,
                        msg,
                    });
                }
                _ => {
                    if stream.write_all(&encode(&msg)).is_err() {
                        return;
                    }
                }
            },
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => {
                // drain the shaper, then exit
                while let Some(o) = queue.pop() {
                    let wait = o.due.saturating_duration_since(Instant::now());
                    std::thread::sleep(wait);
                    if stream.write_all(&encode(&o.msg)).is_err() {
                        return;
                    }
                }
                return;
            }
        }
    }
}

fn reader_loop(mut stream: TcpStream, evt_tx: Sender<TransportEvent>, shutdown: Arc<AtomicBool>) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut buf: Vec<u8> = Vec::with_capacity(64 * 1024);
    let mut chunk = [0u8; 16 * 1024];
    let mut last_seen = Instant::now();

    loop {
        if shutdown.load(Ordering::SeqCst) {
            return;
        }
        match stream.read(&mut chunk) {
            Ok(0) => {
                let _ = evt_tx.send(TransportEvent::LinkDown("connection closed by peer".into()));
                return;
            }
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                last_seen = Instant::now();
                loop {
                    match decode(&buf) {
                        Ok((msg, consumed)) => {
                            buf.drain(..consumed);
                            if msg.msg_type != advloop_core::netchan::MsgType::Heartbeat {
                                if evt_tx.send(TransportEvent::Message(msg)).is_err() {
                                    return;
                                }
                            }
                        }
                        Err(WireError::IncompleteFrame) => break,
                        Err(e) => {
                            let _ = evt_tx.send(TransportEvent::LinkDown(format!(
                                "protocol error: {e}"
                            )));
                            return;
                        }
                    }
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                if last_seen.elapsed() > LINK_DOWN_AFTER {
                    let _ = evt_tx.send(TransportEvent::LinkDown(format!(
                        "no traffic for {:?} (3 missed heartbeats)",
                        last_seen.elapsed()
                    )));
                    return;
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => {
                let _ = evt_tx.send(TransportEvent::LinkDown(format!("socket error: {e}")));
                return;
            }
        }
    }
}
