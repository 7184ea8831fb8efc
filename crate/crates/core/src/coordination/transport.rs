//! Endpoints that connect the server to its trainers, in process or over
//! TCP.
//!
//! The server owns the flag store and one inbox per trainer. Over TCP a
//! reader thread per connection feeds the inbox and answers flag queries,
//! so the server loop is identical for both transports.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::kv::{KvClient, KvStore};
use super::mailbox::Mailbox;
use super::wire::{Frame, GlobalMsg, KvKey, WeightsMsg};
use super::CoordError;
use crate::partition::TrainerId;

type SharedStream = Arc<Mutex<Option<BufWriter<TcpStream>>>>;

/// Sending half of a channel.
#[derive(Debug, Clone)]
pub enum Outbound<T> {
    Local(Arc<Mailbox<T>>),
    /// Filled in once the peer connects.
    Tcp(SharedStream),
}

fn send_frame(stream: &SharedStream, frame: &Frame) -> bool {
    let mut guard = stream.lock().unwrap_or_else(|e| e.into_inner());
    match guard.as_mut() {
        Some(w) => match frame.write_to(w) {
            Ok(()) => true,
            Err(e) => {
                debug!("send failed: {e}");
                *guard = None;
                false
            }
        },
        None => false,
    }
}

impl Outbound<GlobalMsg> {
    /// Returns false if the peer is gone.
    pub fn send(&self, msg: GlobalMsg) -> bool {
        match self {
            Outbound::Local(m) => {
                m.push(msg);
                !m.is_closed()
            }
            Outbound::Tcp(s) => send_frame(s, &Frame::Global(msg)),
        }
    }

    pub fn send_stop(&self) {
        if let Outbound::Tcp(s) = self {
            send_frame(s, &Frame::Stop);
        }
    }
}

impl Outbound<WeightsMsg> {
    pub fn send(&self, msg: WeightsMsg) -> bool {
        match self {
            Outbound::Local(m) => {
                m.push(msg);
                !m.is_closed()
            }
            Outbound::Tcp(s) => send_frame(s, &Frame::Weights(msg)),
        }
    }

    /// Signals that no further messages will follow.
    pub fn close(&self) {
        match self {
            Outbound::Local(m) => m.close(),
            Outbound::Tcp(s) => {
                if let Some(w) = s.lock().unwrap_or_else(|e| e.into_inner()).take() {
                    let _ = w.get_ref().shutdown(std::net::Shutdown::Both);
                }
            }
        }
    }
}

pub struct ServerEndpoints {
    pub kv: Arc<KvStore>,
    pub inbox: Vec<Arc<Mailbox<WeightsMsg>>>,
    pub outbound: Vec<Outbound<GlobalMsg>>,
}

pub struct TrainerEndpoints {
    pub id: TrainerId,
    pub kv: Arc<dyn KvClient>,
    pub inbox: Arc<Mailbox<GlobalMsg>>,
    pub outbound: Outbound<WeightsMsg>,
}

impl TrainerEndpoints {
    /// Closes the trainer's side so the server sees the departure.
    pub fn close(&self) {
        self.outbound.close();
    }
}

/// In-process wiring for `m` trainers.
pub fn local(m: usize) -> (ServerEndpoints, Vec<TrainerEndpoints>) {
    let kv = Arc::new(KvStore::new(m));
    let up: Vec<_> = (0..m).map(|_| Mailbox::new()).collect();
    let down: Vec<_> = (0..m).map(|_| Mailbox::new()).collect();
    let trainers = (0..m)
        .map(|i| TrainerEndpoints {
            id: i as TrainerId,
            kv: Arc::clone(&kv) as Arc<dyn KvClient>,
            inbox: Arc::clone(&down[i]),
            outbound: Outbound::Local(Arc::clone(&up[i])),
        })
        .collect();
    let server = ServerEndpoints {
        kv,
        inbox: up,
        outbound: down.into_iter().map(Outbound::Local).collect(),
    };
    (server, trainers)
}

/// A listening server. Connections are accepted in the background until the
/// handle is dropped.
pub struct TcpServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
}

impl TcpServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
    }
}

/// Binds `addr` and returns server endpoints for `m` trainers.
pub fn tcp_server(addr: impl ToSocketAddrs, m: usize) -> Result<(ServerEndpoints, TcpServer), CoordError> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let kv = Arc::new(KvStore::new(m));
    let inbox: Vec<_> = (0..m).map(|_| Mailbox::new()).collect();
    let streams: Vec<SharedStream> = (0..m).map(|_| Arc::new(Mutex::new(None))).collect();
    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let kv = Arc::clone(&kv);
        let inbox = inbox.clone();
        let streams = streams.clone();
        let shutdown = Arc::clone(&shutdown);
        thread::spawn(move || {
            for conn in listener.incoming() {
                if shutdown.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let kv = Arc::clone(&kv);
                        let inbox = inbox.clone();
                        let streams = streams.clone();
                        thread::spawn(move || serve_connection(stream, kv, inbox, streams));
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        });
    }
    Ok((
        ServerEndpoints {
            kv,
            inbox,
            outbound: streams.into_iter().map(Outbound::Tcp).collect(),
        },
        TcpServer {
            addr: local,
            shutdown,
        },
    ))
}

fn serve_connection(
    stream: TcpStream,
    kv: Arc<KvStore>,
    inbox: Vec<Arc<Mailbox<WeightsMsg>>>,
    streams: Vec<SharedStream>,
) {
    let _ = stream.set_nodelay(true);
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut me: Option<usize> = None;
    let reply = Arc::new(Mutex::new(Some(BufWriter::new(write_half))));
    loop {
        let frame = match Frame::read_from(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                warn!("dropping connection after bad frame: {e}");
                break;
            }
        };
        match frame {
            Frame::Ready { trainer } | Frame::KvSet { trainer, key: KvKey::Ready, value: true } => {
                let i = trainer as usize;
                if i >= streams.len() {
                    warn!("trainer id {trainer} out of range");
                    break;
                }
                if me.is_none() {
                    me = Some(i);
                    *streams[i].lock().unwrap_or_else(|e| e.into_inner()) =
                        reply.lock().unwrap_or_else(|e| e.into_inner()).take();
                }
                kv.set_ready(trainer);
            }
            Frame::Weights(msg) => match me {
                Some(i) if i == msg.trainer as usize => inbox[i].push(msg),
                _ => {
                    warn!("weights from unregistered or mismatched trainer {}", msg.trainer);
                    break;
                }
            },
            Frame::KvGet { key, .. } => {
                let value = match key {
                    KvKey::Agg => kv.agg(),
                    KvKey::Stop => kv.stop(),
                    KvKey::Ready => me.is_some_and(|i| kv.is_ready(i as TrainerId)),
                };
                let target = match me {
                    Some(i) => &streams[i],
                    None => &reply,
                };
                if !send_frame(target, &Frame::KvValue { key, value }) {
                    break;
                }
            }
            other => debug!("ignoring unexpected frame {other:?}"),
        }
    }
    if let Some(i) = me {
        inbox[i].close();
        *streams[i].lock().unwrap_or_else(|e| e.into_inner()) = None;
    }
}

/// Flag access through the server connection.
struct TcpKv {
    id: TrainerId,
    stream: SharedStream,
    replies: Mutex<mpsc::Receiver<(KvKey, bool)>>,
    stopped: Arc<AtomicBool>,
}

impl TcpKv {
    fn query(&self, key: KvKey) -> bool {
        // Hold the receiver across the round trip so replies pair up.
        let rx = self.replies.lock().unwrap_or_else(|e| e.into_inner());
        if !send_frame(&self.stream, &Frame::KvGet { trainer: self.id, key }) {
            return matches!(key, KvKey::Stop);
        }
        match rx.recv() {
            Ok((k, v)) if k == key => v,
            // A lost connection reads as stop so the trainer exits.
            _ => matches!(key, KvKey::Stop),
        }
    }
}

impl KvClient for TcpKv {
    fn set_ready(&self, i: TrainerId) {
        send_frame(&self.stream, &Frame::Ready { trainer: i });
    }

    fn agg(&self) -> bool {
        self.query(KvKey::Agg)
    }

    fn stop(&self) -> bool {
        self.stopped.load(Ordering::SeqCst) || self.query(KvKey::Stop)
    }
}

/// Connects trainer `id` to a server, retrying until `timeout`.
pub fn tcp_trainer(addr: impl ToSocketAddrs + Clone, id: TrainerId, timeout: Duration) -> Result<TrainerEndpoints, CoordError> {
    let start = Instant::now();
    let stream = loop {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => break s,
            Err(e) if start.elapsed() < timeout => {
                debug!("connect retry: {e}");
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e.into()),
        }
    };
    stream.set_nodelay(true)?;
    let shared: SharedStream = Arc::new(Mutex::new(Some(BufWriter::new(stream.try_clone()?))));
    let inbox = Mailbox::new();
    let stopped = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    {
        let inbox = Arc::clone(&inbox);
        let stopped = Arc::clone(&stopped);
        thread::spawn(move || {
            let mut reader = BufReader::new(stream);
            loop {
                match Frame::read_from(&mut reader) {
                    Ok(Some(Frame::Global(msg))) => inbox.push(msg),
                    Ok(Some(Frame::KvValue { key, value })) => {
                        if tx.send((key, value)).is_err() {
                            break;
                        }
                    }
                    Ok(Some(Frame::Stop)) => stopped.store(true, Ordering::SeqCst),
                    Ok(Some(other)) => debug!("ignoring unexpected frame {other:?}"),
                    Ok(None) => break,
                    Err(e) => {
                        warn!("server connection failed: {e}");
                        break;
                    }
                }
            }
            stopped.store(true, Ordering::SeqCst);
            inbox.close();
        });
    }
    Ok(TrainerEndpoints {
        id,
        kv: Arc::new(TcpKv {
            id,
            stream: Arc::clone(&shared),
            replies: Mutex::new(rx),
            stopped,
        }),
        inbox,
        outbound: Outbound::Tcp(shared),
    })
}
