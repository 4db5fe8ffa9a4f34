//! Length-prefixed JSON frames over TCP, bridged onto a [`Broker`].

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::{Deserialize, Serialize};

use crate::domain::SimTime;

use super::{canonical_json, Broker, BusError, Connection, Deduper, Envelope, Payload};

pub const PROTOCOL_VERSION: &str = "1";
const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "frame")]
pub enum Frame {
    Hello { agent_id: String, protocol: String },
    Welcome { accepted: bool, reason: Option<String> },
    Subscribe { pattern: String },
    Publish { envelope: Envelope },
    Deliver { envelope: Envelope },
}

fn io_err(e: std::io::Error) -> BusError {
    match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::BrokenPipe | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted => {
            BusError::Disconnected
        }
        _ => BusError::Io(e.to_string()),
    }
}

/// Writes one frame: 4-byte big-endian length, then canonical JSON.
pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), BusError> {
    let body = canonical_json(frame).map_err(|e| BusError::Protocol(e.to_string()))?;
    let len = u32::try_from(body.len()).map_err(|_| BusError::Protocol("frame too large".into()))?;
    w.write_all(&len.to_be_bytes()).map_err(io_err)?;
    w.write_all(body.as_bytes()).map_err(io_err)
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, BusError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(io_err(e)),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(BusError::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(io_err)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| BusError::Protocol(e.to_string()))
}

/// Accepts agent connections and relays their frames to the broker.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn bind(broker: Arc<Broker>, addr: impl ToSocketAddrs) -> Result<Self, BusError> {
        let listener = TcpListener::bind(addr).map_err(io_err)?;
        let local = listener.local_addr().map_err(io_err)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let accept = std::thread::Builder::new()
            .name("bus-accept".into())
            .spawn(move || {
                for stream in listener.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let broker = Arc::clone(&broker);
                    let _ = std::thread::Builder::new()
                        .name("bus-session".into())
                        .spawn(move || {
                            if let Err(e) = serve(stream, broker) {
                                log::debug!("tcp session ended: {e}");
                            }
                        });
                }
            })
            .map_err(|e| BusError::Io(e.to_string()))?;
        Ok(TcpServer {
            addr: local,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if let Some(handle) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Wake the blocking accept.
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve(stream: TcpStream, broker: Arc<Broker>) -> Result<(), BusError> {
    stream.set_nodelay(true).map_err(io_err)?;
    let mut reader = BufReader::new(stream.try_clone().map_err(io_err)?);
    let mut writer = BufWriter::new(stream.try_clone().map_err(io_err)?);
    let agent_id = match read_frame(&mut reader)? {
        Some(Frame::Hello { agent_id, protocol }) if protocol == PROTOCOL_VERSION => agent_id,
        Some(Frame::Hello { protocol, .. }) => {
            let reason = format!("unsupported protocol {protocol:?}");
            write_frame(&mut writer, &Frame::Welcome { accepted: false, reason: Some(reason.clone()) })?;
            writer.flush().map_err(io_err)?;
            return Err(BusError::Protocol(reason));
        }
        None => return Ok(()),
        Some(other) => return Err(BusError::Protocol(format!("expected hello, got {other:?}"))),
    };
    write_frame(&mut writer, &Frame::Welcome { accepted: true, reason: None })?;
    writer.flush().map_err(io_err)?;

    let (id, rx) = broker.attach(&agent_id);
    let pump = std::thread::Builder::new()
        .name(format!("bus-deliver-{agent_id}"))
        .spawn(move || deliver(rx, writer))
        .map_err(|e| BusError::Io(e.to_string()))?;

    let result = (|| loop {
        match read_frame(&mut reader)? {
            None => return Ok(()),
            Some(Frame::Subscribe { pattern }) => broker.subscribe(id, &pattern)?,
            Some(Frame::Publish { envelope }) => {
                if envelope.sender != agent_id {
                    return Err(BusError::Protocol(format!(
                        "{agent_id} tried to publish as {}",
                        envelope.sender
                    )));
                }
                broker.publish(envelope)?;
            }
            Some(other) => return Err(BusError::Protocol(format!("unexpected frame {other:?}"))),
        }
    })();
    broker.detach(id);
    let _ = stream.shutdown(std::net::Shutdown::Both);
    let _ = pump.join();
    result
}

fn deliver(rx: Receiver<Arc<Envelope>>, mut writer: BufWriter<TcpStream>) {
    while let Ok(env) = rx.recv() {
        let mut batch = vec![env];
        batch.extend(rx.try_iter());
        for env in batch {
            let frame = Frame::Deliver { envelope: (*env).clone() };
            if write_frame(&mut writer, &frame).is_err() {
                return;
            }
        }
        if writer.flush().is_err() {
            return;
        }
    }
}

/// Agent side of the TCP transport.
pub struct TcpConnection {
    name: String,
    writer: BufWriter<TcpStream>,
    stream: TcpStream,
    rx: Receiver<Arc<Envelope>>,
    seq: u64,
    dedupe: Deduper,
    duplicate_publishes: bool,
    reader: Option<JoinHandle<()>>,
}

impl TcpConnection {
    pub fn connect(addr: impl ToSocketAddrs, agent_id: &str) -> Result<Self, BusError> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        let mut writer = BufWriter::new(stream.try_clone().map_err(io_err)?);
        let mut reader = BufReader::new(stream.try_clone().map_err(io_err)?);
        write_frame(
            &mut writer,
            &Frame::Hello {
                agent_id: agent_id.to_string(),
                protocol: PROTOCOL_VERSION.to_string(),
            },
        )?;
        writer.flush().map_err(io_err)?;
        match read_frame(&mut reader)? {
            Some(Frame::Welcome { accepted: true, .. }) => {}
            Some(Frame::Welcome { reason, .. }) => {
                return Err(BusError::Protocol(reason.unwrap_or_else(|| "rejected".into())))
            }
            other => return Err(BusError::Protocol(format!("expected welcome, got {other:?}"))),
        }
        let (tx, rx) = crossbeam_channel::unbounded();
        let handle = std::thread::Builder::new()
            .name(format!("bus-recv-{agent_id}"))
            .spawn(move || {
                while let Ok(Some(frame)) = read_frame(&mut reader) {
                    if let Frame::Deliver { envelope } = frame {
                        if tx.send(Arc::new(envelope)).is_err() {
                            break;
                        }
                    }
                }
            })
            .map_err(|e| BusError::Io(e.to_string()))?;
        Ok(TcpConnection {
            name: agent_id.to_string(),
            writer,
            stream,
            rx,
            seq: 0,
            dedupe: Deduper::default(),
            duplicate_publishes: false,
            reader: Some(handle),
        })
    }

    /// Sends every publish twice, to exercise consumer-side dedupe.
    pub fn set_duplicate_publishes(&mut self, on: bool) {
        self.duplicate_publishes = on;
    }

    fn send(&mut self, frame: &Frame) -> Result<(), BusError> {
        write_frame(&mut self.writer, frame)?;
        self.writer.flush().map_err(io_err)
    }
}

impl Drop for TcpConnection {
    fn drop(&mut self) {
        let _ = self.writer.flush();
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

impl Connection for TcpConnection {
    fn name(&self) -> &str {
        &self.name
    }

    fn subscribe(&mut self, pattern: &str) -> Result<(), BusError> {
        self.send(&Frame::Subscribe {
            pattern: pattern.to_string(),
        })
    }

    fn publish(&mut self, topic: &str, sim_time: SimTime, payload: Payload) -> Result<u64, BusError> {
        self.seq += 1;
        let frame = Frame::Publish {
            envelope: Envelope {
                topic: topic.to_string(),
                sender: self.name.clone(),
                seq: self.seq,
                sim_time,
                payload,
            },
        };
        self.send(&frame)?;
        if self.duplicate_publishes {
            self.send(&frame)?;
        }
        Ok(self.seq)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Arc<Envelope>>, BusError> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(env) => {
                    if self.dedupe.accept(&env) {
                        return Ok(Some(env));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(BusError::Disconnected),
            }
        }
    }
}
