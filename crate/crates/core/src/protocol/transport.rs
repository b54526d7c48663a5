//! Message transports: an in-process loopback pair and a length-prefixed
//! TCP binding. Both deliver whole frames, in order, without duplication;
//! loss surfaces as a timeout.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

/// Frame size cap; larger frames indicate a broken or hostile peer.
const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the channel")]
    Closed,
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("frame of {0} bytes exceeds the transport limit")]
    Oversized(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered duplex frame transport.
pub trait Transport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Vec<u8>, TransportError>;
}

/// In-process transport endpoint backed by channels.
pub struct LoopbackTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

/// Create a connected pair of loopback endpoints.
pub fn loopback_pair() -> (LoopbackTransport, LoopbackTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    let timeout = Duration::from_secs(5);
    (
        LoopbackTransport {
            tx: tx_a,
            rx: rx_a,
            timeout,
        },
        LoopbackTransport {
            tx: tx_b,
            rx: rx_b,
            timeout,
        },
    )
}

impl Transport for LoopbackTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if frame.len() > MAX_FRAME {
            return Err(TransportError::Oversized(frame.len()));
        }
        self.tx
            .send(frame.to_vec())
            .map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout,
            RecvTimeoutError::Disconnected => TransportError::Closed,
        })
    }
}

/// TCP transport with a 4-byte big-endian length prefix per frame.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_read_timeout(Some(Duration::from_secs(5)))?;
        stream.set_write_timeout(Some(Duration::from_secs(5)))?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }

    pub fn connect(addr: &str) -> Result<Self, TransportError> {
        Self::new(TcpStream::connect(addr)?)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if frame.len() > MAX_FRAME {
            return Err(TransportError::Oversized(frame.len()));
        }
        self.stream.write_all(&(frame.len() as u32).to_be_bytes())?;
        self.stream.write_all(frame)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut len_buf = [0u8; 4];
        self.stream.read_exact(&mut len_buf).map_err(map_eof)?;
        let len = u32::from_be_bytes(len_buf) as usize;
        if len > MAX_FRAME {
            return Err(TransportError::Oversized(len));
        }
        let mut frame = vec![0u8; len];
        self.stream.read_exact(&mut frame).map_err(map_eof)?;
        Ok(frame)
    }
}

fn map_eof(e: std::io::Error) -> TransportError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TransportError::Closed,
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => TransportError::Timeout,
        _ => TransportError::Io(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_delivers_in_order() {
        let (mut a, mut b) = loopback_pair();
        a.send(b"one").unwrap();
        a.send(b"two").unwrap();
        assert_eq!(b.recv().unwrap(), b"one");
        assert_eq!(b.recv().unwrap(), b"two");
        b.send(b"ack").unwrap();
        assert_eq!(a.recv().unwrap(), b"ack");
    }

    #[test]
    fn loopback_times_out_on_silence() {
        let (mut a, _b) = loopback_pair();
        a.timeout = Duration::from_millis(20);
        assert!(matches!(a.recv(), Err(TransportError::Timeout)));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut t = TcpTransport::new(stream).unwrap();
            let got = t.recv().unwrap();
            t.send(&got).unwrap();
        });
        let mut client = TcpTransport::connect(&addr.to_string()).unwrap();
        client.send(b"echo me").unwrap();
        assert_eq!(client.recv().unwrap(), b"echo me");
        server.join().unwrap();
    }
}
