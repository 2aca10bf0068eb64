//! Loopback TCP transport for worker messages.
//!
//! Exercises the wire format over real sockets. The bitwise replica checks
//! use the in-process board; this path only has to deliver the same bytes.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use anyhow::Context;
use vograd_core::distributed::WorkerRound;

/// Sends each message from its own client connection to a listener on
/// `127.0.0.1` and returns what the listener decoded, ordered by worker.
pub fn exchange(messages: &[WorkerRound], master_seed: u64) -> anyhow::Result<Vec<WorkerRound>> {
    let listener = TcpListener::bind("127.0.0.1:0").context("binding loopback listener")?;
    let addr = listener.local_addr()?;
    let payloads = messages.iter().map(WorkerRound::encode).collect::<Result<Vec<_>, _>>()?;

    let received = thread::scope(|scope| -> anyhow::Result<Vec<WorkerRound>> {
        let senders: Vec<_> = payloads
            .iter()
            .map(|bytes| {
                scope.spawn(move || -> std::io::Result<()> {
                    let mut s = TcpStream::connect(addr)?;
                    s.write_all(bytes)?;
                    s.shutdown(std::net::Shutdown::Write)
                })
            })
            .collect();
        let mut out = Vec::with_capacity(payloads.len());
        for _ in 0..payloads.len() {
            let (mut conn, _) = listener.accept()?;
            let mut buf = Vec::new();
            conn.read_to_end(&mut buf)?;
            let (msg, used) = WorkerRound::decode(&buf, master_seed)?;
            anyhow::ensure!(used == buf.len(), "trailing bytes after message");
            out.push(msg);
        }
        for s in senders {
            s.join().expect("sender thread panicked")?;
        }
        Ok(out)
    })?;

    let mut received = received;
    received.sort_by_key(|m| m.worker);
    Ok(received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vograd_core::distributed::{worker_compute, ProtocolConfig, ReplicaState};
    use vograd_core::objectives::make_quadratic;
    use vograd_core::{EstimatorKind, Optimizer};

    #[test]
    fn delivers_identical_messages() {
        let q = make_quadratic(8).unwrap();
        let cfg = ProtocolConfig::new(EstimatorKind::GpAntithetic, 0.1, 6).unwrap();
        let r = ReplicaState::new(vec![0.5; 8], Optimizer::sgd(0.1).unwrap(), 3);
        let board: Vec<_> = (0..6).map(|w| worker_compute(&r, &q, &cfg, w).unwrap()).collect();
        let got = exchange(&board, 3).unwrap();
        assert_eq!(got, board);
    }
}
