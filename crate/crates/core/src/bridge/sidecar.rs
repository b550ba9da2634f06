//! Live backends speaking the frame protocol over a child process's
//! stdin/stdout or a local TCP socket.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bridge::protocol::{read_frame, write_frame, Request, Response};
use crate::bridge::wire::WireTensor;
use crate::bridge::{Backend, MODEL_ID_ENV};
use crate::error::{Error, Result};

/// One request in flight at a time over a duplex byte stream.
pub struct StreamConnection {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: BufWriter<Box<dyn Write + Send>>,
}

impl StreamConnection {
    pub fn new(reader: Box<dyn Read + Send>, writer: Box<dyn Write + Send>) -> Self {
        Self {
            reader: BufReader::new(reader),
            writer: BufWriter::new(writer),
        }
    }

    pub fn round_trip(&mut self, req: &Request) -> Result<Vec<WireTensor>> {
        write_frame(&mut self.writer, &req.encode_body())?;
        let body = read_frame(&mut self.reader)?
            .ok_or_else(|| Error::protocol("backend closed the stream before responding"))?;
        Response::decode_body(&body)?.into_result()
    }
}

/// Connections used round-robin, falling back to whichever is idle.
struct Pool {
    conns: Vec<Mutex<StreamConnection>>,
    next: AtomicUsize,
}

impl Pool {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        for c in &self.conns {
            if let Ok(mut conn) = c.try_lock() {
                return conn.round_trip(req);
            }
        }
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.conns.len();
        let mut conn = self.conns[i]
            .lock()
            .map_err(|_| Error::protocol("connection poisoned by an earlier failure"))?;
        conn.round_trip(req)
    }
}

/// Backend served by child processes launched from a shell command.
pub struct SidecarBackend {
    pool: Pool,
    children: Vec<Child>,
}

impl SidecarBackend {
    pub fn spawn(command: &str, connections: usize, model_id: Option<&str>) -> Result<Self> {
        let mut conns = Vec::new();
        let mut children = Vec::new();
        for _ in 0..connections.max(1) {
            let mut cmd = Command::new("sh");
            cmd.arg("-c")
                .arg(command)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit());
            if let Some(id) = model_id {
                cmd.env(MODEL_ID_ENV, id);
            }
            let mut child = cmd.spawn().map_err(|e| {
                Error::config(format!("failed to launch sidecar '{command}': {e}"))
            })?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            conns.push(Mutex::new(StreamConnection::new(Box::new(stdout), Box::new(stdin))));
            children.push(child);
        }
        Ok(Self {
            pool: Pool {
                conns,
                next: AtomicUsize::new(0),
            },
            children,
        })
    }
}

impl Backend for SidecarBackend {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        self.pool.call(req)
    }
}

impl Drop for SidecarBackend {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved sidecar exit on its own
        self.pool.conns.clear();
        for child in &mut self.children {
            let exited = (0..100).any(|_| {
                if matches!(child.try_wait(), Ok(Some(_))) {
                    return true;
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
                false
            });
            if !exited {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

pub struct TcpBackend {
    pool: Pool,
}

impl TcpBackend {
    pub fn connect(address: &str, connections: usize) -> Result<Self> {
        let conns = (0..connections.max(1))
            .map(|_| {
                let stream = TcpStream::connect(address)
                    .map_err(|e| Error::config(format!("cannot reach backend at {address}: {e}")))?;
                stream.set_nodelay(true)?;
                let reader = stream.try_clone()?;
                Ok(Mutex::new(StreamConnection::new(Box::new(reader), Box::new(stream))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pool: Pool {
                conns,
                next: AtomicUsize::new(0),
            },
        })
    }
}

impl Backend for TcpBackend {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        self.pool.call(req)
    }
}
