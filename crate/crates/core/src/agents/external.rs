use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::linops::Image;

use super::protocol::{self, ProtocolError};
use super::AgentError;

/// Where an external denoiser lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Child process speaking the protocol on stdin/stdout, run via `sh -c`.
    Stdio(String),
    Tcp { host: String, port: u16 },
}

impl Endpoint {
    pub fn parse(descriptor: &str) -> Result<Self, AgentError> {
        let bad = || AgentError::BadEndpoint(descriptor.to_string());
        if let Some(cmd) = descriptor.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(bad());
            }
            return Ok(Self::Stdio(cmd.to_string()));
        }
        if let Some(addr) = descriptor.strip_prefix("tcp:") {
            let (host, port) = addr.rsplit_once(':').ok_or_else(bad)?;
            let port = port.parse().map_err(|_| bad())?;
            if host.is_empty() {
                return Err(bad());
            }
            return Ok(Self::Tcp {
                host: host.to_string(),
                port,
            });
        }
        Err(bad())
    }
}

enum Connection {
    Stdio {
        child: Child,
        stdin: BufWriter<ChildStdin>,
        stdout: BufReader<ChildStdout>,
    },
    Tcp {
        reader: BufReader<TcpStream>,
        writer: BufWriter<TcpStream>,
    },
}

impl Connection {
    fn exchange(&mut self, x: &Image) -> Result<Image, ProtocolError> {
        match self {
            Self::Stdio { stdin, stdout, .. } => {
                protocol::write_frame(stdin, x)?;
                protocol::read_frame(stdout)
            }
            Self::Tcp { reader, writer } => {
                protocol::write_frame(writer, x)?;
                protocol::read_frame(reader)
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Self::Stdio { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Client for one external-denoiser endpoint.
///
/// Requests on a connection are serialized; the reply must have the request's
/// shape. Any failure is reported, never replaced by an identity map.
pub struct ExternalDenoiser {
    descriptor: String,
    connection: Mutex<Connection>,
}

impl std::fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("endpoint", &self.descriptor)
            .finish_non_exhaustive()
    }
}

impl ExternalDenoiser {
    pub fn connect(descriptor: &str) -> Result<Self, AgentError> {
        let unreachable = |source| AgentError::EndpointUnreachable {
            endpoint: descriptor.to_string(),
            source,
        };
        let connection = match Endpoint::parse(descriptor)? {
            Endpoint::Stdio(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(format!("exec {cmd}"))
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unreachable)?;
                let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
                let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                Connection::Stdio { child, stdin, stdout }
            }
            Endpoint::Tcp { host, port } => {
                let stream = protocol::connect_tcp(&host, port).map_err(unreachable)?;
                let read_half = stream.try_clone().map_err(unreachable)?;
                Connection::Tcp {
                    reader: BufReader::new(read_half),
                    writer: BufWriter::new(stream),
                }
            }
        };
        Ok(Self {
            descriptor: descriptor.to_string(),
            connection: Mutex::new(connection),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.descriptor
    }

    pub fn denoise(&self, x: &Image) -> Result<Image, AgentError> {
        let mut conn = self.connection.lock().unwrap_or_else(|e| e.into_inner());
        let reply = conn.exchange(x).map_err(|source| AgentError::Protocol {
            endpoint: self.descriptor.clone(),
            source,
        })?;
        if reply.shape() != x.shape() {
            return Err(AgentError::ReplyShape {
                endpoint: self.descriptor.clone(),
                expected: x.shape(),
                got: reply.shape(),
            });
        }
        Ok(reply)
    }
}

pub fn external_denoise(x: &Image, endpoint: &str) -> Result<Image, AgentError> {
    ExternalDenoiser::connect(endpoint)?.denoise(x)
}
