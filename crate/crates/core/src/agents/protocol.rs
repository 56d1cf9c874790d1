//! Wire format of the external-denoiser protocol.
//!
//! A frame is the 4-byte magic `MDF1`, the height and width as little-endian
//! `u32`, then `height * width` little-endian `f64` intensities in row-major
//! order. Requests and responses share the layout; the endpoint answers each
//! request with exactly one response, in order.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use crate::linops::Image;

pub const MAGIC: [u8; 4] = *b"MDF1";

/// Frames larger than this many pixels are rejected before allocation.
pub const MAX_FRAME_PIXELS: usize = 1 << 28;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("stream closed before a frame started")]
    Closed,
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("frame has empty shape {height}x{width}")]
    EmptyFrame { height: u32, width: u32 },
    #[error("frame of {height}x{width} exceeds the size limit")]
    FrameTooLarge { height: u32, width: u32 },
    #[error("frame truncated")]
    Truncated,
    #[error("frame value at index {0} is not finite")]
    NonFinite(usize),
    #[error("transport error: {0}")]
    Io(#[from] io::Error),
}

pub fn encode_frame(img: &Image) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * img.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(img.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_frame<W: Write>(w: &mut W, img: &Image) -> io::Result<()> {
    w.write_all(&encode_frame(img))?;
    w.flush()
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], eof: ProtocolError) -> Result<(), ProtocolError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(eof),
        Err(e) => Err(e.into()),
    }
}

/// Reads one frame. A clean end of stream before the first byte is
/// [`ProtocolError::Closed`]; anything shorter than a full frame after that
/// is [`ProtocolError::Truncated`].
pub fn read_frame<R: Read>(r: &mut R) -> Result<Image, ProtocolError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Err(ProtocolError::Closed),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let mut dims = [0u8; 8];
    read_exact_or(r, &mut dims, ProtocolError::Truncated)?;
    let height = u32::from_le_bytes(dims[..4].try_into().unwrap());
    let width = u32::from_le_bytes(dims[4..].try_into().unwrap());
    if height == 0 || width == 0 {
        return Err(ProtocolError::EmptyFrame { height, width });
    }
    let pixels = (height as usize).checked_mul(width as usize).filter(|&n| n <= MAX_FRAME_PIXELS);
    let pixels = pixels.ok_or(ProtocolError::FrameTooLarge { height, width })?;
    let mut payload = vec![0u8; pixels * 8];
    read_exact_or(r, &mut payload, ProtocolError::Truncated)?;
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ProtocolError::NonFinite(i));
    }
    Ok(Image::from_raw((height as usize, width as usize), data))
}

/// Answers frames from `reader` with `handler` until the peer closes the stream.
pub fn serve<R, W, F>(reader: R, writer: W, mut handler: F) -> Result<(), ProtocolError>
where
    R: Read,
    W: Write,
    F: FnMut(Image) -> Image,
{
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    loop {
        match read_frame(&mut reader) {
            Ok(img) => write_frame(&mut writer, &handler(img))?,
            Err(ProtocolError::Closed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

/// An endpoint listening on a loopback TCP port, serving each connection on
/// its own thread. Used for in-process endpoints.
pub struct TcpEndpoint {
    addr: SocketAddr,
    _accept: JoinHandle<()>,
}

impl TcpEndpoint {
    pub fn spawn<F>(handler: F) -> io::Result<Self>
    where
        F: Fn(Image) -> Image + Send + Sync + Clone + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let accept = thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                thread::spawn(move || {
                    let Ok(read_half) = stream.try_clone() else { return };
                    let _ = serve(read_half, stream, handler);
                });
            }
        });
        Ok(Self { addr, _accept: accept })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Descriptor string for this endpoint, e.g. `tcp:127.0.0.1:40123`.
    pub fn descriptor(&self) -> String {
        format!("tcp:{}:{}", self.addr.ip(), self.addr.port())
    }
}

/// Connects to a TCP endpoint with Nagle disabled.
pub(crate) fn connect_tcp(host: &str, port: u16) -> io::Result<TcpStream> {
    let stream = TcpStream::connect((host, port))?;
    stream.set_nodelay(true)?;
    Ok(stream)
}
