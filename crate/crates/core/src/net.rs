//! Length-prefixed TCP framing for running each server as its own process.
//!
//! Frame: `len: u32 BE` (= 1 + body length), `tag: u8`, body. All integers
//! are big-endian. Server ids on the wire and in errors are 1-based.

use std::fmt::Display;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use crate::algebra::{Elem, Field};
use crate::error::{Error, Result};
use crate::mds::{Generator, ShareTable};
use crate::params::SchemeParams;
use crate::plan::WireQuery;
use crate::protocol::{answer, Session, Transcript, WireAnswer};

pub const TAG_HELLO: u8 = 0x01;
pub const TAG_QUERY: u8 = 0x02;
pub const TAG_ANSWER: u8 = 0x03;
pub const TAG_ERROR: u8 = 0x7F;
pub const PROTOCOL_VERSION: u8 = 1;

/// Frames larger than this are rejected before allocating.
pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub tag: u8,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(tag: u8, body: Vec<u8>) -> Self {
        Frame { tag, body }
    }

    pub fn error(message: &str) -> Self {
        Frame::new(TAG_ERROR, message.as_bytes().to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.body.len());
        out.extend_from_slice(&(1 + self.body.len() as u32).to_be_bytes());
        out.push(self.tag);
        out.extend_from_slice(&self.body);
        out
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    if frame.body.len() as u64 + 1 > MAX_FRAME as u64 {
        return Err(Error::Encode(format!("frame body of {} bytes is too large", frame.body.len())));
    }
    w.write_all(&frame.to_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len == 0 {
        return Err(Error::Decode("frame length 0 leaves no room for a tag".into()));
    }
    if len > MAX_FRAME {
        return Err(Error::Decode(format!("frame length {len} exceeds {MAX_FRAME}")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    let body = buf.split_off(1);
    Ok(Some(Frame { tag: buf[0], body }))
}

/// Cursor over a frame body.
struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Decode(format!("truncated {what}")));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("split at N"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.take::<2>(what).map(u16::from_be_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_be_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_be_bytes)
    }

    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Decode(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

pub fn encode_query(q: &WireQuery) -> Result<Vec<u8>> {
    let count = u32::try_from(q.sums.len()).map_err(|_| Error::Encode("more than 2^32 sums".into()))?;
    let mut out = count.to_be_bytes().to_vec();
    for sum in &q.sums {
        let terms = u16::try_from(sum.len()).map_err(|_| Error::Encode(format!("sum with {} terms", sum.len())))?;
        out.extend_from_slice(&terms.to_be_bytes());
        for &(record, pos) in sum {
            let r = u16::try_from(record).map_err(|_| Error::Encode(format!("record index {record}")))?;
            let p = u32::try_from(pos).map_err(|_| Error::Encode(format!("position {pos}")))?;
            out.extend_from_slice(&r.to_be_bytes());
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_query(body: &[u8]) -> Result<WireQuery> {
    let mut r = Reader { buf: body };
    let count = r.u32("sum count")? as usize;
    // each sum needs at least its 2-byte term count
    if count > body.len() / 2 {
        return Err(Error::Decode(format!("{count} sums cannot fit in {} bytes", body.len())));
    }
    let mut sums = Vec::with_capacity(count);
    for _ in 0..count {
        let terms = r.u16("term count")?;
        let sum = (0..terms)
            .map(|_| Ok((r.u16("record index")? as usize, r.u32("position")? as usize)))
            .collect::<Result<Vec<_>>>()?;
        sums.push(sum);
    }
    r.finish()?;
    Ok(WireQuery { sums })
}

pub fn encode_answer(a: &WireAnswer) -> Vec<u8> {
    let mut out = (a.values.len() as u32).to_be_bytes().to_vec();
    for v in &a.values {
        out.extend_from_slice(&v.value().to_be_bytes());
    }
    out
}

/// Decodes an answer, rejecting values that are not reduced mod `p`.
pub fn decode_answer(body: &[u8], field: Field) -> Result<WireAnswer> {
    let mut r = Reader { buf: body };
    let count = r.u32("value count")? as usize;
    if count > body.len() / 8 {
        return Err(Error::Decode(format!("{count} values cannot fit in {} bytes", body.len())));
    }
    let values = (0..count)
        .map(|_| {
            let v = r.u64("value")?;
            field.checked_elem(v).map_err(|_| Error::Decode(format!("value {v} not below {}", field.modulus())))
        })
        .collect::<Result<Vec<Elem>>>()?;
    r.finish()?;
    Ok(WireAnswer { values })
}

pub fn encode_hello(id: u16) -> Vec<u8> {
    let mut out = vec![PROTOCOL_VERSION];
    out.extend_from_slice(&id.to_be_bytes());
    out
}

/// Returns `(version, id)`.
pub fn decode_hello(body: &[u8]) -> Result<(u8, u16)> {
    let mut r = Reader { buf: body };
    let [v] = r.take::<1>("version")?;
    let id = r.u16("server id")?;
    r.finish()?;
    Ok((v, id))
}

/// A bound but not yet running server for one share.
pub struct Server {
    listener: TcpListener,
    share: Arc<ShareTable>,
}

impl Server {
    /// Binds `addr`; port 0 picks a free port.
    pub fn bind<A: ToSocketAddrs>(share: ShareTable, addr: A) -> Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, share: Arc::new(share) })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// 1-based id this server answers to.
    pub fn id(&self) -> usize {
        self.share.server() + 1
    }

    /// Accepts forever, one thread per connection.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let share = Arc::clone(&self.share);
            thread::spawn(move || {
                let _ = handle_connection(&share, stream);
            });
        }
        Ok(())
    }

    /// Runs on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<Result<()>> {
        thread::spawn(move || self.run())
    }
}

fn reply_error<W: Write>(w: &mut W, message: &str) -> Result<()> {
    write_frame(w, &Frame::error(message))
}

/// Serves one connection until the peer closes it or sends bad input.
pub fn handle_connection(share: &ShareTable, stream: TcpStream) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let own_id = share.server() + 1;

    let hello = match read_frame(&mut reader) {
        Ok(Some(f)) => f,
        Ok(None) => return Ok(()),
        Err(e) => return reply_error(&mut writer, &e.to_string()),
    };
    if hello.tag != TAG_HELLO {
        return reply_error(&mut writer, &format!("expected HELLO, got tag {:#04x}", hello.tag));
    }
    match decode_hello(&hello.body) {
        Ok((PROTOCOL_VERSION, id)) if id as usize == own_id => {}
        Ok((PROTOCOL_VERSION, id)) => {
            return reply_error(&mut writer, &format!("this is server {own_id}, not {id}"));
        }
        Ok((v, _)) => return reply_error(&mut writer, &format!("unsupported protocol version {v}")),
        Err(e) => return reply_error(&mut writer, &e.to_string()),
    }
    write_frame(&mut writer, &Frame::new(TAG_HELLO, encode_hello(own_id as u16)))?;

    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) => return reply_error(&mut writer, &e.to_string()),
        };
        if frame.tag != TAG_QUERY {
            return reply_error(&mut writer, &format!("expected QUERY, got tag {:#04x}", frame.tag));
        }
        let result = decode_query(&frame.body).and_then(|q| answer(share, &q));
        match result {
            Ok(a) => write_frame(&mut writer, &Frame::new(TAG_ANSWER, encode_answer(&a)))?,
            Err(e) => return reply_error(&mut writer, &e.to_string()),
        }
    }
}

/// A client connection that has completed the HELLO exchange.
pub struct Connection {
    index: usize,
    field: Field,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Connection {
    /// Connects to server `index` (1-based) and says HELLO.
    pub fn open<A: ToSocketAddrs + Display>(index: usize, addr: A, field: Field) -> Result<Self> {
        let connect_err = |source| Error::Connect { index, addr: addr.to_string(), source };
        let stream = TcpStream::connect(&addr).map_err(connect_err)?;
        stream.set_nodelay(true).map_err(connect_err)?;
        let mut conn = Connection {
            index,
            field,
            reader: BufReader::new(stream.try_clone().map_err(connect_err)?),
            writer: BufWriter::new(stream),
        };
        let id = u16::try_from(index).map_err(|_| Error::Encode(format!("server id {index}")))?;
        let reply = conn.round_trip(&Frame::new(TAG_HELLO, encode_hello(id)), TAG_HELLO)?;
        let (v, got) = decode_hello(&reply.body)?;
        if v != PROTOCOL_VERSION || got != id {
            return Err(Error::Protocol(format!("server {index} greeted as version {v} id {got}")));
        }
        Ok(conn)
    }

    fn round_trip(&mut self, frame: &Frame, want: u8) -> Result<Frame> {
        write_frame(&mut self.writer, frame)?;
        let reply = read_frame(&mut self.reader)?
            .ok_or_else(|| Error::Protocol(format!("server {} closed the connection", self.index)))?;
        if reply.tag == TAG_ERROR {
            return Err(Error::Remote { index: self.index, message: String::from_utf8_lossy(&reply.body).into_owned() });
        }
        if reply.tag != want {
            return Err(Error::Protocol(format!("server {} replied with tag {:#04x}", self.index, reply.tag)));
        }
        Ok(reply)
    }

    pub fn query(&mut self, q: &WireQuery) -> Result<WireAnswer> {
        let reply = self.round_trip(&Frame::new(TAG_QUERY, encode_query(q)?), TAG_ANSWER)?;
        let a = decode_answer(&reply.body, self.field)?;
        if a.values.len() != q.len() {
            return Err(Error::Protocol(format!(
                "server {} sent {} values for {} sums",
                self.index,
                a.values.len(),
                q.len()
            )));
        }
        Ok(a)
    }
}

/// Retrieves record `theta` from N remote servers, `addrs[i]` serving
/// share `i + 1`. Every server is connected before any query is sent.
pub fn remote_retrieve<A: ToSocketAddrs + Display>(
    addrs: &[A],
    theta: usize,
    seed: u64,
    p: &SchemeParams,
    g: &Generator,
) -> Result<Transcript> {
    if addrs.len() != p.servers {
        return Err(Error::BadCall(format!("{} addresses for {} servers", addrs.len(), p.servers)));
    }
    let session = Session::new(theta, seed, p)?;
    let conns = addrs
        .iter()
        .enumerate()
        .map(|(i, a)| Connection::open(i + 1, a, g.field()))
        .collect::<Result<Vec<_>>>()?;
    let answers = thread::scope(|s| {
        let handles: Vec<_> = conns
            .into_iter()
            .zip(&session.queries)
            .map(|(mut c, q)| s.spawn(move || c.query(&q.wire)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("query thread panicked")).collect::<Result<Vec<_>>>()
    })?;
    session.finish(answers, g)
}
