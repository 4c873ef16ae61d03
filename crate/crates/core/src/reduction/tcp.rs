use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{
    self, decode_f64s, decode_roster, encode_f64s, encode_roster, Frame, FrameError, Hello,
    MessageType,
};
use super::{add_into, tree_children, tree_parent, ReductionGroup, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct TcpOptions {
    /// Read/write timeout on every tree link, and the deadline for joining.
    pub timeout: Duration,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// TCP transport: each rank holds one link to its tree parent and one per
/// child. Rank 0 listens on the coordinator address, collects every rank's
/// registration and hands out the tree listener addresses.
#[derive(Debug)]
pub struct TcpGroup {
    rank: usize,
    size: usize,
    parent: Option<(usize, TcpStream)>,
    children: Vec<(usize, TcpStream)>,
}

fn link_error(peer: usize, e: FrameError) -> Error {
    match e {
        FrameError::Io(e) => Error::ReductionFailed {
            rank: peer,
            reason: match e.kind() {
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
                    format!("timed out waiting for rank {peer}")
                }
                io::ErrorKind::UnexpectedEof => format!("rank {peer} disconnected"),
                _ => format!("link to rank {peer}: {e}"),
            },
        },
        FrameError::Malformed(m) => Error::Protocol(format!("from rank {peer}: {m}")),
    }
}

fn send(peer: usize, stream: &mut TcpStream, kind: MessageType, payload: &[u8]) -> Result<()> {
    wire::write_frame(stream, kind, payload).map_err(|e| link_error(peer, FrameError::Io(e)))
}

fn recv(peer: usize, stream: &mut TcpStream) -> Result<Frame> {
    wire::read_frame(stream).map_err(|e| link_error(peer, e))
}

fn expect(peer: usize, frame: &Frame, kinds: &[MessageType]) -> Result<()> {
    if kinds.contains(&frame.kind) {
        Ok(())
    } else {
        Err(Error::Protocol(format!(
            "from rank {peer}: expected {kinds:?}, got {:?}",
            frame.kind
        )))
    }
}

fn configure(stream: &TcpStream, timeout: Duration) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))
}

fn accept_before(listener: &TcpListener, deadline: Instant) -> io::Result<(TcpStream, SocketAddr)> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok(pair) => return Ok(pair),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(io::Error::new(io::ErrorKind::TimedOut, "accept timed out"));
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e),
        }
    }
}

fn connect_before(addr: &str, deadline: Instant) -> io::Result<TcpStream> {
    loop {
        let attempt = addr
            .to_socket_addrs()
            .and_then(|mut it| {
                it.next()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "unresolvable address"))
            })
            .and_then(|sa| {
                let left = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(10));
                TcpStream::connect_timeout(&sa, left)
            });
        match attempt {
            Ok(s) => return Ok(s),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(e);
                }
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

impl TcpGroup {
    /// Joins an `size`-rank group coordinated at `coordinator` (rank 0 binds
    /// it, everyone else connects). All ranks must agree on `size` and on
    /// `payload_len`, the nominal vector length of the job.
    pub fn join(
        coordinator: &str,
        rank: usize,
        size: usize,
        payload_len: usize,
        options: TcpOptions,
    ) -> Result<Self> {
        if size == 0 || rank >= size {
            return Err(Error::InvalidInput(format!(
                "rank {rank} out of range for group of {size}"
            )));
        }
        if rank == 0 {
            let listener = TcpListener::bind(coordinator).map_err(|e| Error::ReductionFailed {
                rank: 0,
                reason: format!("cannot bind coordinator {coordinator}: {e}"),
            })?;
            Self::coordinate(listener, coordinator, size, payload_len, options)
        } else {
            Self::register(coordinator, rank, size, payload_len, options)
        }
    }

    /// Rank 0 with an already bound coordinator listener.
    pub fn coordinate(
        listener: TcpListener,
        advertised: &str,
        size: usize,
        payload_len: usize,
        options: TcpOptions,
    ) -> Result<Self> {
        let deadline = Instant::now() + options.timeout;
        let mut addrs = vec![String::new(); size];
        addrs[0] = advertised.to_string();
        let mut registrations: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();

        for _ in 1..size {
            let (mut stream, peer) = accept_before(&listener, deadline).map_err(|e| {
                let missing = registrations
                    .iter()
                    .skip(1)
                    .position(Option::is_none)
                    .map_or(0, |r| r + 1);
                Error::ReductionFailed {
                    rank: missing,
                    reason: format!("rank {missing} never registered: {e}"),
                }
            })?;
            configure(&stream, options.timeout).map_err(|e| Error::ReductionFailed {
                rank: 0,
                reason: e.to_string(),
            })?;
            let frame = recv(usize::MAX, &mut stream)?;
            expect(usize::MAX, &frame, &[MessageType::Hello])?;
            let hello = Hello::decode(&frame.payload).map_err(|e| link_error(usize::MAX, e))?;
            let r = hello.rank as usize;
            if hello.world as usize != size {
                return Err(Error::Protocol(format!(
                    "rank {r} believes the group has {} members, coordinator expects {size}",
                    hello.world
                )));
            }
            if hello.payload_len as usize != payload_len {
                return Err(Error::Protocol(format!(
                    "rank {r} registered payload length {}, coordinator expects {payload_len}",
                    hello.payload_len
                )));
            }
            if r == 0 || r >= size || registrations[r].is_some() {
                return Err(Error::Protocol(format!("invalid or duplicate registration for rank {r}")));
            }
            addrs[r] = SocketAddr::new(peer.ip(), hello.port).to_string();
            registrations[r] = Some(stream);
        }

        let roster = encode_roster(&addrs);
        for (r, stream) in registrations.iter_mut().enumerate().skip(1) {
            send(r, stream.as_mut().unwrap(), MessageType::Roster, &roster)?;
        }
        drop(registrations);

        let children = Self::accept_children(&listener, 0, size, deadline, options.timeout)?;
        Ok(Self {
            rank: 0,
            size,
            parent: None,
            children,
        })
    }

    fn register(
        coordinator: &str,
        rank: usize,
        size: usize,
        payload_len: usize,
        options: TcpOptions,
    ) -> Result<Self> {
        let deadline = Instant::now() + options.timeout;
        let unreachable = |e: io::Error| Error::ReductionFailed {
            rank: 0,
            reason: format!("cannot reach coordinator {coordinator}: {e}"),
        };
        let mut coord = connect_before(coordinator, deadline).map_err(unreachable)?;
        configure(&coord, options.timeout).map_err(unreachable)?;

        let has_children = tree_children(rank, size).next().is_some();
        let listener = if has_children {
            let ip = coord.local_addr().map_err(unreachable)?.ip();
            Some(TcpListener::bind((ip, 0)).map_err(|e| Error::ReductionFailed {
                rank,
                reason: format!("cannot bind tree listener: {e}"),
            })?)
        } else {
            None
        };
        let port = match &listener {
            Some(l) => l.local_addr().map_err(unreachable)?.port(),
            None => 0,
        };
        let hello = Hello {
            rank: rank as u32,
            world: size as u32,
            payload_len: payload_len as u64,
            port,
        };
        send(0, &mut coord, MessageType::Hello, &hello.encode())?;
        let frame = recv(0, &mut coord)?;
        expect(0, &frame, &[MessageType::Roster])?;
        let addrs = decode_roster(&frame.payload).map_err(|e| link_error(0, e))?;
        if addrs.len() != size {
            return Err(Error::Protocol(format!(
                "roster lists {} ranks, expected {size}",
                addrs.len()
            )));
        }
        drop(coord);

        let parent_rank = tree_parent(rank).expect("non-root rank has a parent");
        let mut parent = connect_before(&addrs[parent_rank], deadline).map_err(|e| {
            Error::ReductionFailed {
                rank: parent_rank,
                reason: format!("cannot connect to parent {}: {e}", addrs[parent_rank]),
            }
        })?;
        configure(&parent, options.timeout).map_err(|e| Error::ReductionFailed {
            rank: parent_rank,
            reason: e.to_string(),
        })?;
        send(parent_rank, &mut parent, MessageType::Link, &(rank as u32).to_le_bytes())?;

        let children = match &listener {
            Some(l) => Self::accept_children(l, rank, size, deadline, options.timeout)?,
            None => Vec::new(),
        };
        Ok(Self {
            rank,
            size,
            parent: Some((parent_rank, parent)),
            children,
        })
    }

    fn accept_children(
        listener: &TcpListener,
        rank: usize,
        size: usize,
        deadline: Instant,
        timeout: Duration,
    ) -> Result<Vec<(usize, TcpStream)>> {
        let expected: Vec<usize> = tree_children(rank, size).collect();
        let mut slots: Vec<Option<TcpStream>> = expected.iter().map(|_| None).collect();
        for _ in 0..expected.len() {
            let missing = || {
                expected
                    .iter()
                    .zip(&slots)
                    .find(|(_, s)| s.is_none())
                    .map_or(rank, |(&c, _)| c)
            };
            let (mut stream, _) = accept_before(listener, deadline).map_err(|e| {
                let m = missing();
                Error::ReductionFailed {
                    rank: m,
                    reason: format!("child rank {m} never connected: {e}"),
                }
            })?;
            configure(&stream, timeout).map_err(|e| Error::ReductionFailed {
                rank,
                reason: e.to_string(),
            })?;
            let frame = recv(usize::MAX, &mut stream)?;
            expect(usize::MAX, &frame, &[MessageType::Link])?;
            let child = frame
                .payload
                .as_slice()
                .try_into()
                .map(|b: [u8; 4]| u32::from_le_bytes(b) as usize)
                .map_err(|_| Error::Protocol("malformed link frame".into()))?;
            let Some(k) = expected.iter().position(|&c| c == child) else {
                return Err(Error::Protocol(format!(
                    "rank {child} linked to rank {rank}, which is not its parent"
                )));
            };
            if slots[k].is_some() {
                return Err(Error::Protocol(format!("rank {child} linked twice")));
            }
            slots[k] = Some(stream);
        }
        Ok(expected
            .into_iter()
            .zip(slots)
            .map(|(c, s)| (c, s.unwrap()))
            .collect())
    }

    /// Final barrier before the links are dropped.
    pub fn finish(mut self) -> Result<()> {
        self.barrier()
    }

    fn up_and_down(
        &mut self,
        local: &[f64],
        up: MessageType,
        down: MessageType,
    ) -> Result<Vec<f64>> {
        let mut acc = local.to_vec();
        for (child, stream) in &mut self.children {
            let frame = recv(*child, stream)?;
            expect(*child, &frame, &[up, MessageType::Contribute, MessageType::PartialSum])?;
            let v = decode_f64s(&frame.payload).map_err(|e| link_error(*child, e))?;
            if v.len() != acc.len() {
                return Err(Error::Protocol(format!(
                    "rank {child} sent {} values, rank {} has {}",
                    v.len(),
                    self.rank,
                    acc.len()
                )));
            }
            add_into(&mut acc, &v);
        }
        let result = match &mut self.parent {
            Some((parent, stream)) => {
                send(*parent, stream, up, &encode_f64s(&acc))?;
                let frame = recv(*parent, stream)?;
                expect(*parent, &frame, &[down])?;
                let v = decode_f64s(&frame.payload).map_err(|e| link_error(*parent, e))?;
                if v.len() != acc.len() {
                    return Err(Error::Protocol(format!(
                        "broadcast of {} values, expected {}",
                        v.len(),
                        acc.len()
                    )));
                }
                v
            }
            None => acc,
        };
        let bytes = encode_f64s(&result);
        for (child, stream) in &mut self.children {
            send(*child, stream, down, &bytes)?;
        }
        Ok(result)
    }
}

impl ReductionGroup for TcpGroup {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn allreduce_sum(&mut self, local: &[f64]) -> Result<Vec<f64>> {
        let up = if self.children.is_empty() {
            MessageType::Contribute
        } else {
            MessageType::PartialSum
        };
        self.up_and_down(local, up, MessageType::Broadcast)
    }

    fn barrier(&mut self) -> Result<()> {
        self.up_and_down(&[], MessageType::Barrier, MessageType::Barrier)
            .map(|_| ())
    }
}
