//! Agent checkpoint: `"QFAG"`, u32 version, then the policy and value
//! networks. Each network is its shape (u32 input, u32 hidden, u8 recurrent,
//! u32 head depth, u32 widths, u32 output) followed by a u64 parameter count
//! and the parameters as little-endian f64. All integers are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::error::AgentError;
use super::net::{NetShape, RecurrentNet};
use super::ppo::AgentParams;

pub const AGENT_MAGIC: [u8; 4] = *b"QFAG";
pub const AGENT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<(), AgentError> {
    let v = u32::try_from(v).map_err(|_| AgentError::CorruptCheckpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_net<W: Write>(w: &mut W, net: &RecurrentNet) -> Result<(), AgentError> {
    let s = net.shape();
    put_u32(w, s.input)?;
    put_u32(w, s.hidden)?;
    w.write_all(&[s.recurrent as u8])?;
    put_u32(w, s.head.len())?;
    for &h in &s.head {
        put_u32(w, h)?;
    }
    put_u32(w, s.output)?;
    w.write_all(&(net.params().len() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_agent<W: Write>(w: &mut W, params: &AgentParams) -> Result<(), AgentError> {
    w.write_all(&AGENT_MAGIC)?;
    w.write_all(&AGENT_VERSION.to_le_bytes())?;
    write_net(w, &params.policy)?;
    write_net(w, &params.value)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AgentError> {
        if self.buf.len() - self.pos < n {
            return Err(AgentError::CorruptCheckpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, AgentError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
}

const MAX_WIDTH: usize = 1 << 16;

fn read_net(c: &mut Cursor<'_>) -> Result<RecurrentNet, AgentError> {
    let input = c.u32("input width")?;
    let hidden = c.u32("hidden width")?;
    let recurrent = match c.take(1, "recurrent flag")?[0] {
        0 => false,
        1 => true,
        b => return Err(AgentError::CorruptCheckpoint(format!("bad recurrent flag {b}"))),
    };
    let depth = c.u32("head depth")?;
    if depth > 64 {
        return Err(AgentError::CorruptCheckpoint(format!("implausible head depth {depth}")));
    }
    let head = (0..depth).map(|_| c.u32("head width")).collect::<Result<Vec<_>, _>>()?;
    let output = c.u32("output width")?;
    if [input, hidden, output].iter().chain(&head).any(|&d| d == 0 || d > MAX_WIDTH) {
        return Err(AgentError::CorruptCheckpoint("layer width out of range".into()));
    }
    let shape = NetShape { input, hidden, recurrent, head, output };
    let count = u64::from_le_bytes(c.take(8, "parameter count")?.try_into().expect("8 bytes"));
    if count != shape.param_count() as u64 {
        return Err(AgentError::CorruptCheckpoint(format!(
            "parameter count {count} does not match shape ({})",
            shape.param_count()
        )));
    }
    let raw = c.take(count as usize * 8, "parameters")?;
    let params = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    RecurrentNet::from_params(shape, params)
        .ok_or_else(|| AgentError::CorruptCheckpoint("parameter length mismatch".into()))
}

pub fn read_agent<R: Read>(r: &mut R) -> Result<AgentParams, AgentError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != AGENT_MAGIC {
        return Err(AgentError::Version(format!("not an agent checkpoint (magic {magic:02x?})")));
    }
    let version = c.u32("version")? as u32;
    if version != AGENT_VERSION {
        return Err(AgentError::Version(format!("file version {version}, supported {AGENT_VERSION}")));
    }
    let policy = read_net(&mut c)?;
    let value = read_net(&mut c)?;
    if c.pos != buf.len() {
        return Err(AgentError::CorruptCheckpoint(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    if value.shape().output != 1 {
        return Err(AgentError::CorruptCheckpoint("value network must have one output".into()));
    }
    Ok(AgentParams { policy, value })
}

pub fn save_agent(path: &Path, params: &AgentParams) -> Result<(), AgentError> {
    let mut buf = Vec::new();
    write_agent(&mut buf, params)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_agent(path: &Path) -> Result<AgentParams, AgentError> {
    read_agent(&mut fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> AgentParams {
        AgentParams::init(4, 6, true, &mut ChaCha8Rng::seed_from_u64(11))
    }

    fn bytes(p: &AgentParams) -> Vec<u8> {
        let mut b = Vec::new();
        write_agent(&mut b, p).unwrap();
        b
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for recurrent in [true, false] {
            let p = AgentParams::init(3, 5, recurrent, &mut ChaCha8Rng::seed_from_u64(2));
            let back = read_agent(&mut bytes(&p).as_slice()).unwrap();
            assert_eq!(back, p);
            let (a, b) = (p.policy.params(), back.policy.params());
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.qfag");
        let p = sample();
        save_agent(&path, &p).unwrap();
        assert_eq!(load_agent(&path).unwrap(), p);
    }

    #[test]
    fn truncated_is_corrupt() {
        let b = bytes(&sample());
        for cut in [6, 20, b.len() - 1] {
            assert!(matches!(read_agent(&mut &b[..cut]), Err(AgentError::CorruptCheckpoint(_))), "cut {cut}");
        }
    }

    #[test]
    fn wrong_magic_is_version_error() {
        let mut b = bytes(&sample());
        b[..4].copy_from_slice(b"QFWT");
        assert!(matches!(read_agent(&mut b.as_slice()), Err(AgentError::Version(_))));
    }

    #[test]
    fn future_version_rejected() {
        let mut b = bytes(&sample());
        b[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_agent(&mut b.as_slice()), Err(AgentError::Version(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = bytes(&sample());
        b.push(0);
        assert!(matches!(read_agent(&mut b.as_slice()), Err(AgentError::CorruptCheckpoint(_))));
    }
}
