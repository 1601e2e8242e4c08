//! Binary checkpoints for trained networks.
//!
//! Little-endian layout:
//!
//! ```text
//! "CCRL" | u32 version | u32 net count
//! per net: u32 head tag (0 Beta, 1 value) | u32 layer count L | (L+1) x u32 dims
//!          | params as f64, row-major per layer
//!          | u32 has_optimizer [| u64 t | f64 beta1 beta2 eps | m | v]
//! u32 metadata length | UTF-8 `key = value` lines
//! ```
//!
//! The first net is the actor, the optional second one the critic.

use std::path::{Path, PathBuf};

use crate::ccomb::MODES;
use crate::dynamics::ArmLengths;
use crate::error::{Error, Result};
use crate::net::{AdamState, Head, MlpSpec, NetParams};
use crate::runtime::PolicyBank;

pub const MAGIC: &[u8; 4] = b"CCRL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    /// 0-based mode index when trained on a vertex.
    pub mode: Option<usize>,
    pub arms: ArmLengths,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: NetParams,
    pub actor_adam: Option<AdamState>,
    pub critic: Option<NetParams>,
    pub critic_adam: Option<AdamState>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, if self.critic.is_some() { 2 } else { 1 });
        put_net(&mut out, &self.actor, self.actor_adam.as_ref());
        if let Some(c) = &self.critic {
            put_net(&mut out, c, self.critic_adam.as_ref());
        }
        let meta = self.meta.to_text();
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(meta.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = r.u32()?;
        if !(1..=2).contains(&count) {
            return Err(Error::Corrupt(format!("expected 1 or 2 networks, found {count}")));
        }
        let (actor, actor_adam) = get_net(&mut r)?;
        if !matches!(actor.spec().head, Head::Beta { .. }) {
            return Err(Error::Corrupt("first network is not an actor".into()));
        }
        let (critic, critic_adam) = if count == 2 {
            let (c, a) = get_net(&mut r)?;
            if c.spec().head != Head::Value {
                return Err(Error::Corrupt("second network is not a critic".into()));
            }
            (Some(c), a)
        } else {
            (None, None)
        };
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Corrupt(format!("metadata: {e}")))?;
        let meta = CheckpointMeta::parse(text)?;
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            actor,
            actor_adam,
            critic,
            critic_adam,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl CheckpointMeta {
    fn to_text(&self) -> String {
        let mode = self.mode.map_or("none".to_string(), |m| m.to_string());
        let a = self.arms.0;
        format!(
            "mode = {mode}\narms = {:?} {:?} {:?} {:?}\nsteps = {}\nseed = {}\n",
            a[0], a[1], a[2], a[3], self.steps, self.seed
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Corrupt(format!("metadata: bad or missing {what}"));
        let mut mode = None;
        let mut arms = None;
        let mut steps = None;
        let mut seed = None;
        for line in text.lines() {
            let Some((k, v)) = line.split_once(" = ") else {
                return Err(Error::Corrupt(format!("metadata line {line:?}")));
            };
            match k {
                "mode" => mode = Some(if v == "none" { None } else { Some(v.parse().map_err(|_| bad("mode"))?) }),
                "arms" => {
                    let vals: Vec<f64> = v.split(' ').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("arms"))?;
                    let vals: [f64; 4] = vals.try_into().map_err(|_| bad("arms"))?;
                    arms = Some(ArmLengths(vals));
                }
                "steps" => steps = Some(v.parse().map_err(|_| bad("steps"))?),
                "seed" => seed = Some(v.parse().map_err(|_| bad("seed"))?),
                _ => {}
            }
        }
        Ok(Self {
            mode: mode.ok_or_else(|| bad("mode"))?,
            arms: arms.ok_or_else(|| bad("arms"))?,
            steps: steps.ok_or_else(|| bad("steps"))?,
            seed: seed.ok_or_else(|| bad("seed"))?,
        })
    }
}

/// File name of the checkpoint for 0-based mode `index` inside a bank
/// directory, e.g. `mode_07.ckpt` for index 6.
pub fn bank_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("mode_{:02}.ckpt", index + 1))
}

/// Loads the 16 actors of a bank directory, naming every missing mode.
pub fn load_bank(dir: &Path) -> Result<PolicyBank> {
    let missing: Vec<usize> = (0..MODES).filter(|&i| !bank_file(dir, i).is_file()).map(|i| i + 1).collect();
    if !missing.is_empty() {
        return Err(Error::MissingModes(missing));
    }
    let actors = (0..MODES)
        .map(|i| Checkpoint::load(&bank_file(dir, i)).map(|c| c.actor))
        .collect::<Result<Vec<_>>>()?;
    PolicyBank::new(actors)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_net(out: &mut Vec<u8>, net: &NetParams, adam: Option<&AdamState>) {
    let spec = net.spec();
    put_u32(out, if spec.head == Head::Value { 1 } else { 0 });
    let dims = spec.dims();
    put_u32(out, (dims.len() - 1) as u32);
    for d in dims {
        put_u32(out, d as u32);
    }
    put_f64s(out, net.as_slice());
    match adam {
        None => put_u32(out, 0),
        Some(a) => {
            put_u32(out, 1);
            out.extend_from_slice(&a.t.to_le_bytes());
            put_f64s(out, &[a.beta1, a.beta2, a.eps]);
            put_f64s(out, &a.m);
            put_f64s(out, &a.v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn get_net(r: &mut Reader<'_>) -> Result<(NetParams, Option<AdamState>)> {
    let tag = r.u32()?;
    let layers = r.u32()? as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::Corrupt(format!("implausible layer count {layers}")));
    }
    let dims: Vec<usize> = (0..=layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(Error::Corrupt("zero-width layer".into()));
    }
    let out = dims[layers];
    let head = match tag {
        0 if out.is_multiple_of(2) => Head::Beta { actions: out / 2 },
        1 if out == 1 => Head::Value,
        _ => return Err(Error::Corrupt(format!("head tag {tag} with output width {out}"))),
    };
    let spec = MlpSpec {
        input_dim: dims[0],
        hidden: dims[1..layers].to_vec(),
        head,
    };
    let n = spec.param_count();
    let net = NetParams::from_flat(spec, r.f64s(n)?)?;
    let adam = match r.u32()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let h = r.f64s(3)?;
            let m = r.f64s(n)?;
            let v = r.f64s(n)?;
            Some(AdamState {
                m,
                v,
                t,
                beta1: h[0],
                beta2: h[1],
                eps: h[2],
            })
        }
        f => return Err(Error::Corrupt(format!("optimizer flag {f}"))),
    };
    Ok((net, adam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let actor = NetParams::init_orthogonal(MlpSpec::actor(), 3);
        let critic = NetParams::init_orthogonal(MlpSpec::critic(), 4);
        let mut adam = AdamState::new(actor.len(), 1e-5);
        adam.t = 7;
        adam.m.iter_mut().enumerate().for_each(|(i, m)| *m = (i as f64).sin() * 1e-3);
        Checkpoint {
            actor,
            actor_adam: Some(adam),
            critic: Some(critic),
            critic_adam: None,
            meta: CheckpointMeta {
                mode: Some(0),
                arms: ArmLengths([0.15, 0.15, 0.15, 0.15]),
                steps: 300_000,
                seed: 42,
            },
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let bits = |n: &NetParams| n.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.actor), bits(&c.actor));
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"CCRL");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // actor: tag 0, 3 layers, dims 12 64 64 8
        let words: Vec<u32> = bytes[12..36].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(words, vec![0, 3, 12, 64, 64, 8]);
    }

    #[test]
    fn corruption_is_reported() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic)));
        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::UnsupportedVersion(2))));
        for cut in [3, 10, 100, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Truncated)), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Corrupt(_))));
    }

    #[test]
    fn bank_reports_missing_modes() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample();
        for i in 0..MODES {
            if i != 6 && i != 11 {
                c.save(&bank_file(dir.path(), i)).unwrap();
            }
        }
        match load_bank(dir.path()) {
            Err(Error::MissingModes(m)) => assert_eq!(m, vec![7, 12]),
            other => panic!("unexpected {other:?}"),
        }
        c.save(&bank_file(dir.path(), 6)).unwrap();
        c.save(&bank_file(dir.path(), 11)).unwrap();
        assert_eq!(load_bank(dir.path()).unwrap().actor(3), &c.actor);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
        assert!(matches!(Checkpoint::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
