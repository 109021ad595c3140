//! Binary analysis snapshot.
//!
//! Layout: the magic `LPFSTATE`, a little-endian `u32` version, a
//! length-prefixed JSON header, then tagged sections in a fixed order.
//! Each section is a 4-byte tag, a `u64` byte length and a payload of
//! little-endian numbers:
//!
//! | tag    | payload                                                    |
//! |--------|------------------------------------------------------------|
//! | `PATT` | `M × 2` pattern offsets                                    |
//! | `SEED` | `N × 3` seed points                                        |
//! | `FRAM` | `N × 9` frame axes, column-major                           |
//! | `TARG` | `N × 4` target sphere (center, radius), `N` counts, indices |
//! | `VECS` | `N × M × 3` probed vectors                                 |
//! | `MASK` | `N × M` validity bytes, then `N × M` hit indices           |
//! | `DICT` | `d × 3M` dictionary, row-major                             |
//! | `CODE` | nonzero count, then `(row u64, column u64, value f64)`     |
//! | `ENRG` | initial energy, then `3` energies per iteration            |

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::config::AnalysisConfig;
use crate::error::{LpfError, Result};
use crate::geom::{LocalFrame, Vec3};
use crate::lpf::LocalProbingField;
use crate::pattern::{Pattern, PatternKind};
use crate::sparse::{AnalysisState, Dictionary, Energy, IterationEnergy};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"LPFSTATE";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: AnalysisConfig,
    pattern_kind: PatternKind,
    pattern_radius: f64,
    pattern_len: usize,
    fields: usize,
    atoms: usize,
    iterations: usize,
}

#[derive(Default)]
struct Buf(Vec<u8>);

impl Buf {
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn vec3(&mut self, v: &Vec3) {
        v.iter().for_each(|&x| self.f64(x));
    }

    fn energy(&mut self, e: &Energy) {
        self.f64(e.l2);
        self.f64(e.l1);
        self.f64(e.total);
    }
}

fn section(w: &mut dyn Write, tag: &[u8; 4], body: Buf) -> Result<()> {
    w.write_all(tag)?;
    w.write_all(&(body.0.len() as u64).to_le_bytes())?;
    w.write_all(&body.0)?;
    Ok(())
}

pub fn write_snapshot(w: &mut dyn Write, state: &AnalysisState) -> Result<()> {
    let m = state.pattern.len();
    let header = Header {
        config: state.config.clone(),
        pattern_kind: state.pattern.kind(),
        pattern_radius: state.pattern.radius(),
        pattern_len: m,
        fields: state.lpfs.len(),
        atoms: state.dictionary.len(),
        iterations: state.energy_log.len(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;

    let mut b = Buf::default();
    for u in state.pattern.offsets() {
        b.f64(u.x);
        b.f64(u.y);
    }
    section(w, b"PATT", b)?;

    let mut b = Buf::default();
    state.lpfs.iter().for_each(|f| b.vec3(&f.frame.origin));
    section(w, b"SEED", b)?;

    let mut b = Buf::default();
    state.lpfs.iter().for_each(|f| f.frame.axes.iter().for_each(|&x| b.f64(x)));
    section(w, b"FRAM", b)?;

    let mut b = Buf::default();
    for f in &state.lpfs {
        b.vec3(&f.target_center);
        b.f64(f.target_radius);
    }
    state.lpfs.iter().for_each(|f| b.u64(f.target.len() as u64));
    state.lpfs.iter().flat_map(|f| &f.target).for_each(|&t| b.u64(t as u64));
    section(w, b"TARG", b)?;

    let mut b = Buf::default();
    state.lpfs.iter().flat_map(|f| &f.v).for_each(|v| b.vec3(v));
    section(w, b"VECS", b)?;

    let mut b = Buf::default();
    state.lpfs.iter().flat_map(|f| &f.valid).for_each(|&v| b.0.push(v as u8));
    state.lpfs.iter().flat_map(|f| &f.hits).for_each(|&h| b.u64(h as u64));
    section(w, b"MASK", b)?;

    let mut b = Buf::default();
    let atoms = state.dictionary.atoms();
    for k in 0..atoms.ncols() {
        atoms.column(k).iter().for_each(|&x| b.f64(x));
    }
    section(w, b"DICT", b)?;

    let mut b = Buf::default();
    let nz: Vec<(usize, usize, f64)> = (0..state.codes.ncols())
        .flat_map(|j| (0..state.codes.nrows()).map(move |k| (k, j)))
        .map(|(k, j)| (k, j, state.codes[(k, j)]))
        .filter(|e| e.2 != 0.0)
        .collect();
    b.u64(nz.len() as u64);
    for (k, j, x) in nz {
        b.u64(k as u64);
        b.u64(j as u64);
        b.f64(x);
    }
    section(w, b"CODE", b)?;

    let mut b = Buf::default();
    b.energy(&state.initial_energy);
    for e in &state.energy_log {
        b.energy(&e.dictionary);
        b.energy(&e.pose);
        b.energy(&e.reprobe);
    }
    section(w, b"ENRG", b)
}

pub fn save_snapshot(path: &Path, state: &AnalysisState) -> Result<()> {
    write_atomic(path, |w| write_snapshot(w, state))
}

fn corrupt(msg: impl Into<String>) -> LpfError {
    LpfError::CorruptSnapshot(msg.into())
}

/// Cursor over one section payload.
struct Section {
    tag: [u8; 4],
    data: Vec<u8>,
    pos: usize,
}

impl Section {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            corrupt(format!("section {} ends early", String::from_utf8_lossy(&self.tag)))
        })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn index(&mut self, bound: usize, what: &str) -> Result<usize> {
        let i = self.u64()?;
        usize::try_from(i)
            .ok()
            .filter(|&i| i < bound)
            .ok_or_else(|| corrupt(format!("{what} {i} out of range (< {bound})")))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn energy(&mut self) -> Result<Energy> {
        Ok(Energy {
            l2: self.f64()?,
            l1: self.f64()?,
            total: self.f64()?,
        })
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(corrupt(format!(
                "section {} has {} trailing bytes",
                String::from_utf8_lossy(&self.tag),
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_exact_or_corrupt(r: &mut dyn Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => corrupt(format!("file ends inside {what}")),
        _ => LpfError::Io(e),
    })
}

/// Largest payload accepted for one section, as a guard against garbage
/// lengths.
const MAX_SECTION: u64 = 1 << 40;

fn next_section(r: &mut dyn Read, tag: &[u8; 4]) -> Result<Section> {
    let name = String::from_utf8_lossy(tag).into_owned();
    let mut found = [0u8; 4];
    read_exact_or_corrupt(r, &mut found, &format!("section {name}"))?;
    if &found != tag {
        return Err(corrupt(format!(
            "expected section {name}, found {:?}",
            String::from_utf8_lossy(&found)
        )));
    }
    let mut len = [0u8; 8];
    read_exact_or_corrupt(r, &mut len, &format!("section {name}"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_SECTION {
        return Err(corrupt(format!("section {name} claims {len} bytes")));
    }
    let mut data = Vec::new();
    r.take(len).read_to_end(&mut data)?;
    if data.len() as u64 != len {
        return Err(corrupt(format!("file ends inside section {name}")));
    }
    Ok(Section { tag: *tag, data, pos: 0 })
}

pub fn read_snapshot(r: &mut dyn Read) -> Result<AnalysisState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| LpfError::BadMagic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(LpfError::BadMagic);
    }
    let mut v = [0u8; 4];
    read_exact_or_corrupt(r, &mut v, "version")?;
    let version = u32::from_le_bytes(v);
    if version != SNAPSHOT_VERSION {
        return Err(LpfError::VersionMismatch {
            found: version,
            supported: SNAPSHOT_VERSION,
        });
    }
    let mut len = [0u8; 8];
    read_exact_or_corrupt(r, &mut len, "header")?;
    let len = u64::from_le_bytes(len);
    if len > MAX_SECTION {
        return Err(corrupt(format!("header claims {len} bytes")));
    }
    let mut json = Vec::new();
    r.take(len).read_to_end(&mut json)?;
    if json.len() as u64 != len {
        return Err(corrupt("file ends inside header"));
    }
    let h: Header = serde_json::from_slice(&json).map_err(|e| corrupt(format!("header: {e}")))?;
    h.config.validate()?;
    let (m, n, d) = (h.pattern_len, h.fields, h.atoms);

    let mut s = next_section(r, b"PATT")?;
    let mut offsets = Vec::with_capacity(m);
    for _ in 0..m {
        offsets.push(Vec3::new(s.f64()?, s.f64()?, 0.0));
    }
    s.finish()?;
    let pattern = Pattern::from_offsets(offsets, h.pattern_radius, h.pattern_kind)
        .map_err(|e| corrupt(format!("pattern: {e}")))?;

    let mut s = next_section(r, b"SEED")?;
    let mut origins = Vec::with_capacity(n);
    for _ in 0..n {
        origins.push(s.vec3()?);
    }
    s.finish()?;

    let mut s = next_section(r, b"FRAM")?;
    let mut frames = Vec::with_capacity(n);
    for origin in origins {
        let mut a = [0.0; 9];
        for x in &mut a {
            *x = s.f64()?;
        }
        frames.push(LocalFrame::new(origin, Matrix3::from_column_slice(&a)));
    }
    s.finish()?;

    let mut s = next_section(r, b"TARG")?;
    let mut spheres = Vec::with_capacity(n);
    for _ in 0..n {
        spheres.push((s.vec3()?, s.f64()?));
    }
    let mut counts = Vec::with_capacity(n);
    for _ in 0..n {
        counts.push(s.u64()? as usize);
    }
    let mut targets = Vec::with_capacity(n);
    for c in counts {
        let mut t = Vec::with_capacity(c.min(1 << 20));
        for _ in 0..c {
            t.push(s.index(usize::MAX, "target index")?);
        }
        targets.push(t);
    }
    s.finish()?;

    let mut s = next_section(r, b"VECS")?;
    let mut vecs = Vec::with_capacity(n);
    for _ in 0..n {
        vecs.push((0..m).map(|_| s.vec3()).collect::<Result<Vec<_>>>()?);
    }
    s.finish()?;

    let mut s = next_section(r, b"MASK")?;
    let mut valid = Vec::with_capacity(n);
    for _ in 0..n {
        valid.push(s.take(m)?.iter().map(|&b| b != 0).collect::<Vec<_>>());
    }
    let mut hits = Vec::with_capacity(n);
    for _ in 0..n {
        hits.push((0..m).map(|_| s.index(usize::MAX, "probe hit")).collect::<Result<Vec<_>>>()?);
    }
    s.finish()?;

    let lpfs = frames
        .into_iter()
        .zip(targets)
        .zip(spheres)
        .zip(vecs.into_iter().zip(valid).zip(hits))
        .map(|(((frame, target), (target_center, target_radius)), ((v, valid), hits))| LocalProbingField {
            frame,
            target,
            target_center,
            target_radius,
            v,
            valid,
            hits,
        })
        .collect();

    let mut s = next_section(r, b"DICT")?;
    let mut atoms = DMatrix::zeros(3 * m, d);
    for k in 0..d {
        for i in 0..3 * m {
            atoms[(i, k)] = s.f64()?;
        }
    }
    s.finish()?;
    let dictionary = Dictionary::from_raw(atoms).map_err(|e| corrupt(format!("dictionary: {e}")))?;

    let mut s = next_section(r, b"CODE")?;
    let nnz = s.u64()?;
    let mut codes = DMatrix::zeros(d, n);
    for _ in 0..nnz {
        let k = s.index(d, "code row")?;
        let j = s.index(n, "code column")?;
        codes[(k, j)] = s.f64()?;
    }
    s.finish()?;

    let mut s = next_section(r, b"ENRG")?;
    let initial_energy = s.energy()?;
    let mut energy_log = Vec::with_capacity(h.iterations);
    for _ in 0..h.iterations {
        energy_log.push(IterationEnergy {
            dictionary: s.energy()?,
            pose: s.energy()?,
            reprobe: s.energy()?,
        });
    }
    s.finish()?;

    Ok(AnalysisState {
        config: h.config,
        pattern,
        lpfs,
        dictionary,
        codes,
        initial_energy,
        energy_log,
    })
}

pub fn load_snapshot(path: &Path) -> Result<AnalysisState> {
    let file = File::open(path)
        .map_err(|e| LpfError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_snapshot(&mut BufReader::new(file))
}
