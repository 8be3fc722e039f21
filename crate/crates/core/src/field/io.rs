//! Field files.
//!
//! ```text
//! "LFLD" | u32 version | u32 ndim | ndim x u32 dims | u32 element size | u64 sites | payload
//! ```
//!
//! All integers little-endian. The payload holds every site in canonical
//! order, so a file does not depend on how many ranks wrote it. Rank 0 does
//! all file access and trades blocks with the other ranks.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Codec, Field, FieldError, Result};
use crate::lattice::MAX_DIMS;
use crate::transport::Transport;

pub const FILE_MAGIC: &[u8; 4] = b"LFLD";
pub const FILE_VERSION: u32 = 1;

const GO: u8 = 1;
const ABORT: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldHeader {
    pub version: u32,
    pub dims: Vec<usize>,
    pub element_size: usize,
    pub sites: u64,
}

impl FieldHeader {
    pub fn new(dims: &[usize], element_size: usize) -> Self {
        FieldHeader {
            version: FILE_VERSION,
            dims: dims.to_vec(),
            element_size,
            sites: dims.iter().product::<usize>() as u64,
        }
    }

    pub fn encoded_len(&self) -> usize {
        4 + 4 + 4 + 4 * self.dims.len() + 4 + 8
    }

    pub fn payload_len(&self) -> u64 {
        self.sites * self.element_size as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(FILE_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.element_size as u32).to_le_bytes());
        out.extend_from_slice(&self.sites.to_le_bytes());
        out
    }

    /// Parses and sanity-checks a header.
    pub fn read(r: &mut impl Read) -> Result<FieldHeader> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != FILE_MAGIC {
            return Err(FieldError::Format(format!("bad magic {magic:02x?}")));
        }
        let version = read_u32(r)?;
        if version != FILE_VERSION {
            return Err(FieldError::Format(format!(
                "version {version}, expected {FILE_VERSION}"
            )));
        }
        let ndim = read_u32(r)? as usize;
        if ndim == 0 || ndim > MAX_DIMS {
            return Err(FieldError::Format(format!("ndim {ndim} outside 1..={MAX_DIMS}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u32(r)? as usize);
        }
        let element_size = read_u32(r)? as usize;
        let mut sites = [0u8; 8];
        read_exact(r, &mut sites)?;
        let sites = u64::from_le_bytes(sites);
        let volume = dims.iter().try_fold(1u64, |v, &d| v.checked_mul(d as u64));
        if volume != Some(sites) {
            return Err(FieldError::Format(format!(
                "{sites} sites do not match dims {dims:?}"
            )));
        }
        if element_size == 0 {
            return Err(FieldError::Format("zero element size".into()));
        }
        Ok(FieldHeader {
            version,
            dims,
            element_size,
            sites,
        })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => FieldError::Format("truncated header".into()),
        _ => FieldError::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads the header of a field file and checks that the payload is complete.
pub fn inspect_file(path: impl AsRef<Path>) -> Result<FieldHeader> {
    let mut f = File::open(path)?;
    let header = FieldHeader::read(&mut f)?;
    let actual = f.metadata()?.len();
    let expected = header.encoded_len() as u64 + header.payload_len();
    if actual < expected {
        return Err(FieldError::Format(format!(
            "truncated payload: {actual} bytes, expected {expected}"
        )));
    }
    if actual > expected {
        return Err(FieldError::Format(format!(
            "{} trailing bytes after payload",
            actual - expected
        )));
    }
    Ok(header)
}

fn status(ok: std::result::Result<(), &str>) -> Vec<u8> {
    match ok {
        Ok(()) => vec![GO],
        Err(reason) => {
            let mut m = vec![ABORT];
            m.extend_from_slice(reason.as_bytes());
            m
        }
    }
}

fn check_status(msg: &[u8]) -> Result<()> {
    match msg.split_first() {
        Some((&GO, [])) => Ok(()),
        Some((&ABORT, reason)) => Err(FieldError::Remote(String::from_utf8_lossy(reason).into())),
        _ => Err(FieldError::Format(format!("unexpected control message {msg:02x?}"))),
    }
}

impl<C: Codec> Field<C> {
    fn header(&self) -> FieldHeader {
        FieldHeader::new(self.lattice.dims(), self.elem)
    }

    /// Collects every rank's local block on rank 0.
    ///
    /// `place` sees blocks in rank order with the sites they hold. When
    /// `ready` is an error nothing is transferred and every rank fails.
    fn collect<T, F>(&self, t: &mut T, ready: std::result::Result<(), String>, mut place: F) -> Result<()>
    where
        T: Transport + ?Sized,
        F: FnMut(&[usize], &[u8]) -> std::io::Result<()>,
    {
        self.check_transport(t)?;
        let n = t.nranks();
        if t.rank() != 0 {
            check_status(&t.recv(0)?)?;
            t.send(0, self.local_block())?;
            return check_status(&t.recv(0)?);
        }
        if let Err(reason) = ready {
            for p in 1..n {
                t.send(p, &status(Err(&reason)))?;
            }
            return Err(FieldError::Remote(reason));
        }
        let mut outcome: std::result::Result<(), std::io::Error> =
            place(self.lattice.local_sites(), self.local_block());
        let mut served = Vec::new();
        for p in 1..n {
            if let Err(e) = &outcome {
                t.send(p, &status(Err(&e.to_string())))?;
                continue;
            }
            t.send(p, &status(Ok(())))?;
            served.push(p);
            let sites = self.lattice.sites_of_rank(p);
            let mut block = vec![0u8; sites.len() * self.elem];
            t.recv_into(p, &mut block)?;
            outcome = place(&sites, &block);
        }
        let report = match &outcome {
            Ok(()) => status(Ok(())),
            Err(e) => status(Err(&e.to_string())),
        };
        for p in served {
            t.send(p, &report)?;
        }
        outcome.map_err(FieldError::Io)
    }

    /// Canonically ordered bytes of the whole field, returned on rank 0 only.
    pub fn gather<T: Transport + ?Sized>(&self, t: &mut T) -> Result<Option<Vec<u8>>> {
        let elem = self.elem;
        let mut all = if t.rank() == 0 {
            vec![0u8; self.lattice.volume() * elem]
        } else {
            Vec::new()
        };
        self.collect(t, Ok(()), |sites, block| {
            scatter_into(&mut all, elem, sites, block);
            Ok(())
        })?;
        Ok((t.rank() == 0).then_some(all))
    }

    /// Writes the field to `path`. Collective; only rank 0 touches the file.
    pub fn save<T: Transport + ?Sized>(&self, path: impl AsRef<Path>, t: &mut T) -> Result<()> {
        let elem = self.elem;
        if t.rank() != 0 {
            return self.collect(t, Ok(()), |_, _| Ok(()));
        }
        let header = self.header();
        let opened = File::create(path.as_ref()).and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(&header.to_bytes())?;
            Ok(w)
        });
        let mut writer = match opened {
            Ok(w) => w,
            Err(e) => {
                let reason = format!("cannot write {}: {e}", path.as_ref().display());
                return self.collect(t, Err(reason), |_, _| Ok(()));
            }
        };
        if self.lattice.is_index_contiguous() {
            // each rank's block is the next span of the file
            self.collect(t, Ok(()), |_, block| writer.write_all(block))?;
        } else {
            let mut all = vec![0u8; self.lattice.volume() * elem];
            self.collect(t, Ok(()), |sites, block| {
                scatter_into(&mut all, elem, sites, block);
                Ok(())
            })?;
            writer.write_all(&all)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a field written by [`Field::save`] on any number of ranks.
    ///
    /// Only local sites are filled; call [`Field::update`] afterwards to
    /// refresh halo copies.
    pub fn load<T: Transport + ?Sized>(&mut self, path: impl AsRef<Path>, t: &mut T) -> Result<()> {
        self.check_transport(t)?;
        if t.rank() != 0 {
            check_status(&t.recv(0)?)?;
            t.recv_into(0, self.local_block_mut())?;
            return Ok(());
        }
        let payload = match self.read_payload(path.as_ref()) {
            Ok(p) => p,
            Err(e) => {
                let reason = e.to_string();
                for p in 1..t.nranks() {
                    t.send(p, &status(Err(&reason)))?;
                }
                return Err(e);
            }
        };
        let elem = self.elem;
        for p in 1..t.nranks() {
            let sites = self.lattice.sites_of_rank(p);
            let mut block = Vec::with_capacity(sites.len() * elem);
            for &i in &sites {
                block.extend_from_slice(&payload[i * elem..(i + 1) * elem]);
            }
            t.send(p, &status(Ok(())))?;
            t.send(p, &block)?;
        }
        let lattice = std::sync::Arc::clone(&self.lattice);
        let local = self.local_block_mut();
        for (k, &i) in lattice.local_sites().iter().enumerate() {
            local[k * elem..(k + 1) * elem].copy_from_slice(&payload[i * elem..(i + 1) * elem]);
        }
        Ok(())
    }

    fn read_payload(&self, path: &Path) -> Result<Vec<u8>> {
        let mut f = File::open(path)?;
        let header = FieldHeader::read(&mut f)?;
        if header.dims != self.lattice.dims() {
            return Err(FieldError::Format(format!(
                "file dims {:?}, field dims {:?}",
                header.dims,
                self.lattice.dims()
            )));
        }
        if header.element_size != self.elem {
            return Err(FieldError::Format(format!(
                "file elements are {} bytes, field elements are {}",
                header.element_size, self.elem
            )));
        }
        let want = header.payload_len() as usize;
        let mut payload = Vec::with_capacity(want);
        f.read_to_end(&mut payload)?;
        if payload.len() < want {
            return Err(FieldError::Format(format!(
                "truncated payload: {} of {want} bytes",
                payload.len()
            )));
        }
        if payload.len() > want {
            return Err(FieldError::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - want
            )));
        }
        Ok(payload)
    }
}

fn scatter_into(all: &mut [u8], elem: usize, sites: &[usize], block: &[u8]) {
    for (&i, chunk) in sites.iter().zip(block.chunks_exact(elem)) {
        all[i * elem..(i + 1) * elem].copy_from_slice(chunk);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Plain;
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::transport::InProcHub;
    use std::sync::Arc;

    #[test]
    fn header_bytes() {
        let h = FieldHeader::new(&[10, 10, 10], 64);
        let mut expected = b"LFLD".to_vec();
        expected.extend([1, 0, 0, 0, 3, 0, 0, 0]);
        expected.extend([10, 0, 0, 0, 10, 0, 0, 0, 10, 0, 0, 0]);
        expected.extend([64, 0, 0, 0]);
        expected.extend([0xE8, 0x03, 0, 0, 0, 0, 0, 0]);
        assert_eq!(h.to_bytes(), expected);
        assert_eq!(h.encoded_len(), expected.len());
        assert_eq!(FieldHeader::read(&mut expected.as_slice()).unwrap(), h);
    }

    #[test]
    fn header_errors() {
        let good = FieldHeader::new(&[4, 2], 8).to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(FieldHeader::read(&mut bad.as_slice()), Err(FieldError::Format(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(FieldHeader::read(&mut bad.as_slice()), Err(FieldError::Format(_))));
        assert!(matches!(
            FieldHeader::read(&mut &good[..good.len() - 1]),
            Err(FieldError::Format(_))
        ));
        let mut bad = good.clone();
        bad[good.len() - 8] = 9;
        assert!(matches!(FieldHeader::read(&mut bad.as_slice()), Err(FieldError::Format(_))));
    }

    #[test]
    fn single_rank_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lfld");
        let l = Arc::new(Lattice::build(LatticeSpec::new(&[3, 4], 1), 0).unwrap());
        let mut ep = InProcHub::endpoints(1).pop().unwrap();
        let mut f = Field::new(Arc::clone(&l), Plain::<u16>::new()).unwrap();
        f.fill_with(|x| x.index() as u16 * 7).unwrap();
        f.save(&path, &mut ep).unwrap();
        assert_eq!(inspect_file(&path).unwrap(), FieldHeader::new(&[3, 4], 2));

        let mut g = Field::new(Arc::clone(&l), Plain::<u16>::new()).unwrap();
        g.load(&path, &mut ep).unwrap();
        assert_eq!(g.storage(), f.storage());

        let mut wide = Field::new(Arc::clone(&l), Plain::<u32>::new()).unwrap();
        assert!(matches!(wide.load(&path, &mut ep), Err(FieldError::Format(_))));
        let other = Arc::new(Lattice::build(LatticeSpec::new(&[4, 3], 1), 0).unwrap());
        let mut g = Field::new(other, Plain::<u16>::new()).unwrap();
        assert!(matches!(g.load(&path, &mut ep), Err(FieldError::Format(_))));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(inspect_file(&path), Err(FieldError::Format(_))));
        let mut g = Field::new(Arc::clone(&l), Plain::<u16>::new()).unwrap();
        assert!(matches!(g.load(&path, &mut ep), Err(FieldError::Format(_))));
    }

    #[test]
    fn unwritable_path_fails_every_rank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("f.lfld");
        let eps = InProcHub::endpoints(3);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = eps
                .into_iter()
                .enumerate()
                .map(|(rank, mut ep)| {
                    let path = path.clone();
                    s.spawn(move || {
                        let l = Arc::new(Lattice::build(LatticeSpec::new(&[6], 3), rank).unwrap());
                        let f = Field::new(l, Plain::<u8>::new()).unwrap();
                        f.save(&path, &mut ep)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(results.iter().all(|r| matches!(r, Err(FieldError::Remote(_)))));
    }
}
