//! Fields: one fixed-size element per lattice site, distributed over ranks.
//!
//! Each rank stores its own sites followed by one halo block per
//! overlapping peer. A halo block holds read-only copies of the peer's sites
//! in the same order the peer sends them, so [`Field::update`] can receive
//! each peer's message straight into place.

mod codec;
mod io;

pub use codec::{Codec, Element, MatrixCodec, Plain};
pub use io::{inspect_file, FieldHeader, FILE_MAGIC, FILE_VERSION};

use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{Lattice, Site};
use crate::transport::{make_plan, ExchangeBuffers, ExchangePlan, Transport, TransportError};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error("site {0} is not stored on this rank")]
    Locality(usize),
    #[error("site {0} is a read-only halo copy on this rank")]
    HaloWrite(usize),
    #[error("bad element: {0}")]
    Element(String),
    #[error("bad field file: {0}")]
    Format(String),
    #[error("file error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("rank 0 reported: {0}")]
    Remote(String),
}

impl FieldError {
    /// Whether this is an access to a site the rank cannot write or read.
    pub fn is_locality(&self) -> bool {
        matches!(self, FieldError::Locality(_) | FieldError::HaloWrite(_))
    }
}

pub type Result<T> = std::result::Result<T, FieldError>;

pub struct Field<C: Codec> {
    lattice: Arc<Lattice>,
    codec: C,
    elem: usize,
    storage: Vec<u8>,
    plan: ExchangePlan,
}

impl<C: Codec> Field<C> {
    /// Allocates zeroed storage for the local sites and every halo block.
    pub fn new(lattice: Arc<Lattice>, codec: C) -> Result<Self> {
        let elem = codec.byte_size();
        if elem == 0 {
            return Err(FieldError::Config("element size must be nonzero".into()));
        }
        let storage = vec![0u8; lattice.slot_count() * elem];
        let plan = make_plan(lattice.rank(), lattice.overlapping_peers());
        Ok(Field {
            lattice,
            codec,
            elem,
            storage,
            plan,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn codec(&self) -> &C {
        &self.codec
    }

    pub fn element_size(&self) -> usize {
        self.elem
    }

    pub fn plan(&self) -> &ExchangePlan {
        &self.plan
    }

    /// The whole storage region: local block, then halo blocks by ascending peer.
    pub fn storage(&self) -> &[u8] {
        &self.storage
    }

    pub fn local_block(&self) -> &[u8] {
        &self.storage[..self.lattice.local_sites().len() * self.elem]
    }

    pub(crate) fn local_block_mut(&mut self) -> &mut [u8] {
        let n = self.lattice.local_sites().len() * self.elem;
        &mut self.storage[..n]
    }

    /// Halo copies received from `peer`, empty if there are none.
    pub fn halo_block(&self, peer: usize) -> &[u8] {
        let range = halo_range(&self.lattice, self.elem, peer);
        &self.storage[range]
    }

    /// Encoded bytes of site `index`, local or halo.
    pub fn bytes(&self, index: usize) -> Result<&[u8]> {
        let slot = self
            .lattice
            .slot_index(index)
            .ok_or(FieldError::Locality(index))?;
        Ok(&self.storage[slot * self.elem..(slot + 1) * self.elem])
    }

    pub fn get(&self, site: &Site<'_>) -> Result<C::Value> {
        self.get_index(site.index())
    }

    pub fn get_index(&self, index: usize) -> Result<C::Value> {
        Ok(self.codec.decode(self.bytes(index)?))
    }

    pub fn set(&mut self, site: &Site<'_>, value: &C::Value) -> Result<()> {
        self.set_index(site.index(), value)
    }

    pub fn set_index(&mut self, index: usize, value: &C::Value) -> Result<()> {
        let slot = match self.lattice.slot_index(index) {
            Some(s) if s < self.lattice.local_sites().len() => s,
            Some(_) => return Err(FieldError::HaloWrite(index)),
            None => return Err(FieldError::Locality(index)),
        };
        let out = &mut self.storage[slot * self.elem..(slot + 1) * self.elem];
        self.codec.encode(value, out)
    }

    /// Sets every local site from a function of the site.
    pub fn fill_with(&mut self, mut f: impl FnMut(&Site<'_>) -> C::Value) -> Result<()> {
        let lattice = Arc::clone(&self.lattice);
        for (slot, site) in lattice.for_local_sites().enumerate() {
            let v = f(&site);
            let out = &mut self.storage[slot * self.elem..(slot + 1) * self.elem];
            self.codec.encode(&v, out)?;
        }
        Ok(())
    }

    /// Refreshes every halo copy from its owner.
    ///
    /// Collective: every rank must call it. Each overlapping pair exchanges
    /// one message per direction.
    pub fn update<T: Transport + ?Sized>(&mut self, transport: &mut T) -> Result<()> {
        self.check_transport(transport)?;
        let mut buffers = HaloBuffers {
            lattice: &self.lattice,
            elem: self.elem,
            storage: &mut self.storage,
        };
        self.plan.execute(transport, &mut buffers)?;
        Ok(())
    }

    pub(crate) fn check_transport<T: Transport + ?Sized>(&self, t: &T) -> Result<()> {
        if t.rank() != self.lattice.rank() || t.nranks() != self.lattice.nranks() {
            return Err(FieldError::Config(format!(
                "endpoint is rank {} of {}, lattice is rank {} of {}",
                t.rank(),
                t.nranks(),
                self.lattice.rank(),
                self.lattice.nranks()
            )));
        }
        Ok(())
    }
}

fn halo_range(lattice: &Lattice, elem: usize, peer: usize) -> std::ops::Range<usize> {
    match lattice.halo_offset(peer) {
        Some(off) => off * elem..(off + lattice.halo_list(peer).len()) * elem,
        None => 0..0,
    }
}

struct HaloBuffers<'a> {
    lattice: &'a Lattice,
    elem: usize,
    storage: &'a mut [u8],
}

impl ExchangeBuffers for HaloBuffers<'_> {
    fn gather(&mut self, peer: usize, out: &mut Vec<u8>) -> bool {
        let list = self.lattice.send_list(peer);
        if list.is_empty() {
            return false;
        }
        out.reserve(list.len() * self.elem);
        for &idx in list {
            // send lists only hold local sites, whose slot is their local rank
            let slot = self.lattice.slot_index(idx).expect("send list site is local");
            out.extend_from_slice(&self.storage[slot * self.elem..(slot + 1) * self.elem]);
        }
        true
    }

    fn destination(&mut self, peer: usize) -> Option<&mut [u8]> {
        let range = halo_range(self.lattice, self.elem, peer);
        if range.is_empty() {
            return None;
        }
        Some(&mut self.storage[range])
    }
}
