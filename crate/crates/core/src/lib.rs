//! Distributed lattice fields.
//!
//! Declare a [`Lattice`] on every rank, allocate [`Field`]s on it, write the
//! local sites, and call [`Field::update`] to refresh the halo copies of
//! neighboring sites owned by other ranks. Messages only flow between ranks
//! that actually share links, one message per direction per pair.
//!
//! ```
//! use std::sync::Arc;
//! use lattice_field::{Field, Lattice, LatticeSpec, MatrixCodec, InProcHub, Matrix};
//!
//! let lattice = Arc::new(Lattice::build(LatticeSpec::new(&[10, 10, 10], 1), 0).unwrap());
//! let mut phi = Field::new(Arc::clone(&lattice), MatrixCodec::new(2, 2)).unwrap();
//! let mut endpoint = InProcHub::endpoints(1).pop().unwrap();
//! phi.fill_with(|_| Matrix::identity(2)).unwrap();
//! phi.update(&mut endpoint).unwrap();
//! let x = lattice.site_at(&[9, 0, 0]).unwrap();
//! assert_eq!(phi.get(&(x + 0)).unwrap(), Matrix::identity(2));
//! ```

pub mod field;
pub mod lattice;
pub mod linalg;
pub mod poisson;
pub mod transport;

pub use field::{Codec, Element, Field, FieldError, FieldHeader, MatrixCodec, Plain};
pub use lattice::{Lattice, LatticeError, LatticeSpec, RngStream, Sign, Site, Slab, Torus};
pub use linalg::{Complex, LinalgError, Matrix, I};
pub use transport::{
    barrier, make_plan, ExchangePlan, InProcEndpoint, InProcHub, TcpConfig, TcpEndpoint, Transport,
    TransportError,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl Error {
    /// The underlying transport failure, if any.
    pub fn transport(&self) -> Option<&TransportError> {
        match self {
            Error::Transport(e) | Error::Field(FieldError::Transport(e)) => Some(e),
            _ => None,
        }
    }

    pub(crate) fn is_disconnect(&self) -> bool {
        matches!(self.transport(), Some(TransportError::Connection(_)))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
