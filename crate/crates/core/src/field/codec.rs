use std::marker::PhantomData;

use super::FieldError;
use crate::linalg::{Complex, Matrix};

/// Fixed-size byte encoding of one field element.
pub trait Codec {
    type Value;

    /// Encoded length of every element. Must be nonzero.
    fn byte_size(&self) -> usize;

    /// Writes `value` into `out`, which is exactly `byte_size()` long.
    fn encode(&self, value: &Self::Value, out: &mut [u8]) -> Result<(), FieldError>;

    /// Reads a value back from `byte_size()` bytes. All-zero bytes must decode.
    fn decode(&self, bytes: &[u8]) -> Self::Value;
}

/// Plain values with a little-endian fixed-size layout.
pub trait Element: Sized {
    const BYTES: usize;

    fn write_le(&self, out: &mut [u8]);

    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! le_element {
    ($($t:ty),*) => {$(
        impl Element for $t {
            const BYTES: usize = std::mem::size_of::<$t>();

            fn write_le(&self, out: &mut [u8]) {
                out.copy_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    )*};
}

le_element!(u8, i8, u16, i16, u32, i32, u64, i64, f32, f64);

impl Element for Complex {
    const BYTES: usize = 16;

    fn write_le(&self, out: &mut [u8]) {
        self.re.write_le(&mut out[..8]);
        self.im.write_le(&mut out[8..]);
    }

    fn read_le(bytes: &[u8]) -> Self {
        Complex::new(f64::read_le(&bytes[..8]), f64::read_le(&bytes[8..]))
    }
}

impl<T: Element + Copy + Default, const N: usize> Element for [T; N] {
    const BYTES: usize = T::BYTES * N;

    fn write_le(&self, out: &mut [u8]) {
        for (v, chunk) in self.iter().zip(out.chunks_exact_mut(T::BYTES)) {
            v.write_le(chunk);
        }
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut out = [T::default(); N];
        for (v, chunk) in out.iter_mut().zip(bytes.chunks_exact(T::BYTES)) {
            *v = T::read_le(chunk);
        }
        out
    }
}

/// Codec for any [`Element`] type.
pub struct Plain<T>(PhantomData<fn() -> T>);

impl<T> Plain<T> {
    pub fn new() -> Self {
        Plain(PhantomData)
    }
}

impl<T> Default for Plain<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Clone for Plain<T> {
    fn clone(&self) -> Self {
        Self::new()
    }
}

impl<T: Element> Codec for Plain<T> {
    type Value = T;

    fn byte_size(&self) -> usize {
        T::BYTES
    }

    fn encode(&self, value: &T, out: &mut [u8]) -> Result<(), FieldError> {
        value.write_le(out);
        Ok(())
    }

    fn decode(&self, bytes: &[u8]) -> T {
        T::read_le(bytes)
    }
}

/// `rows x cols` complex matrices, row-major, real part before imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixCodec {
    pub rows: usize,
    pub cols: usize,
}

impl MatrixCodec {
    pub fn new(rows: usize, cols: usize) -> Self {
        MatrixCodec { rows, cols }
    }
}

impl Codec for MatrixCodec {
    type Value = Matrix;

    fn byte_size(&self) -> usize {
        self.rows * self.cols * Complex::BYTES
    }

    fn encode(&self, value: &Matrix, out: &mut [u8]) -> Result<(), FieldError> {
        if value.shape() != (self.rows, self.cols) {
            return Err(FieldError::Element(format!(
                "a {}x{} matrix does not fit a {}x{} field",
                value.rows(),
                value.cols(),
                self.rows,
                self.cols
            )));
        }
        for (z, chunk) in value.as_slice().iter().zip(out.chunks_exact_mut(Complex::BYTES)) {
            z.write_le(chunk);
        }
        Ok(())
    }

    fn decode(&self, bytes: &[u8]) -> Matrix {
        let data = bytes.chunks_exact(Complex::BYTES).map(Complex::read_le).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("codec shape")
    }
}
