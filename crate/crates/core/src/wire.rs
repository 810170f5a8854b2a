//! Canonical binary encoding.
//!
//! Integers are little-endian, group elements 32-byte compressed Ristretto, scalars 32-byte
//! canonical little-endian. Variable-length sequences carry a `u32` element count; fixed-size
//! arrays carry none. `Option` is a one-byte presence flag followed by the value.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::elgamal::{Ciphertext, DecryptionProof};
use crate::error::{Error, Result};
use crate::filter::{BitProof, FilterSubmission, RangeProof, SquareLinkProof};
use crate::group::{
    point_from_bytes, point_to_bytes, scalar_from_bytes, Commitment, GroupElement, Scalar,
    ENCODED_LEN,
};
use crate::vss::CoeffCommitments;

/// Cursor over an input buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Malformed(format!("truncated input at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

pub trait Wire: Sized {
    fn encode(&self, out: &mut Vec<u8>);
    fn encoded_len(&self) -> usize;
    fn decode(r: &mut Reader<'_>) -> Result<Self>;
}

pub fn to_bytes<T: Wire>(value: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(value.encoded_len());
    value.encode(&mut out);
    out
}

/// Decodes a complete buffer, rejecting trailing bytes.
pub fn from_bytes<T: Wire>(bytes: &[u8]) -> Result<T> {
    let mut r = Reader::new(bytes);
    let v = T::decode(&mut r)?;
    r.finish()?;
    Ok(v)
}

macro_rules! wire_int {
    ($t:ty) => {
        impl Wire for $t {
            fn encode(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn encoded_len(&self) -> usize {
                std::mem::size_of::<$t>()
            }
            fn decode(r: &mut Reader<'_>) -> Result<Self> {
                let bytes = r.take(std::mem::size_of::<$t>())?;
                Ok(<$t>::from_le_bytes(bytes.try_into().unwrap()))
            }
        }
    };
}

wire_int!(u8);
wire_int!(u32);
wire_int!(u64);

impl Wire for bool {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }
    fn encoded_len(&self) -> usize {
        1
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        match u8::decode(r)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Malformed(format!("invalid bool byte {b}"))),
        }
    }
}

impl Wire for Scalar {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.as_bytes());
    }
    fn encoded_len(&self) -> usize {
        ENCODED_LEN
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        scalar_from_bytes(r.take(ENCODED_LEN)?)
    }
}

impl Wire for GroupElement {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&point_to_bytes(self));
    }
    fn encoded_len(&self) -> usize {
        ENCODED_LEN
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        point_from_bytes(r.take(ENCODED_LEN)?)
    }
}

impl Wire for Commitment {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out)
    }
    fn encoded_len(&self) -> usize {
        ENCODED_LEN
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        GroupElement::decode(r).map(Commitment)
    }
}

impl<T: Wire> Wire for Vec<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode(out);
        for item in self {
            item.encode(out);
        }
    }
    fn encoded_len(&self) -> usize {
        4 + self.iter().map(Wire::encoded_len).sum::<usize>()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = u32::decode(r)? as usize;
        // each element takes at least one byte; refuse counts the input cannot hold
        if n > r.remaining() {
            return Err(Error::Malformed(format!("sequence length {n} exceeds input")));
        }
        (0..n).map(|_| T::decode(r)).collect()
    }
}

impl<T: Wire> Wire for Arc<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        (**self).encode(out)
    }
    fn encoded_len(&self) -> usize {
        (**self).encoded_len()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        T::decode(r).map(Arc::new)
    }
}

impl<T: Wire, const N: usize> Wire for [T; N] {
    fn encode(&self, out: &mut Vec<u8>) {
        for item in self {
            item.encode(out);
        }
    }
    fn encoded_len(&self) -> usize {
        self.iter().map(Wire::encoded_len).sum()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let items: Vec<T> = (0..N).map(|_| T::decode(r)).collect::<Result<_>>()?;
        items
            .try_into()
            .map_err(|_| Error::Malformed("array length".into()))
    }
}

impl<T: Wire> Wire for Option<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Some(v) => {
                out.push(1);
                v.encode(out);
            }
            None => out.push(0),
        }
    }
    fn encoded_len(&self) -> usize {
        1 + self.as_ref().map_or(0, Wire::encoded_len)
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        if bool::decode(r)? {
            T::decode(r).map(Some)
        } else {
            Ok(None)
        }
    }
}

impl<A: Wire, B: Wire> Wire for (A, B) {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
        self.1.encode(out);
    }
    fn encoded_len(&self) -> usize {
        self.0.encoded_len() + self.1.encoded_len()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok((A::decode(r)?, B::decode(r)?))
    }
}

impl<V: Wire> Wire for BTreeMap<u32, V> {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode(out);
        for (k, v) in self {
            k.encode(out);
            v.encode(out);
        }
    }
    fn encoded_len(&self) -> usize {
        4 + self.values().map(|v| 4 + v.encoded_len()).sum::<usize>()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let pairs: Vec<(u32, V)> = Vec::decode(r)?;
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if map.insert(k, v).is_some() {
                return Err(Error::Malformed(format!("duplicate key {k}")));
            }
        }
        Ok(map)
    }
}

/// Implements `Wire` for a struct by encoding its fields in declaration order.
macro_rules! wire_struct {
    ($t:ty { $($field:ident),+ $(,)? }) => {
        impl Wire for $t {
            fn encode(&self, out: &mut Vec<u8>) {
                $( self.$field.encode(out); )+
            }
            fn encoded_len(&self) -> usize {
                0 $( + self.$field.encoded_len() )+
            }
            fn decode(r: &mut Reader<'_>) -> Result<Self> {
                Ok(Self { $( $field: Wire::decode(r)?, )+ })
            }
        }
    };
}
pub(crate) use wire_struct;

wire_struct!(Ciphertext { c1, c2 });
wire_struct!(DecryptionProof { m, a, b, z });
wire_struct!(BitProof {
    commitment,
    e0,
    e1,
    z0,
    z1
});
wire_struct!(RangeProof { bits });
wire_struct!(SquareLinkProof {
    c_sq,
    e,
    z_x,
    z_r,
    z_rho
});
wire_struct!(FilterSubmission {
    param_comms,
    square_links,
    norm_proof,
    layer_proofs
});

impl Wire for CoeffCommitments {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out)
    }
    fn encoded_len(&self) -> usize {
        self.0.encoded_len()
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Vec::decode(r).map(CoeffCommitments)
    }
}
