//! IDX files (the MNIST container format).
//!
//! Big-endian. Bytes 0–1 are zero, byte 2 is the element type, byte 3 the
//! rank, followed by `rank` big-endian `u32` dimensions and the row-major
//! payload.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl IdxData {
    pub fn type_byte(&self) -> u8 {
        match self {
            IdxData::U8(_) => 0x08,
            IdxData::I8(_) => 0x09,
            IdxData::I16(_) => 0x0B,
            IdxData::I32(_) => 0x0C,
            IdxData::F32(_) => 0x0D,
            IdxData::F64(_) => 0x0E,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::I8(v) => v.len(),
            IdxData::I16(v) => v.len(),
            IdxData::I32(v) => v.len(),
            IdxData::F32(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_u8(&self) -> Option<&[u8]> {
        match self {
            IdxData::U8(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub shape: Vec<usize>,
    pub data: IdxData,
}

fn element_width(type_byte: u8) -> Option<usize> {
    match type_byte {
        0x08 | 0x09 => Some(1),
        0x0B => Some(2),
        0x0C | 0x0D => Some(4),
        0x0E => Some(8),
        _ => None,
    }
}

pub fn parse_idx_bytes(bytes: &[u8]) -> Result<IdxArray> {
    let err = |offset: usize, message: String| Error::Parse { offset: offset as u64, message };
    if bytes.len() < 4 {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(0, format!("bad magic {:02x} {:02x}, expected 00 00", bytes[0], bytes[1])));
    }
    let type_byte = bytes[2];
    let width = element_width(type_byte).ok_or_else(|| err(2, format!("unsupported type byte 0x{type_byte:02x}")))?;
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(err(bytes.len(), format!("truncated dimensions: need {header} header bytes")));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let count: usize = shape.iter().product();
    let end = header + count * width;
    if bytes.len() < end {
        return Err(err(bytes.len(), format!("truncated payload: {count} elements need bytes up to offset {end}")));
    }
    if bytes.len() > end {
        return Err(err(end, format!("{} trailing bytes after payload", bytes.len() - end)));
    }
    let payload = &bytes[header..end];
    let data = match type_byte {
        0x08 => IdxData::U8(payload.to_vec()),
        0x09 => IdxData::I8(payload.iter().map(|b| *b as i8).collect()),
        0x0B => IdxData::I16(payload.chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]])).collect()),
        0x0C => IdxData::I32(payload.chunks_exact(4).map(|c| i32::from_be_bytes(c.try_into().unwrap())).collect()),
        0x0D => IdxData::F32(payload.chunks_exact(4).map(|c| f32::from_be_bytes(c.try_into().unwrap())).collect()),
        0x0E => IdxData::F64(payload.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().unwrap())).collect()),
        _ => unreachable!("width checked"),
    };
    Ok(IdxArray { shape, data })
}

pub fn parse_idx(path: &Path) -> Result<IdxArray> {
    parse_idx_bytes(&std::fs::read(path)?)
}

pub fn to_idx_bytes(array: &IdxArray) -> Result<Vec<u8>> {
    if array.shape.len() > 255 {
        return Err(Error::contract("IDX rank is limited to 255"));
    }
    if array.shape.iter().product::<usize>() != array.data.len() {
        return Err(Error::contract("IDX shape does not match payload length"));
    }
    let mut out = vec![0, 0, array.data.type_byte(), array.shape.len() as u8];
    for d in &array.shape {
        let d = u32::try_from(*d).map_err(|_| Error::contract("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::I8(v) => out.extend(v.iter().map(|x| *x as u8)),
        IdxData::I16(v) => out.extend(v.iter().flat_map(|x| x.to_be_bytes())),
        IdxData::I32(v) => out.extend(v.iter().flat_map(|x| x.to_be_bytes())),
        IdxData::F32(v) => out.extend(v.iter().flat_map(|x| x.to_be_bytes())),
        IdxData::F64(v) => out.extend(v.iter().flat_map(|x| x.to_be_bytes())),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_u8_rank_three() {
        let mut bytes = vec![0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4];
        bytes.extend(0..24u8);
        let a = parse_idx_bytes(&bytes).unwrap();
        assert_eq!(a.shape, vec![2, 3, 4]);
        assert_eq!(a.data, IdxData::U8((0..24).collect()));
    }

    #[test]
    fn short_payload_reports_offset() {
        let mut bytes = vec![0, 0, 0x08, 1, 0, 0, 0, 10];
        bytes.extend([1u8; 7]);
        match parse_idx_bytes(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_type_are_rejected() {
        assert!(matches!(parse_idx_bytes(&[1, 0, 8, 0]), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_idx_bytes(&[0, 0, 0x0A, 0]), Err(Error::Parse { offset: 2, .. })));
    }

    #[test]
    fn big_endian_i16() {
        let bytes = [0, 0, 0x0B, 1, 0, 0, 0, 2, 0xFF, 0xFE, 0x01, 0x00];
        assert_eq!(parse_idx_bytes(&bytes).unwrap().data, IdxData::I16(vec![-2, 256]));
    }

    proptest! {
        #[test]
        fn u8_round_trip(dims in proptest::collection::vec(1usize..5, 0..4), seed in any::<u8>()) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let a = IdxArray { shape: dims, data: IdxData::U8(data) };
            prop_assert_eq!(parse_idx_bytes(&to_idx_bytes(&a).unwrap()).unwrap(), a);
        }

        #[test]
        fn f64_round_trip(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let a = IdxArray { shape: vec![values.len()], data: IdxData::F64(values) };
            prop_assert_eq!(parse_idx_bytes(&to_idx_bytes(&a).unwrap()).unwrap(), a);
        }
    }
}
