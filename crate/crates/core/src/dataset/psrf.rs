//! PSRF field files: `"PSRF"`, u32 version = 1, u32 rows, u32 cols, then
//! `rows·cols` little-endian f64 in row-major order (row 0 is the `y = −3`
//! edge). All integers little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::{Field, Grid};

pub const MAGIC: &[u8; 4] = b"PSRF";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_field(field: &Field) -> Vec<u8> {
    let n = field.grid().n() as u32;
    let mut out = Vec::with_capacity(HEADER + 8 * field.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a square PSRF field on the benchmark domain.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<Field> {
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: HEADER,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(format("bad magic, expected PSRF".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != VERSION {
        return Err(format(format!("unsupported version {}", word(1))));
    }
    let (rows, cols) = (word(2) as usize, word(3) as usize);
    if rows != cols {
        return Err(Error::Shape(format!("{}: field is {rows}x{cols}, expected square", path.display())));
    }
    let expected = HEADER + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let grid = Grid::new(rows)?;
    let data = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::new(grid, data).map_err(|e| format(e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_field(field)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes, path)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn layout() {
        let grid = Grid::new(3).unwrap();
        let f = Field::from_fn(grid, |x, y| x + 10.0 * y);
        let bytes = encode_field(&f);
        assert_eq!(&bytes[..4], b"PSRF");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], 3u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 72);
        // first value is the (x, y) = (-3, -3) corner
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), -33.0);
    }

    #[test]
    fn rejects_damage() {
        let p = Path::new("mem");
        let bytes = encode_field(&Field::zeros(Grid::new(4).unwrap()));
        assert!(matches!(decode_field(&bytes[..bytes.len() - 1], p), Err(Error::LengthMismatch { .. })));
        let mut bad = bytes.clone();
        bad[1] = b'Q';
        assert!(matches!(decode_field(&bad, p), Err(Error::Format { .. })));
        let mut bad = bytes;
        bad[12] = 5;
        assert!(decode_field(&bad, p).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_bit_exact(n in 3usize..9, seed in any::<u64>()) {
            let grid = Grid::new(n).unwrap();
            let mut s = seed;
            let f = Field::from_fn(grid, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits((s >> 12) | 0x3ff0_0000_0000_0000) - 1.5
            });
            let back = decode_field(&encode_field(&f), Path::new("mem")).unwrap();
            prop_assert_eq!(encode_field(&back), encode_field(&f));
        }
    }
}
