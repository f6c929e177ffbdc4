//! Bounds-checked reader for the binary store formats. Every decoder in
//! the crate goes through this so malformed input fails with a short read
//! instead of a panic or an oversized allocation.

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn skip(&mut self, n: usize) -> Option<()> {
        self.read_slice(n).map(|_| ())
    }

    pub fn read_slice(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    pub fn read_array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.read_slice(N).map(|s| s.try_into().unwrap())
    }

    pub fn read_u8(&mut self) -> Option<u8> {
        self.read_slice(1).map(|s| s[0])
    }

    pub fn read_u16(&mut self) -> Option<u16> {
        self.read_array().map(u16::from_le_bytes)
    }

    pub fn read_u32(&mut self) -> Option<u32> {
        self.read_array().map(u32::from_le_bytes)
    }

    pub fn read_u64(&mut self) -> Option<u64> {
        self.read_array().map(u64::from_le_bytes)
    }

    pub fn read_f64(&mut self) -> Option<f64> {
        self.read_array().map(f64::from_le_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_are_bounds_checked() {
        let mut c = Cursor::new(&[1, 0, 0, 0, 7]);
        assert_eq!(c.read_u32(), Some(1));
        assert_eq!(c.read_u8(), Some(7));
        assert!(c.at_end());
        assert_eq!(c.read_u8(), None);
    }
}
