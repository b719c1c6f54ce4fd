use crate::error::{Error, Result};

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Self { buf: magic.to_vec() };
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_u32(&mut self, n: usize, what: &str) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Check magic and version; returns the reader positioned after them.
    pub fn open(data: &'a [u8], magic: &[u8; 4], version: u32, what: &'static str) -> Result<Self> {
        let mut r = Self { data, pos: 0, what };
        if r.bytes(4)? != magic {
            return Err(Error::Format(format!("{what}: bad magic")));
        }
        let v = r.u32()?;
        if v != version {
            return Err(Error::Format(format!("{what}: unsupported version {v}")));
        }
        Ok(r)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Format(format!("{}: truncated at byte {}", self.what, self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    /// Guard against headers that announce more data than the file holds.
    pub fn expect_remaining(&self, n: usize) -> Result<()> {
        if self.data.len() - self.pos != n {
            return Err(Error::Format(format!(
                "{}: expected {n} payload bytes, found {}",
                self.what,
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }

    pub fn expect_remaining_at_least(&self, n: usize) -> Result<()> {
        if self.data.len() - self.pos < n {
            return Err(Error::Format(format!("{}: truncated at byte {}", self.what, self.pos)));
        }
        Ok(())
    }
}
