use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Bytes per page of linear memory.
pub const PAGE_SIZE: usize = 65_536;

/// Upper bound on `max_pages`: a 32-bit address space.
pub const MAX_PAGES_LIMIT: u32 = 65_536;

/// A 32-bit value. Arithmetic is modulo 2^32; signedness is chosen by the
/// operation, not the value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(pub i32);

impl Value {
    pub const ZERO: Value = Value(0);

    pub fn from_u32(bits: u32) -> Self {
        Value(bits as i32)
    }

    pub fn as_i32(self) -> i32 {
        self.0
    }

    pub fn as_u32(self) -> u32 {
        self.0 as u32
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Linear memory and globals of an instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Store {
    memory: Vec<u8>,
    page_count: u32,
    max_pages: u32,
    pub(crate) globals: Vec<Value>,
}

impl Store {
    pub(crate) fn new(initial_pages: u32, max_pages: u32, globals: Vec<Value>) -> Self {
        Store {
            memory: vec![0; initial_pages as usize * PAGE_SIZE],
            page_count: initial_pages,
            max_pages,
            globals,
        }
    }

    pub fn memory(&self) -> &[u8] {
        &self.memory
    }

    pub fn page_count(&self) -> u32 {
        self.page_count
    }

    pub fn max_pages(&self) -> u32 {
        self.max_pages
    }

    pub fn globals(&self) -> &[Value] {
        &self.globals
    }

    /// Reads a little-endian word, or `None` if `[addr, addr + 4)` is not
    /// inside memory.
    pub fn load(&self, addr: u32) -> Option<Value> {
        let start = addr as usize;
        let bytes = self.memory.get(start..start.checked_add(4)?)?;
        Some(Value(i32::from_le_bytes(bytes.try_into().unwrap())))
    }

    /// Writes a little-endian word. Nothing is written when the access is
    /// out of bounds.
    pub fn store(&mut self, addr: u32, value: Value) -> Option<()> {
        let start = addr as usize;
        let bytes = self.memory.get_mut(start..start.checked_add(4)?)?;
        bytes.copy_from_slice(&value.0.to_le_bytes());
        Some(())
    }

    /// Grows memory by `delta` zero-filled pages, returning the old page
    /// count, or `None` (memory unchanged) when `max_pages` would be exceeded.
    pub fn grow(&mut self, delta: u32) -> Option<u32> {
        let old = self.page_count;
        let new = u64::from(old) + u64::from(delta);
        if new > u64::from(self.max_pages) {
            return None;
        }
        self.memory.resize(new as usize * PAGE_SIZE, 0);
        self.page_count = new as u32;
        Some(old)
    }
}
