use std::io::Write;

use serde::Serialize;

use crate::error::{Result, StoneError};

/// Newline-delimited JSON records.
pub struct NdjsonLog<W: Write> {
    out: W,
}

impl<W: Write> NdjsonLog<W> {
    pub fn new(out: W) -> Self {
        NdjsonLog { out }
    }

    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out
            .write_all(b"\n")
            .map_err(|e| StoneError::io("<log>", e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| StoneError::io("<log>", e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
