//! High-water accounting of attention score/weight buffers.
//!
//! Every buffer holding attention scores or weights is allocated through
//! [`MeteredBuf`], which reports its size to a per-thread counter. The
//! benchmark resets the peak, runs a forward pass and reads it back, which
//! isolates the memory attributable to the attention pattern.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

thread_local! {
    static CURRENT: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

fn charge(bytes: usize) {
    CURRENT.with(|c| {
        let now = c.get() + bytes;
        c.set(now);
        PEAK.with(|p| p.set(p.get().max(now)));
    });
}

fn release(bytes: usize) {
    CURRENT.with(|c| c.set(c.get().saturating_sub(bytes)));
}

/// Bytes of attention buffers currently alive on this thread.
pub fn current_bytes() -> usize {
    CURRENT.with(Cell::get)
}

/// High-water mark since the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.with(Cell::get)
}

pub fn reset_peak() {
    PEAK.with(|p| p.set(current_bytes()));
}

/// Charges `bytes` for as long as the guard lives, for buffers owned
/// elsewhere (e.g. a dense score matrix).
#[derive(Debug)]
pub struct MeterCharge(usize);

impl MeterCharge {
    pub fn new(bytes: usize) -> Self {
        charge(bytes);
        MeterCharge(bytes)
    }
}

impl Drop for MeterCharge {
    fn drop(&mut self) {
        release(self.0);
    }
}

/// A `Vec` whose allocation is charged to the attention meter.
#[derive(Debug)]
pub struct MeteredBuf<T> {
    data: Vec<T>,
}

impl<T: Copy> MeteredBuf<T> {
    pub fn filled(len: usize, value: T) -> Self {
        charge(len * std::mem::size_of::<T>());
        MeteredBuf { data: vec![value; len] }
    }
}

impl<T: Clone> Clone for MeteredBuf<T> {
    fn clone(&self) -> Self {
        charge(self.data.len() * std::mem::size_of::<T>());
        MeteredBuf { data: self.data.clone() }
    }
}

impl<T> Drop for MeteredBuf<T> {
    fn drop(&mut self) {
        release(self.data.len() * std::mem::size_of::<T>());
    }
}

impl<T> Deref for MeteredBuf<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for MeteredBuf<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_tracks_live_buffers() {
        reset_peak();
        let base = current_bytes();
        {
            let _a = MeteredBuf::filled(100, 0f32);
            let _b = MeteredBuf::filled(50, 0f64);
            assert_eq!(current_bytes() - base, 800);
        }
        assert_eq!(current_bytes(), base);
        assert!(peak_bytes() >= base + 800);
    }
}
