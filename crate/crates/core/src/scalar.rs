//! Scalar abstraction: the one trait every numeric module is generic over,
//! plus the torn-free atomic cells the shared iterate is built from.

use std::fmt::{Debug, Display, LowerExp};
use std::ops::AddAssign;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

/// Floating-point scalar the solver runs on. Implemented for `f32`/`f64`.
///
/// The associated [`AtomicCell`] is what makes lock-free shared iterates
/// possible: every coordinate lives in one cell whose reads and writes are
/// individually torn-free (bit-cast onto the same-width atomic integer).
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    type Atomic: AtomicCell<Self>;

    /// Lossy conversion from an `f64` constant; total for finite inputs.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant converts")
    }
}

impl Scalar for f64 {
    type Atomic = AtomicF64;
}

impl Scalar for f32 {
    type Atomic = AtomicF32;
}

/// A shared scalar cell. Loads and stores are atomic (never torn) and
/// intentionally `Relaxed`: workers are allowed to observe stale values, the
/// algorithm's delay model accounts for that. `fetch_add` never loses a
/// concurrent addition, which is what keeps maintained residuals consistent.
pub trait AtomicCell<S>: Send + Sync {
    fn new(v: S) -> Self;
    fn load(&self) -> S;
    fn store(&self, v: S);
    /// Atomic `+= v`; returns the previous value.
    fn fetch_add(&self, v: S) -> S;
    /// Applies `f` atomically (CAS loop, bitwise compare); returns the value
    /// `f` produced. Every concurrent call takes effect exactly once.
    fn rmw(&self, f: impl FnMut(S) -> S) -> S;
}

pub struct AtomicF64(AtomicU64);

impl AtomicCell<f64> for AtomicF64 {
    #[inline]
    fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn fetch_add(&self, v: f64) -> f64 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + v).to_bits();
            match self
                .0
                .compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(prev) => return f64::from_bits(prev),
                Err(seen) => cur = seen,
            }
        }
    }

    #[inline]
    fn rmw(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let new = f(f64::from_bits(cur));
            match self.0.compare_exchange_weak(
                cur,
                new.to_bits(),
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return new,
                Err(seen) => cur = seen,
            }
        }
    }
}

pub struct AtomicF32(AtomicU32);

impl AtomicCell<f32> for AtomicF32 {
    #[inline]
    fn new(v: f32) -> Self {
        AtomicF32(AtomicU32::new(v.to_bits()))
    }

    #[inline]
    fn load(&self) -> f32 {
        f32::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(&self, v: f32) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn fetch_add(&self, v: f32) -> f32 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f32::from_bits(cur) + v).to_bits();
            match self
                .0
                .compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(prev) => return f32::from_bits(prev),
                Err(seen) => cur = seen,
            }
        }
    }

    #[inline]
    fn rmw(&self, mut f: impl FnMut(f32) -> f32) -> f32 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let new = f(f32::from_bits(cur));
            match self.0.compare_exchange_weak(
                cur,
                new.to_bits(),
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return new,
                Err(seen) => cur = seen,
            }
        }
    }
}
