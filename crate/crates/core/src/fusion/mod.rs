//! Merging the four per-class masks into one composite.
//!
//! The composite keeps every class (multi-label), so nothing is lost when
//! lesions overlap. On disk it is a single-channel 8-bit PNG whose pixel
//! value is the class bitmask: bit 0 EX, bit 1 HE, bit 2 MA, bit 3 SE
//! (values 0..=15). Overlaps are only resolved when drawing an overlay.

pub mod composite;
pub mod overlay;

pub use composite::{fuse, CompositeMask, CLASS_BITS};
pub use overlay::{render_overlay, ColorMap};
