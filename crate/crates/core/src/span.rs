//! Temporal intervals in the three coordinate systems the pipeline uses:
//! seconds, normalized `(center, width)`, and half-open clip-index ranges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpanError {
    #[error("span start {start} must be >= 0 and < end {end}")]
    Inverted { start: f64, end: f64 },
    #[error("span [{start}, {end}] exceeds duration {duration}")]
    OutOfRange { start: f64, end: f64, duration: f64 },
    #[error("degenerate normalized span (width {0})")]
    Degenerate(f64),
    #[error("clip span {start}..{end} is empty or exceeds {len} clips")]
    BadClipRange { start: usize, end: usize, len: usize },
}

/// An interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpan {
    pub start: f64,
    pub end: f64,
}

impl MomentSpan {
    pub fn new(start: f64, end: f64) -> Result<Self, SpanError> {
        if !(start >= 0.0 && end > start && end.is_finite()) {
            return Err(SpanError::Inverted { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn check_within(&self, duration: f64) -> Result<(), SpanError> {
        if self.end > duration {
            return Err(SpanError::OutOfRange {
                start: self.start,
                end: self.end,
                duration,
            });
        }
        Ok(())
    }

    pub fn to_normalized(&self, duration: f64) -> NormSpan {
        NormSpan {
            center: (self.start + self.end) / (2.0 * duration),
            width: (self.end - self.start) / duration,
        }
    }

    /// Clip `i` of length `clip_len` is inside iff its center `(i + 0.5) * clip_len`
    /// lies in `[start, end)`. Returns `None` when no clip center is covered.
    pub fn to_clips(&self, clip_len: f64, num_clips: usize) -> Option<ClipSpan> {
        let inside = |i: usize| {
            let c = (i as f64 + 0.5) * clip_len;
            c >= self.start && c < self.end
        };
        let first = (0..num_clips).find(|&i| inside(i))?;
        let last = (first..num_clips).take_while(|&i| inside(i)).last()?;
        Some(ClipSpan {
            start: first,
            end: last + 1,
        })
    }
}

/// A span in `(center, width)` coordinates relative to the video duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpan {
    pub center: f64,
    pub width: f64,
}

impl NormSpan {
    pub fn new(center: f64, width: f64) -> Self {
        Self { center, width }
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    pub fn to_seconds(&self, duration: f64) -> (f64, f64) {
        (self.start() * duration, self.end() * duration)
    }

    pub fn validate(&self) -> Result<(), SpanError> {
        if !(self.width > 0.0) || !self.center.is_finite() {
            return Err(SpanError::Degenerate(self.width));
        }
        Ok(())
    }
}

/// Half-open clip-index range `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClipSpan {
    pub start: usize,
    pub end: usize,
}

impl ClipSpan {
    pub fn new(start: usize, end: usize, num_clips: usize) -> Result<Self, SpanError> {
        if start >= end || end > num_clips {
            return Err(SpanError::BadClipRange {
                start,
                end,
                len: num_clips,
            });
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }

    pub fn to_normalized(&self, num_clips: usize) -> NormSpan {
        let t = num_clips as f64;
        NormSpan {
            center: (self.start + self.end) as f64 / (2.0 * t),
            width: self.len() as f64 / t,
        }
    }

    pub fn to_seconds(&self, clip_len: f64) -> MomentSpan {
        MomentSpan {
            start: self.start as f64 * clip_len,
            end: self.end as f64 * clip_len,
        }
    }
}
