use super::{MatrixError, Result};
use serde::{Deserialize, Serialize};

/// Binary interchange format of a faultable value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Width {
    Single,
    Double,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::Single => 32,
            Width::Double => 64,
        }
    }
}

/// Class of arithmetic results a fault can land in.
///
/// `MacResult` covers the single-precision multiply-add results of the
/// matrix kernels (one op per multiply-add). `ChecksumAccum` covers every
/// double-precision operation of the checking path: accumulation steps,
/// the products of predicted-checksum dot products and the final
/// predicted-minus-actual difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stream {
    MacResult,
    ChecksumAccum,
}

impl Stream {
    pub fn width(self) -> Width {
        match self {
            Stream::MacResult => Width::Single,
            Stream::ChecksumAccum => Width::Double,
        }
    }
}

pub fn flip_bit_f32(value: f32, bit: u32) -> Result<f32> {
    if bit >= 32 {
        return Err(MatrixError::BitOutOfRange {
            bit,
            width: Width::Single,
        });
    }
    Ok(f32::from_bits(value.to_bits() ^ (1u32 << bit)))
}

pub fn flip_bit_f64(value: f64, bit: u32) -> Result<f64> {
    if bit >= 64 {
        return Err(MatrixError::BitOutOfRange {
            bit,
            width: Width::Double,
        });
    }
    Ok(f64::from_bits(value.to_bits() ^ (1u64 << bit)))
}

/// Width-dispatching flip. For `Single` the value is first narrowed to `f32`.
pub fn flip_bit(value: f64, width: Width, bit: u32) -> Result<f64> {
    match width {
        Width::Single => flip_bit_f32(value as f32, bit).map(f64::from),
        Width::Double => flip_bit_f64(value, bit),
    }
}

/// One requested flip: bit `bit` of the `op_index`-th result in `stream`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitFlip {
    pub stream: Stream,
    pub op_index: u64,
    pub bit: u32,
}

/// Per-scope fault injector threaded through the kernels.
///
/// The hook numbers the results of each stream in execution order across
/// every kernel it is passed to. Each armed flip fires at most once. A hook
/// with nothing armed only counts, which is how stream populations are
/// measured.
#[derive(Debug, Clone, Default)]
pub struct FaultHook {
    // sorted descending by op index so the next target sits at the end
    mac_pending: Vec<(u64, u32)>,
    accum_pending: Vec<(u64, u32)>,
    mac_seen: u64,
    accum_seen: u64,
    fired: Vec<BitFlip>,
}

impl FaultHook {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(stream: Stream, op_index: u64, bit: u32) -> Result<Self> {
        Self::with_flips([BitFlip {
            stream,
            op_index,
            bit,
        }])
    }

    pub fn with_flips(flips: impl IntoIterator<Item = BitFlip>) -> Result<Self> {
        let mut hook = Self::default();
        for flip in flips {
            hook.arm(flip)?;
        }
        Ok(hook)
    }

    pub fn arm(&mut self, flip: BitFlip) -> Result<()> {
        let width = flip.stream.width();
        if flip.bit >= width.bits() {
            return Err(MatrixError::BitOutOfRange {
                bit: flip.bit,
                width,
            });
        }
        let pending = match flip.stream {
            Stream::MacResult => &mut self.mac_pending,
            Stream::ChecksumAccum => &mut self.accum_pending,
        };
        pending.push((flip.op_index, flip.bit));
        pending.sort_by(|a, b| b.cmp(a));
        Ok(())
    }

    /// Passes a single-precision multiply-add result through the hook.
    #[inline]
    pub fn mac(&mut self, value: f32) -> f32 {
        let index = self.mac_seen;
        self.mac_seen += 1;
        let mut value = value;
        while let Some(&(target, bit)) = self.mac_pending.last() {
            if target != index {
                break;
            }
            self.mac_pending.pop();
            value = f32::from_bits(value.to_bits() ^ (1u32 << bit));
            self.fired.push(BitFlip {
                stream: Stream::MacResult,
                op_index: index,
                bit,
            });
        }
        value
    }

    /// Passes a double-precision checksum operation result through the hook.
    #[inline]
    pub fn accum(&mut self, value: f64) -> f64 {
        let index = self.accum_seen;
        self.accum_seen += 1;
        let mut value = value;
        while let Some(&(target, bit)) = self.accum_pending.last() {
            if target != index {
                break;
            }
            self.accum_pending.pop();
            value = f64::from_bits(value.to_bits() ^ (1u64 << bit));
            self.fired.push(BitFlip {
                stream: Stream::ChecksumAccum,
                op_index: index,
                bit,
            });
        }
        value
    }

    /// Results observed so far in `stream`.
    pub fn seen(&self, stream: Stream) -> u64 {
        match stream {
            Stream::MacResult => self.mac_seen,
            Stream::ChecksumAccum => self.accum_seen,
        }
    }

    pub fn fired(&self) -> &[BitFlip] {
        &self.fired
    }

    /// True once every armed flip has fired.
    pub fn is_spent(&self) -> bool {
        self.mac_pending.is_empty() && self.accum_pending.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_bit_negates() {
        assert_eq!(flip_bit_f32(1.0, 31).unwrap(), -1.0);
        assert_eq!(flip_bit(1.0, Width::Single, 31).unwrap(), -1.0);
    }

    #[test]
    fn lowest_exponent_bit_halves_one() {
        // 1.0 = 0x3F80_0000; clearing bit 23 leaves 0x3F00_0000 = 0.5
        assert_eq!(0x3F80_0000u32 ^ (1 << 23), 0x3F00_0000);
        assert_eq!(flip_bit_f32(1.0, 23).unwrap(), 0.5);
    }

    #[test]
    fn zero_lsb_is_smallest_subnormal() {
        let v = flip_bit_f32(0.0, 0).unwrap();
        assert_eq!(v.to_bits(), 1);
        assert!(v > 0.0 && !v.is_normal());
    }

    #[test]
    fn out_of_range_bits_are_errors() {
        assert!(matches!(
            flip_bit_f32(1.0, 32),
            Err(MatrixError::BitOutOfRange {
                bit: 32,
                width: Width::Single
            })
        ));
        assert!(flip_bit_f64(1.0, 64).is_err());
        assert!(flip_bit_f64(1.0, 63).is_ok());
        assert!(FaultHook::single(Stream::MacResult, 0, 40).is_err());
        assert!(FaultHook::single(Stream::ChecksumAccum, 0, 40).is_ok());
    }

    #[test]
    fn hook_fires_once_at_target() {
        let mut hook = FaultHook::single(Stream::MacResult, 1, 31).unwrap();
        assert_eq!(hook.mac(2.0), 2.0);
        assert_eq!(hook.mac(2.0), -2.0);
        assert_eq!(hook.mac(2.0), 2.0);
        assert!(hook.is_spent());
        assert_eq!(hook.fired().len(), 1);
        assert_eq!(hook.seen(Stream::MacResult), 3);
        assert_eq!(hook.seen(Stream::ChecksumAccum), 0);
    }

    #[test]
    fn streams_are_numbered_independently() {
        let mut hook = FaultHook::with_flips([
            BitFlip {
                stream: Stream::ChecksumAccum,
                op_index: 0,
                bit: 63,
            },
            BitFlip {
                stream: Stream::MacResult,
                op_index: 0,
                bit: 31,
            },
        ])
        .unwrap();
        assert_eq!(hook.accum(1.5), -1.5);
        assert_eq!(hook.mac(1.5), -1.5);
        assert!(hook.is_spent());
    }

    #[test]
    fn unarmed_hook_only_counts() {
        let mut hook = FaultHook::none();
        for i in 0..10 {
            assert_eq!(hook.mac(i as f32), i as f32);
        }
        assert_eq!(hook.seen(Stream::MacResult), 10);
        assert!(hook.fired().is_empty());
    }
}
