//! Applying fault maps to quantized code images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qnet::QuantizedNetwork;

use super::map::{FaultMap, MemoryLayout};

/// How a map entry corrupts its bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultSemantics {
    /// The cell always reads its stuck value (persistent SRAM failure).
    /// Observed flip rate on random data ≈ p/2.
    #[default]
    StuckAt,
    /// The bit is toggled (rate-exact flips); stuck values are ignored.
    XorFlip,
}

/// Corrupts a code slice in place. Addresses must lie inside the layout;
/// addresses in the padding past the last code are ignored.
pub fn apply_to_codes(
    codes: &mut [i8],
    layout: &MemoryLayout,
    fault_map: &FaultMap,
    semantics: FaultSemantics,
) -> Result<()> {
    let code_bits = codes.len() as u64 * 8;
    if layout.total_bits() < code_bits {
        return Err(Error::Integrity(format!(
            "layout of {} bits cannot hold {} code bits",
            layout.total_bits(),
            code_bits
        )));
    }
    fault_map.validate_for(layout)?;
    for e in fault_map.entries() {
        if e.addr >= code_bits {
            continue; // padding cell
        }
        let idx = (e.addr / 8) as usize;
        let bit = (e.addr % 8) as u32;
        let mask = 1u8 << bit;
        let raw = codes[idx] as u8;
        let corrupted = match semantics {
            FaultSemantics::StuckAt => {
                if e.stuck_one {
                    raw | mask
                } else {
                    raw & !mask
                }
            }
            FaultSemantics::XorFlip => raw ^ mask,
        };
        codes[idx] = corrupted as i8;
    }
    Ok(())
}

/// Pure corruption of a whole quantized network: the fault map addresses
/// the concatenation of all layers' codes in layer order.
pub fn apply_fault_map(
    q: &QuantizedNetwork,
    layout: &MemoryLayout,
    fault_map: &FaultMap,
    semantics: FaultSemantics,
) -> Result<QuantizedNetwork> {
    let mut image: Vec<i8> = Vec::with_capacity(q.code_count());
    for l in &q.layers {
        image.extend_from_slice(&l.codes);
    }
    apply_to_codes(&mut image, layout, fault_map, semantics)?;
    let mut out = q.clone();
    let mut off = 0;
    for l in out.layers.iter_mut() {
        let n = l.codes.len();
        l.codes.copy_from_slice(&image[off..off + n]);
        off += n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::map::{FaultEntry, FaultSource};
    use crate::qnet::{BiasMode, QNetwork};

    fn entry(addr: u64, stuck_one: bool) -> FaultEntry {
        FaultEntry { addr, stuck_one }
    }

    #[test]
    fn empty_map_is_identity() {
        let mut codes = vec![1i8, -5, 127, -128, 0];
        let orig = codes.clone();
        let l = MemoryLayout::for_codes(codes.len(), 8).unwrap();
        let m = FaultMap::empty(FaultSource::Synthetic);
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(codes, orig);
    }

    #[test]
    fn single_bit_arithmetic() {
        // stuck-at-1 on bit 7 of code 0 → 0b1000_0000 = −128
        let l = MemoryLayout::for_codes(1, 8).unwrap();
        let mut codes = vec![0i8];
        let m = FaultMap::new(vec![entry(7, true)], FaultSource::Synthetic).unwrap();
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(codes[0], -128);

        // stuck-at-1 on bit 0 of 127: already set, unchanged
        let mut codes = vec![127i8];
        let m = FaultMap::new(vec![entry(0, true)], FaultSource::Synthetic).unwrap();
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(codes[0], 127);

        // stuck-at-0 on bit 0 of 127 → 126
        let mut codes = vec![127i8];
        let m = FaultMap::new(vec![entry(0, false)], FaultSource::Synthetic).unwrap();
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(codes[0], 126);

        // XOR flips regardless of stuck value
        let mut codes = vec![127i8];
        let m = FaultMap::new(vec![entry(0, true)], FaultSource::Synthetic).unwrap();
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::XorFlip).unwrap();
        assert_eq!(codes[0], 126);
    }

    #[test]
    fn stuck_at_is_idempotent_xor_is_not() {
        let l = MemoryLayout::for_codes(4, 8).unwrap();
        let m = FaultMap::new(
            vec![entry(2, true), entry(9, false), entry(30, true)],
            FaultSource::Synthetic,
        )
        .unwrap();
        let orig = vec![11i8, -42, 77, -1];

        let mut once = orig.clone();
        apply_to_codes(&mut once, &l, &m, FaultSemantics::StuckAt).unwrap();
        let mut twice = once.clone();
        apply_to_codes(&mut twice, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(once, twice);

        let mut x_once = orig.clone();
        apply_to_codes(&mut x_once, &l, &m, FaultSemantics::XorFlip).unwrap();
        let mut x_twice = x_once.clone();
        apply_to_codes(&mut x_twice, &l, &m, FaultSemantics::XorFlip).unwrap();
        assert_eq!(x_twice, orig); // XOR toggles back instead
    }

    #[test]
    fn out_of_layout_address_is_integrity_error() {
        let l = MemoryLayout::new(1, 16).unwrap(); // 16 bits
        let mut codes = vec![0i8];
        let m = FaultMap::new(vec![entry(16, true)], FaultSource::Synthetic).unwrap();
        let err = apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt);
        assert!(matches!(err, Err(Error::Integrity(_))));
    }

    #[test]
    fn padding_addresses_corrupt_nothing() {
        // 1 code = 8 bits, layout padded to 16
        let l = MemoryLayout::new(1, 16).unwrap();
        let mut codes = vec![55i8];
        let m = FaultMap::new(vec![entry(12, true)], FaultSource::Synthetic).unwrap();
        apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(codes[0], 55);
    }

    #[test]
    fn layout_too_small_for_codes_is_integrity_error() {
        let l = MemoryLayout::new(1, 8).unwrap();
        let mut codes = vec![0i8, 0];
        let m = FaultMap::empty(FaultSource::Synthetic);
        assert!(matches!(
            apply_to_codes(&mut codes, &l, &m, FaultSemantics::StuckAt),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn network_image_addressing_spans_layers() {
        let net = QNetwork::init(&[2, 2, 2], 1).unwrap();
        let q = QuantizedNetwork::quantize(&net, BiasMode::Quantized);
        // layer 0 holds 4 weights + 2 biases = 6 codes; the first code of
        // layer 1 starts at address 48
        let l = MemoryLayout::for_codes(q.code_count(), 8).unwrap();
        let target_addr = 48;
        let old = q.layers[1].codes[0];
        let m = FaultMap::new(vec![entry(target_addr, true)], FaultSource::Synthetic).unwrap();
        let got = apply_fault_map(&q, &l, &m, FaultSemantics::StuckAt).unwrap();
        assert_eq!(got.layers[1].codes[0], (old as u8 | 1) as i8);
        assert_eq!(got.layers[0].codes, q.layers[0].codes);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Locality: no bit outside the map's addresses changes.
            #[test]
            fn locality(seed in any::<u64>(), p in 0.0f64..0.3) {
                let l = MemoryLayout::new(16, 16).unwrap(); // 256 bits = 32 codes
                let m = FaultMap::sample(&l, p, seed).unwrap();
                let mut rng = crate::rng::SimRng::new(seed ^ 0xabcd);
                let orig: Vec<i8> = (0..32).map(|_| rng.next_u64() as i8).collect();
                let mut got = orig.clone();
                apply_to_codes(&mut got, &l, &m, FaultSemantics::StuckAt).unwrap();

                let faulted: std::collections::HashSet<u64> =
                    m.entries().iter().map(|e| e.addr).collect();
                for bit_addr in 0..256u64 {
                    let idx = (bit_addr / 8) as usize;
                    let bit = (bit_addr % 8) as u32;
                    let before = (orig[idx] as u8 >> bit) & 1;
                    let after = (got[idx] as u8 >> bit) & 1;
                    if faulted.contains(&bit_addr) {
                        let e = m.entries().iter().find(|e| e.addr == bit_addr).unwrap();
                        prop_assert_eq!(after, e.stuck_one as u8);
                    } else {
                        prop_assert_eq!(before, after, "bit {} changed", bit_addr);
                    }
                }
            }

            /// Persistence: applying the same map twice equals applying once.
            #[test]
            fn stuck_at_idempotent(seed in any::<u64>(), p in 0.0f64..0.5) {
                let l = MemoryLayout::new(8, 32).unwrap();
                let m = FaultMap::sample(&l, p, seed).unwrap();
                let mut rng = crate::rng::SimRng::new(seed ^ 0x77);
                let orig: Vec<i8> = (0..32).map(|_| rng.next_u64() as i8).collect();
                let mut once = orig.clone();
                apply_to_codes(&mut once, &l, &m, FaultSemantics::StuckAt).unwrap();
                let mut twice = once.clone();
                apply_to_codes(&mut twice, &l, &m, FaultSemantics::StuckAt).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
