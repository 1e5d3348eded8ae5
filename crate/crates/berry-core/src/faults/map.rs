//! Persistent fault maps over a linear memory layout.
//!
//! Address convention: the network's quantized codes are concatenated in
//! layer order (each layer: weights row-major, then bias codes), giving
//! code index c; bit b of code c (b = 0 is the LSB) lives at linear bit
//! address 8·c + b. The layout arranges addresses into rows of `cols`
//! bits; the column of address a is a mod cols. Addresses past the last
//! code but inside the layout are padding (a fault there corrupts
//! nothing).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Rectangular bit-cell array holding the code image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryLayout {
    pub rows: usize,
    pub cols: usize,
}

impl MemoryLayout {
    pub fn new(rows: usize, cols: usize) -> Result<MemoryLayout> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("degenerate memory layout {rows}×{cols}")));
        }
        Ok(MemoryLayout { rows, cols })
    }

    /// Smallest layout with `cols` bits per row covering `code_count`
    /// 8-bit codes.
    pub fn for_codes(code_count: usize, cols: usize) -> Result<MemoryLayout> {
        if code_count == 0 {
            return Err(Error::Config("layout for zero codes".into()));
        }
        if cols == 0 {
            return Err(Error::Config("layout with zero columns".into()));
        }
        let bits = code_count * 8;
        MemoryLayout::new(bits.div_ceil(cols), cols)
    }

    pub fn total_bits(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    pub fn column_of(&self, addr: u64) -> usize {
        (addr % self.cols as u64) as usize
    }
}

/// One faulty bit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEntry {
    pub addr: u64,
    /// true: cell reads 1 (stuck-at-1); false: stuck-at-0.
    /// In XOR-flip semantics the value is ignored and the bit toggles.
    pub stuck_one: bool,
}

/// Provenance of a map, carried for reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum FaultSource {
    Sampled { p: f64, bias: f64, seed: u64 },
    ColumnAligned { p: f64, bias: f64, concentration: f64, seed: u64 },
    Profiled { path: String },
    Synthetic,
}

/// A chip's persistent error pattern at one voltage: unique bit addresses
/// with stuck values, sorted ascending. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultMap {
    entries: Vec<FaultEntry>,
    pub source: FaultSource,
}

impl FaultMap {
    pub fn new(mut entries: Vec<FaultEntry>, source: FaultSource) -> Result<FaultMap> {
        entries.sort_by_key(|e| e.addr);
        for w in entries.windows(2) {
            if w[0].addr == w[1].addr {
                return Err(Error::Integrity(format!("duplicate fault address {}", w[0].addr)));
            }
        }
        Ok(FaultMap { entries, source })
    }

    pub fn empty(source: FaultSource) -> FaultMap {
        FaultMap {
            entries: Vec::new(),
            source,
        }
    }

    pub fn entries(&self) -> &[FaultEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every address lies inside the layout.
    pub fn validate_for(&self, layout: &MemoryLayout) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if last.addr >= layout.total_bits() {
                return Err(Error::Integrity(format!(
                    "fault address {} outside layout of {} bits",
                    last.addr,
                    layout.total_bits()
                )));
            }
        }
        Ok(())
    }

    /// Number of distinct columns the map touches.
    pub fn distinct_columns(&self, layout: &MemoryLayout) -> usize {
        let mut cols: Vec<usize> = self.entries.iter().map(|e| layout.column_of(e.addr)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols.len()
    }

    /// i.i.d. Bernoulli(p) fault placement with stuck values 1 at
    /// probability 0.5. Deterministic per (layout, p, seed).
    pub fn sample(layout: &MemoryLayout, p: f64, seed: u64) -> Result<FaultMap> {
        Self::sample_biased(layout, p, 0.5, seed)
    }

    /// As [`FaultMap::sample`] with an explicit stuck-at-1 bias.
    ///
    /// Implementation: geometric gap skipping. The gap to the next faulty
    /// cell is floor(ln(1−u)/ln(1−p)), which reproduces the exact i.i.d.
    /// Bernoulli process while touching only the faulty cells — essential
    /// at the tiny p this simulates (10⁻⁸..10⁻¹).
    pub fn sample_biased(layout: &MemoryLayout, p: f64, bias: f64, seed: u64) -> Result<FaultMap> {
        check_probability(p, "fault probability")?;
        check_probability(bias, "stuck-at-1 bias")?;
        let total = layout.total_bits();
        let source = FaultSource::Sampled { p, bias, seed };
        if p == 0.0 {
            return Ok(FaultMap::empty(source));
        }
        let mut rng = SimRng::new(seed);
        let mut entries = Vec::new();
        if p >= 1.0 {
            for addr in 0..total {
                entries.push(FaultEntry {
                    addr,
                    stuck_one: rng.gen_bool(bias),
                });
            }
            return Ok(FaultMap { entries, source });
        }
        let ln_q = (1.0 - p).ln();
        let mut addr: u64 = 0;
        loop {
            let u = rng.next_f64();
            let gap = ((1.0 - u).ln() / ln_q).floor();
            if !gap.is_finite() || gap >= (total - addr) as f64 {
                break;
            }
            addr += gap as u64;
            entries.push(FaultEntry {
                addr,
                stuck_one: rng.gen_bool(bias),
            });
            addr += 1;
            if addr >= total {
                break;
            }
        }
        Ok(FaultMap { entries, source })
    }

    /// Column-aligned pattern: a random subset of columns (fraction
    /// 1/concentration, at least one) carries all faults; cells within
    /// chosen columns fail at rate p·concentration (clamped to 1) so the
    /// global expected rate stays p.
    pub fn column_aligned(
        layout: &MemoryLayout,
        p: f64,
        zero_to_one_bias: f64,
        col_concentration: f64,
        seed: u64,
    ) -> Result<FaultMap> {
        check_probability(p, "fault probability")?;
        check_probability(zero_to_one_bias, "stuck-at-1 bias")?;
        if !col_concentration.is_finite() || col_concentration < 1.0 {
            return Err(Error::Config(format!(
                "column concentration must be ≥ 1, got {col_concentration}"
            )));
        }
        let source = FaultSource::ColumnAligned {
            p,
            bias: zero_to_one_bias,
            concentration: col_concentration,
            seed,
        };
        if p == 0.0 {
            return Ok(FaultMap::empty(source));
        }
        let n_cols = ((layout.cols as f64 / col_concentration).round() as usize)
            .clamp(1, layout.cols);
        let cell_rate = (p * col_concentration).min(1.0);
        let mut rng = SimRng::new(seed);
        let mut chosen = rng.choose_k(layout.cols, n_cols);
        chosen.sort_unstable();
        let mut entries = Vec::new();
        for &col in &chosen {
            for row in 0..layout.rows {
                if rng.gen_bool(cell_rate) {
                    entries.push(FaultEntry {
                        addr: row as u64 * layout.cols as u64 + col as u64,
                        stuck_one: rng.gen_bool(zero_to_one_bias),
                    });
                }
            }
        }
        entries.sort_by_key(|e| e.addr);
        Ok(FaultMap { entries, source })
    }

    /// Profiled-map text format:
    ///
    /// ```text
    /// # comments anywhere
    /// rows=<n>
    /// cols=<n>
    /// <bit_address>,<stuck_value 0|1>    (sorted ascending, unique)
    /// ```
    pub fn read_file(path: &Path) -> Result<(MemoryLayout, FaultMap)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<(MemoryLayout, FaultMap)> {
        let mut rows: Option<usize> = None;
        let mut cols: Option<usize> = None;
        let mut entries: Vec<FaultEntry> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::Integrity(format!("{origin}:{}: {msg}", ln + 1));
            if let Some(v) = line.strip_prefix("rows=") {
                rows = Some(v.trim().parse().map_err(|_| at(format!("bad rows value {v:?}")))?);
            } else if let Some(v) = line.strip_prefix("cols=") {
                cols = Some(v.trim().parse().map_err(|_| at(format!("bad cols value {v:?}")))?);
            } else {
                let (a, s) = line
                    .split_once(',')
                    .ok_or_else(|| at(format!("expected `bit_address,stuck_value`, got {line:?}")))?;
                let addr: u64 = a.trim().parse().map_err(|_| at(format!("bad bit address {a:?}")))?;
                let stuck_one = match s.trim() {
                    "0" => false,
                    "1" => true,
                    other => return Err(at(format!("stuck value must be 0 or 1, got {other:?}"))),
                };
                if let Some(prev) = entries.last() {
                    if addr <= prev.addr {
                        return Err(at(format!(
                            "addresses must be sorted ascending and unique ({} after {})",
                            addr, prev.addr
                        )));
                    }
                }
                entries.push(FaultEntry { addr, stuck_one });
            }
        }
        let rows = rows.ok_or_else(|| Error::Integrity(format!("{origin}: missing rows= header")))?;
        let cols = cols.ok_or_else(|| Error::Integrity(format!("{origin}: missing cols= header")))?;
        let layout = MemoryLayout::new(rows, cols)?;
        let map = FaultMap {
            entries,
            source: FaultSource::Profiled {
                path: origin.to_string(),
            },
        };
        map.validate_for(&layout)?;
        Ok((layout, map))
    }

    pub fn serialize(&self, layout: &MemoryLayout) -> String {
        let mut out = String::new();
        writeln!(out, "rows={}", layout.rows).unwrap();
        writeln!(out, "cols={}", layout.cols).unwrap();
        for e in &self.entries {
            writeln!(out, "{},{}", e.addr, if e.stuck_one { 1 } else { 0 }).unwrap();
        }
        out
    }

    pub fn write_file(&self, layout: &MemoryLayout, path: &Path) -> Result<()> {
        self.validate_for(layout)?;
        fs::write(path, self.serialize(layout)).map_err(|e| Error::io(path, e))
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{what} must lie in [0, 1], got {p}")));
    }
    Ok(())
}
