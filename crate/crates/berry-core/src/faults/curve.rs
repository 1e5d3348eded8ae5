//! Voltage→(bit error rate, energy scale) curve.
//!
//! Voltages are normalized to the lowest error-free supply voltage, so
//! v_norm = 1.0 is the zero-error reference and the interesting regime is
//! v_norm < 1. BER is a per-bit probability in [0, 1] (not percent);
//! energy_scale is the dimensionless processing-energy savings factor vs
//! the reference (≥ 1, growing as voltage drops).
//!
//! Evaluation rules:
//! - exact stored values at knots (zero tolerance, read-back);
//! - between knots: BER log-linearly (it spans ~7 decades over a narrow
//!   voltage range), energy scale linearly;
//! - BER is 0 for v_norm ≥ 1, and 0 on the open interval between the
//!   highest positive-BER knot and a zero-BER knot (the log-space limit);
//! - both quantities clamp to the lowest knot below it, and energy scale
//!   clamps to the highest knot above it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub v_norm: f64,
    pub ber: f64,
    pub energy_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageCurve {
    /// Sorted by strictly descending v_norm.
    points: Vec<CurvePoint>,
}

/// Bundled default curve: 13 measured low-voltage knots plus the
/// (1.0, 0, 1.0) reference anchor. BER values are probabilities (the
/// source data lists percentages; e.g. 2.47·10⁻² % = 2.47·10⁻⁴).
const BUNDLED: [(f64, f64, f64); 14] = [
    (1.00, 0.0, 1.00),
    (0.86, 1.96e-8, 2.77),
    (0.84, 1.38e-7, 2.87),
    (0.83, 8.23e-7, 2.97),
    (0.81, 4.22e-6, 3.07),
    (0.80, 1.87e-5, 3.18),
    (0.79, 7.25e-5, 3.30),
    (0.77, 2.47e-4, 3.43),
    (0.76, 7.49e-4, 3.55),
    (0.74, 2.03e-3, 3.69),
    (0.73, 4.98e-3, 3.84),
    (0.71, 1.11e-2, 3.99),
    (0.68, 5.80e-2, 4.42),
    (0.64, 2.036e-1, 4.93),
];

impl VoltageCurve {
    pub fn new(mut points: Vec<CurvePoint>) -> Result<VoltageCurve> {
        if points.is_empty() {
            return Err(Error::Config("voltage curve has no points".into()));
        }
        for p in &points {
            if !(p.v_norm.is_finite() && p.ber.is_finite() && p.energy_scale.is_finite()) {
                return Err(Error::Config("voltage curve has non-finite values".into()));
            }
            if p.v_norm <= 0.0 {
                return Err(Error::Config(format!("curve knot at non-positive voltage {}", p.v_norm)));
            }
            if !(0.0..=1.0).contains(&p.ber) {
                return Err(Error::Config(format!("BER {} outside [0, 1]", p.ber)));
            }
            if p.energy_scale < 1.0 {
                return Err(Error::Config(format!(
                    "energy scale {} below the reference 1.0",
                    p.energy_scale
                )));
            }
            if p.v_norm >= 1.0 && p.ber != 0.0 {
                return Err(Error::Config(format!(
                    "knot at v_norm {} ≥ 1 must have zero BER, got {}",
                    p.v_norm, p.ber
                )));
            }
        }
        points.sort_by(|a, b| b.v_norm.partial_cmp(&a.v_norm).unwrap());
        for w in points.windows(2) {
            if w[0].v_norm == w[1].v_norm {
                return Err(Error::Config(format!("duplicate curve knot at v_norm {}", w[0].v_norm)));
            }
            // descending voltage ⇒ non-decreasing BER and energy scale
            if w[1].ber < w[0].ber {
                return Err(Error::Config(format!(
                    "BER must not decrease as voltage drops ({} → {} at v_norm {})",
                    w[0].ber, w[1].ber, w[1].v_norm
                )));
            }
            if w[1].energy_scale < w[0].energy_scale {
                return Err(Error::Config(format!(
                    "energy scale must not decrease as voltage drops (at v_norm {})",
                    w[1].v_norm
                )));
            }
        }
        Ok(VoltageCurve { points })
    }

    /// The bundled measured curve (13 low-voltage knots + reference anchor).
    pub fn bundled() -> &'static VoltageCurve {
        static CURVE: OnceLock<VoltageCurve> = OnceLock::new();
        CURVE.get_or_init(|| {
            VoltageCurve::new(
                BUNDLED
                    .iter()
                    .map(|&(v_norm, ber, energy_scale)| CurvePoint {
                        v_norm,
                        ber,
                        energy_scale,
                    })
                    .collect(),
            )
            .expect("bundled curve is valid")
        })
    }

    /// Knots, sorted by descending v_norm.
    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    /// Voltages of all knots, descending.
    pub fn voltages(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v_norm).collect()
    }

    fn check_voltage(v_norm: f64) -> Result<()> {
        if !v_norm.is_finite() || v_norm <= 0.0 {
            return Err(Error::Usage(format!("voltage must be positive, got {v_norm}")));
        }
        Ok(())
    }

    /// Per-bit error probability at a voltage.
    pub fn ber_at(&self, v_norm: f64) -> Result<f64> {
        Self::check_voltage(v_norm)?;
        if v_norm >= 1.0 {
            return Ok(0.0);
        }
        let pts = &self.points;
        if v_norm >= pts[0].v_norm {
            return Ok(pts[0].ber);
        }
        let last = pts.len() - 1;
        if v_norm <= pts[last].v_norm {
            return Ok(pts[last].ber);
        }
        // bracketing pair: pts[i].v_norm > v_norm >= pts[i+1].v_norm
        let i = self.bracket(v_norm);
        let (hi, lo) = (&pts[i], &pts[i + 1]);
        if v_norm == lo.v_norm {
            return Ok(lo.ber);
        }
        if hi.ber == 0.0 {
            // log-space limit against a zero endpoint: 0 everywhere strictly
            // above the positive knot
            return Ok(0.0);
        }
        let t = (hi.v_norm - v_norm) / (hi.v_norm - lo.v_norm);
        let log_ber = (1.0 - t) * hi.ber.log10() + t * lo.ber.log10();
        Ok(10f64.powf(log_ber))
    }

    /// Processing-energy savings factor at a voltage (≥ 1; 1.0 at the
    /// reference).
    pub fn energy_scale_at(&self, v_norm: f64) -> Result<f64> {
        Self::check_voltage(v_norm)?;
        let pts = &self.points;
        if v_norm >= pts[0].v_norm {
            return Ok(pts[0].energy_scale);
        }
        let last = pts.len() - 1;
        if v_norm <= pts[last].v_norm {
            return Ok(pts[last].energy_scale);
        }
        let i = self.bracket(v_norm);
        let (hi, lo) = (&pts[i], &pts[i + 1]);
        if v_norm == lo.v_norm {
            return Ok(lo.energy_scale);
        }
        let t = (hi.v_norm - v_norm) / (hi.v_norm - lo.v_norm);
        Ok((1.0 - t) * hi.energy_scale + t * lo.energy_scale)
    }

    /// Index i with points[i].v_norm > v >= points[i+1].v_norm.
    /// Caller guarantees v is strictly inside the knot range.
    fn bracket(&self, v_norm: f64) -> usize {
        let pts = &self.points;
        let mut i = 0;
        while v_norm < pts[i + 1].v_norm {
            i += 1;
        }
        i
    }

    /// CSV serialization: header `v_norm,ber,energy_scale`, BER in
    /// scientific notation, everything round-trips exactly.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("v_norm,ber,energy_scale\n");
        for p in &self.points {
            writeln!(out, "{},{:e},{}", p.v_norm, p.ber, p.energy_scale).unwrap();
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<VoltageCurve> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Integrity("empty curve CSV".into()))?;
        if header != "v_norm,ber,energy_scale" {
            return Err(Error::Integrity(format!(
                "bad curve CSV header {header:?}, expected \"v_norm,ber,energy_scale\""
            )));
        }
        let mut points = Vec::new();
        for (ln, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Integrity(format!(
                    "curve CSV row {} has {} fields, expected 3",
                    ln + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Integrity(format!("curve CSV row {}: bad {what} {s:?}", ln + 2)))
            };
            points.push(CurvePoint {
                v_norm: parse(fields[0], "v_norm")?,
                ber: parse(fields[1], "ber")?,
                energy_scale: parse(fields[2], "energy_scale")?,
            });
        }
        VoltageCurve::new(points)
    }

    pub fn to_csv_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_file(path: &Path) -> Result<VoltageCurve> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        VoltageCurve::from_csv_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_knots_read_back_exactly() {
        let c = VoltageCurve::bundled();
        for &(v, ber, scale) in &BUNDLED {
            assert_eq!(c.ber_at(v).unwrap(), ber, "ber at {v}");
            assert_eq!(c.energy_scale_at(v).unwrap(), scale, "scale at {v}");
        }
    }

    #[test]
    fn ber_is_zero_at_and_above_reference() {
        let c = VoltageCurve::bundled();
        for v in [1.0, 1.28, 2.0] {
            assert_eq!(c.ber_at(v).unwrap(), 0.0);
        }
        // zero-endpoint limit on the open interval below the reference
        for v in [0.99, 0.9, 0.861] {
            assert_eq!(c.ber_at(v).unwrap(), 0.0, "at {v}");
        }
        assert_eq!(c.ber_at(0.86).unwrap(), 1.96e-8);
    }

    #[test]
    fn ber_clamps_below_lowest_knot() {
        let c = VoltageCurve::bundled();
        assert_eq!(c.ber_at(0.5).unwrap(), 2.036e-1);
        assert_eq!(c.energy_scale_at(0.5).unwrap(), 4.93);
    }

    #[test]
    fn energy_scale_clamps_above() {
        let c = VoltageCurve::bundled();
        assert_eq!(c.energy_scale_at(1.0).unwrap(), 1.0);
        assert_eq!(c.energy_scale_at(1.28).unwrap(), 1.0);
    }

    #[test]
    fn ber_interpolates_log_linearly() {
        let c = VoltageCurve::bundled();
        // midpoint of (0.77, 2.47e-4) and (0.76, 7.49e-4): geometric mean
        let got = c.ber_at(0.765).unwrap();
        let expected = (2.47e-4f64 * 7.49e-4).sqrt();
        assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
    }

    #[test]
    fn energy_interpolates_linearly() {
        let c = VoltageCurve::bundled();
        let got = c.energy_scale_at(0.765).unwrap();
        let expected = (3.43 + 3.55) / 2.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn curve_is_monotone_between_arbitrary_points() {
        // lowering the voltage never lowers the error rate or the
        // energy-efficiency scale
        let c = VoltageCurve::bundled();
        let mut prev_ber = f64::NEG_INFINITY;
        let mut prev_scale = f64::NEG_INFINITY;
        let mut v = 1.05;
        while v > 0.6 {
            let ber = c.ber_at(v).unwrap();
            let scale = c.energy_scale_at(v).unwrap();
            assert!(ber >= prev_ber - 1e-15, "BER fell as voltage dropped at {v}");
            assert!(scale >= prev_scale - 1e-12, "scale fell as voltage dropped at {v}");
            prev_ber = ber;
            prev_scale = scale;
            v -= 0.001;
        }
    }

    #[test]
    fn rejects_invalid_curves() {
        let p = |v_norm, ber, energy_scale| CurvePoint {
            v_norm,
            ber,
            energy_scale,
        };
        assert!(VoltageCurve::new(vec![]).is_err());
        // duplicate voltage
        assert!(VoltageCurve::new(vec![p(0.8, 1e-4, 2.0), p(0.8, 1e-3, 2.1)]).is_err());
        // BER decreasing as voltage drops
        assert!(VoltageCurve::new(vec![p(0.9, 1e-3, 2.0), p(0.8, 1e-4, 2.1)]).is_err());
        // energy scale below 1
        assert!(VoltageCurve::new(vec![p(0.9, 1e-4, 0.9)]).is_err());
        // nonzero BER at v >= 1
        assert!(VoltageCurve::new(vec![p(1.0, 1e-4, 1.0)]).is_err());
        // non-positive voltage knot
        assert!(VoltageCurve::new(vec![p(0.0, 0.0, 1.0)]).is_err());
        // BER outside [0,1]
        assert!(VoltageCurve::new(vec![p(0.9, 1.5, 2.0)]).is_err());
    }

    #[test]
    fn rejects_non_positive_query_voltage() {
        let c = VoltageCurve::bundled();
        assert!(c.ber_at(0.0).is_err());
        assert!(c.ber_at(-1.0).is_err());
        assert!(c.energy_scale_at(f64::NAN).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = VoltageCurve::bundled();
        let text = c.to_csv_string();
        let back = VoltageCurve::from_csv_str(&text).unwrap();
        assert_eq!(back.points(), c.points());
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(VoltageCurve::from_csv_str("").is_err());
        assert!(VoltageCurve::from_csv_str("a,b,c\n1,2,3\n").is_err());
        assert!(VoltageCurve::from_csv_str("v_norm,ber,energy_scale\n0.9,x,2\n").is_err());
        assert!(VoltageCurve::from_csv_str("v_norm,ber,energy_scale\n0.9,0.1\n").is_err());
    }

    #[test]
    fn csv_allows_comments_and_blank_lines() {
        let text = "# measured curve\n\nv_norm,ber,energy_scale\n# reference\n1.0,0e0,1\n0.9,1e-6,2\n";
        let c = VoltageCurve::from_csv_str(text).unwrap();
        assert_eq!(c.points().len(), 2);
        assert_eq!(c.ber_at(0.9).unwrap(), 1e-6);
    }
}
