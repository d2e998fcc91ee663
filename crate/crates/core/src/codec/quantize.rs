//! Uniform residual quantization with a literal escape.

use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Largest `|code|` before a value is stored verbatim.
pub const DEFAULT_CODE_CAP: i32 = 1 << 15;

/// Code value marking "read the next literal".
pub const LITERAL: i32 = i32::MIN;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantized {
    /// Quantization index and the reconstruction it decodes to.
    Code(i32, f64),
    /// Stored exactly.
    Literal(f64),
}

impl Quantized {
    pub fn value(self) -> f64 {
        match self {
            Quantized::Code(_, r) | Quantized::Literal(r) => r,
        }
    }
}

/// Decoder side of [`quantize`].
#[inline]
pub fn dequantize(pred: f64, code: i32, eb: f64) -> f64 {
    pred + 2.0 * eb * f64::from(code)
}

/// Quantizes `actual - pred` into bins of width `2 eb`, rounding half away
/// from zero. Falls back to a literal when the code exceeds `cap` or when
/// rounding would leave the reconstruction outside the bound.
#[inline]
pub fn quantize(pred: f64, actual: f64, eb: f64, cap: i32) -> Result<Quantized> {
    if !(pred.is_finite() && actual.is_finite()) {
        bail!(Data, "cannot quantize non-finite value (pred {pred}, actual {actual})");
    }
    if !(eb > 0.0) {
        bail!(Parameter, "error bound must be positive, got {eb}");
    }
    let q = libm::round((actual - pred) / (2.0 * eb));
    if !(q.abs() <= f64::from(cap)) {
        return Ok(Quantized::Literal(actual));
    }
    let code = q as i32;
    let recon = dequantize(pred, code, eb);
    if recon.is_finite() && (recon - actual).abs() <= eb {
        Ok(Quantized::Code(code, recon))
    } else {
        Ok(Quantized::Literal(actual))
    }
}

/// Codes in traversal order plus the verbatim values the literal markers
/// refer to, in the same order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantizedStream {
    pub codes: Vec<i32>,
    pub literals: Vec<f64>,
    pub code_cap: i32,
}

impl QuantizedStream {
    pub fn new(code_cap: i32) -> Self {
        Self {
            codes: Vec::new(),
            literals: Vec::new(),
            code_cap,
        }
    }

    pub fn with_capacity(code_cap: i32, n: usize) -> Self {
        Self {
            codes: Vec::with_capacity(n),
            literals: Vec::new(),
            code_cap,
        }
    }

    /// Quantizes and records one value, returning its reconstruction.
    #[inline]
    pub fn push(&mut self, pred: f64, actual: f64, eb: f64) -> Result<f64> {
        match quantize(pred, actual, eb, self.code_cap)? {
            Quantized::Code(c, r) => {
                self.codes.push(c);
                Ok(r)
            }
            Quantized::Literal(v) => {
                self.codes.push(LITERAL);
                self.literals.push(v);
                Ok(v)
            }
        }
    }

    /// Sequential reader used by decoders.
    pub fn reader(&self) -> StreamReader<'_> {
        StreamReader {
            stream: self,
            code: 0,
            literal: 0,
        }
    }
}

pub struct StreamReader<'a> {
    stream: &'a QuantizedStream,
    code: usize,
    literal: usize,
}

impl StreamReader<'_> {
    #[inline]
    pub fn next(&mut self, pred: f64, eb: f64) -> Result<f64> {
        let Some(&code) = self.stream.codes.get(self.code) else {
            bail!(Format, "code stream ended early");
        };
        self.code += 1;
        if code == LITERAL {
            let Some(&v) = self.stream.literals.get(self.literal) else {
                bail!(Format, "literal stream ended early");
            };
            self.literal += 1;
            Ok(v)
        } else {
            Ok(dequantize(pred, code, eb))
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.code != self.stream.codes.len() || self.literal != self.stream.literals.len() {
            bail!(Format, "trailing codes or literals in stream");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_prediction() {
        assert_eq!(quantize(1.5, 1.5, 0.1, DEFAULT_CODE_CAP).unwrap(), Quantized::Code(0, 1.5));
    }

    #[test]
    fn worked_example() {
        // 0.37 / 0.2 = 1.85 rounds to 2; reconstruction 0.4.
        let Quantized::Code(code, r) = quantize(0.0, 0.37, 0.1, DEFAULT_CODE_CAP).unwrap() else {
            panic!("expected a code");
        };
        assert_eq!(code, 2);
        assert!((r - 0.4).abs() < 1e-15);
        assert!(((r - 0.37).abs() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        assert!(matches!(quantize(0.0, 0.5, 0.5, 10).unwrap(), Quantized::Code(1, _)));
        assert!(matches!(quantize(0.0, -0.5, 0.5, 10).unwrap(), Quantized::Code(-1, _)));
    }

    #[test]
    fn huge_residual_is_literal() {
        assert_eq!(quantize(0.0, 1e30, 1e-3, DEFAULT_CODE_CAP).unwrap(), Quantized::Literal(1e30));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(quantize(f64::NAN, 0.0, 1.0, 10).is_err());
        assert!(quantize(0.0, 1.0, 0.0, 10).is_err());
    }

    #[test]
    fn literal_marker_count_matches() {
        let mut s = QuantizedStream::new(4);
        for (p, a) in [(0.0, 0.1), (0.0, 100.0), (1.0, 1.2), (0.0, -50.0)] {
            s.push(p, a, 0.1).unwrap();
        }
        assert_eq!(s.codes.iter().filter(|&&c| c == LITERAL).count(), s.literals.len());
        assert_eq!(s.literals, vec![100.0, -50.0]);
    }

    proptest! {
        #[test]
        fn bound_always_holds(pred in -1e6f64..1e6, actual in -1e6f64..1e6, eb in 1e-9f64..10.0) {
            let q = quantize(pred, actual, eb, DEFAULT_CODE_CAP).unwrap();
            prop_assert!((q.value() - actual).abs() <= eb);
            if let Quantized::Code(c, r) = q {
                prop_assert_eq!(r, dequantize(pred, c, eb));
            }
        }
    }
}
