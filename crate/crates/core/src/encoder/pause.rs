use serde::{Deserialize, Serialize};

use super::EncoderError;

/// Boundaries for the short/medium/long pause bins and the regression
/// normaliser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningScheme {
    pub s_upper_ms: f64,
    pub m_upper_ms: f64,
    pub noise_cutoff_ms: f64,
    pub norm_divisor_ms: f64,
}

impl Default for BinningScheme {
    fn default() -> Self {
        BinningScheme {
            s_upper_ms: 60.0,
            m_upper_ms: 310.0,
            noise_cutoff_ms: 10_000.0,
            norm_divisor_ms: 10_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FineBin {
    S,
    M,
    L,
}

impl FineBin {
    pub fn index(self) -> usize {
        match self {
            FineBin::S => 0,
            FineBin::M => 1,
            FineBin::L => 2,
        }
    }
}

/// Coarse presence label plus, when present, the fine bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauseBin {
    pub present: bool,
    pub fine: Option<FineBin>,
}

impl PauseBin {
    /// Coarse class index: 0 = absent, 1 = present.
    pub fn coarse_index(&self) -> usize {
        usize::from(self.present)
    }
}

impl BinningScheme {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let ok = 0.0 < self.s_upper_ms
            && self.s_upper_ms < self.m_upper_ms
            && self.m_upper_ms < self.noise_cutoff_ms
            && self.norm_divisor_ms > 0.0
            && self.noise_cutoff_ms.is_finite()
            && self.norm_divisor_ms.is_finite();
        if ok {
            Ok(())
        } else {
            Err(EncoderError::Config(format!("invalid binning scheme {self:?}")))
        }
    }

    pub fn is_noise(&self, duration_ms: f64) -> bool {
        duration_ms > self.noise_cutoff_ms
    }

    /// Tertile boundaries of the non-zero pauses: the sorted list is cut into
    /// three equal parts; S ends before the first value of the middle part and
    /// M ends at its last value. Cutoff and divisor are kept from `self`.
    pub fn from_tertiles(&self, pauses: &[f64]) -> Result<Self, EncoderError> {
        let mut nonzero: Vec<f64> = pauses
            .iter()
            .copied()
            .filter(|&p| p > 0.0 && p <= self.noise_cutoff_ms)
            .collect();
        if nonzero.len() < 3 {
            return Err(EncoderError::Config("need at least 3 non-zero pauses for tertiles".into()));
        }
        nonzero.sort_by(f64::total_cmp);
        let n = nonzero.len();
        let scheme = BinningScheme {
            s_upper_ms: nonzero[n / 3],
            m_upper_ms: nonzero[2 * n / 3 - 1].max(nonzero[n / 3]),
            ..*self
        };
        if scheme.s_upper_ms >= scheme.m_upper_ms {
            return Err(EncoderError::Config(format!(
                "degenerate tertiles {} / {}",
                scheme.s_upper_ms, scheme.m_upper_ms
            )));
        }
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Absent iff the duration is 0; otherwise S below `s_upper`, M up to and
/// including `m_upper`, L above.
pub fn bin_pause(duration_ms: f64, scheme: &BinningScheme) -> Result<PauseBin, EncoderError> {
    if !(duration_ms >= 0.0) {
        return Err(EncoderError::Pause(duration_ms));
    }
    if duration_ms == 0.0 {
        return Ok(PauseBin {
            present: false,
            fine: None,
        });
    }
    let fine = if duration_ms < scheme.s_upper_ms {
        FineBin::S
    } else if duration_ms <= scheme.m_upper_ms {
        FineBin::M
    } else {
        FineBin::L
    };
    Ok(PauseBin {
        present: true,
        fine: Some(fine),
    })
}

pub fn normalize_pause(duration_ms: f64, scheme: &BinningScheme) -> Result<f64, EncoderError> {
    if !(duration_ms >= 0.0) {
        return Err(EncoderError::Pause(duration_ms));
    }
    Ok(duration_ms / scheme.norm_divisor_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_at_boundaries() {
        let s = BinningScheme::default();
        let fine = |d: f64| bin_pause(d, &s).unwrap().fine;
        assert_eq!(bin_pause(0.0, &s).unwrap(), PauseBin { present: false, fine: None });
        assert_eq!(fine(59.0), Some(FineBin::S));
        assert_eq!(fine(60.0), Some(FineBin::M));
        assert_eq!(fine(310.0), Some(FineBin::M));
        assert_eq!(fine(311.0), Some(FineBin::L));
        assert_eq!(fine(10_000.0), Some(FineBin::L));
        assert!(bin_pause(-1.0, &s).is_err());
    }

    #[test]
    fn normalization() {
        let s = BinningScheme::default();
        assert_eq!(normalize_pause(0.0, &s).unwrap(), 0.0);
        assert_eq!(normalize_pause(10_000.0, &s).unwrap(), 1.0);
        assert!((normalize_pause(55.04, &s).unwrap() - 0.005504).abs() < 1e-15);
        assert!(normalize_pause(-0.5, &s).is_err());
    }

    #[test]
    fn tertiles_split_nonzero_pauses() {
        let pauses: Vec<f64> = [0.0, 0.0].into_iter().chain((1..=9).map(f64::from)).collect();
        let t = BinningScheme::default().from_tertiles(&pauses).unwrap();
        // 1..9 -> parts {1,2,3} {4,5,6} {7,8,9}
        assert_eq!((t.s_upper_ms, t.m_upper_ms), (4.0, 6.0));
        let bins: Vec<_> = (1..=9).map(|d| bin_pause(d as f64, &t).unwrap().fine.unwrap()).collect();
        assert_eq!(bins.iter().filter(|b| **b == FineBin::S).count(), 3);
        assert_eq!(bins.iter().filter(|b| **b == FineBin::M).count(), 3);
        assert!(BinningScheme::default().from_tertiles(&[0.0, 5.0]).is_err());
    }

    #[test]
    fn invalid_scheme_rejected() {
        let s = BinningScheme {
            s_upper_ms: 400.0,
            ..BinningScheme::default()
        };
        assert!(s.validate().is_err());
    }
}
