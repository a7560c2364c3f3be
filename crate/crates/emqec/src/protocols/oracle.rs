//! Closed-form success rates and fidelities of the elementary and optical
//! protocols under noiseless hardware, used as the oracle for the exact
//! branch simulation.

use super::{ProtocolError, ProtocolId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue {
    pub success: f64,
    /// None when the success rate vanishes and no output state exists.
    pub fidelity: Option<f64>,
}

/// Evaluate the noiseless closed forms. Memory-distillation rows are
/// simulation-defined and rejected here.
pub fn table_i_oracle(
    id: ProtocolId,
    alpha: f64,
    pnr: bool,
) -> Result<OracleValue, ProtocolError> {
    let a = alpha;
    let value = match (id, pnr) {
        (ProtocolId::BellSc, true) => ov(2.0 * a * (1.0 - a), 1.0),
        (ProtocolId::BellSc, false) => ov(
            a * (2.0 - a),
            (2.0 * (1.0 - a) / (2.0 - a)).sqrt(),
        ),
        (ProtocolId::BellDc, _) => ov(2.0 * a * (1.0 - a), 1.0),
        (ProtocolId::W, true) => ov(4.0 * a * (1.0 - a).powi(3), 1.0),
        (ProtocolId::W, false) => {
            let poly = 32.0 - 72.0 * a + 60.0 * a * a - 17.0 * a * a * a;
            ov(
                a * poly / 8.0,
                4.0 * (2.0 * (1.0 - a).powi(3) / poly).sqrt(),
            )
        }
        (ProtocolId::RawGhz, true) => ov(3.0 * a * a * (1.0 - a) * (1.0 - a), 1.0),
        (ProtocolId::RawGhz, false) => {
            let poly = 5.0 * a * a - 12.0 * a + 8.0;
            ov(
                3.0 * a * a * poly / 8.0,
                2.0 * 2.0f64.sqrt() * (1.0 - a) / poly.sqrt(),
            )
        }
        (ProtocolId::DcGhz, _) => ov(3.0 * a * a * (1.0 - a) * (1.0 - a), 1.0),
        (ProtocolId::DcW, true) => ov(2.0 * a * (1.0 - a).powi(3), 1.0),
        (ProtocolId::DcW, false) => {
            let denom = 1152.0 - 2288.0 * a + 1552.0 * a * a - 377.0 * a * a * a;
            let num = 16.0 - 48.0 * a + 54.0 * a * a - 22.0 * a * a * a;
            ov(a * denom / 1024.0, 8.0 * (num / denom).sqrt())
        }
        _ => return Err(ProtocolError::NoClosedForm(id.name().to_string())),
    };
    Ok(value)
}

fn ov(success: f64, fidelity: f64) -> OracleValue {
    if success <= 0.0 {
        OracleValue {
            success: 0.0,
            fidelity: None,
        }
    } else {
        OracleValue {
            success,
            fidelity: Some(fidelity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spot_values() {
        let v = table_i_oracle(ProtocolId::RawGhz, 0.5, true).unwrap();
        assert_abs_diff_eq!(v.success, 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(v.fidelity.unwrap(), 1.0, epsilon = 1e-15);

        let v = table_i_oracle(ProtocolId::W, 0.25, true).unwrap();
        assert_abs_diff_eq!(v.success, 4.0 * 0.25 * 0.75f64.powi(3), epsilon = 1e-15);

        let v = table_i_oracle(ProtocolId::BellSc, 0.0, false).unwrap();
        assert_eq!(v.success, 0.0);
        assert!(v.fidelity.is_none());
    }

    #[test]
    fn memory_rows_rejected() {
        assert!(matches!(
            table_i_oracle(ProtocolId::DistilWGhz, 0.1, true),
            Err(ProtocolError::NoClosedForm(_))
        ));
    }

    #[test]
    fn raw_ghz_non_pnr_small_alpha_limit() {
        let v = table_i_oracle(ProtocolId::RawGhz, 1e-9, false).unwrap();
        assert_abs_diff_eq!(v.fidelity.unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn fidelity_threshold_alpha_for_raw_ghz() {
        // noiseless raw GHZ reaches fidelity 0.98 near alpha = 0.0762
        let v = table_i_oracle(ProtocolId::RawGhz, 0.0762, false).unwrap();
        assert_abs_diff_eq!(v.fidelity.unwrap(), 0.98, epsilon = 5e-4);
    }
}
