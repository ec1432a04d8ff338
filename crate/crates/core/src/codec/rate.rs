//! Frame-level proportional rate control.

use super::{MAX_QP, MIN_QP};

/// Gain on the log2 bit ratio.
pub const RATE_GAIN: f64 = 2.0;
/// Largest QP change per frame.
pub const MAX_QP_STEP: i32 = 3;

/// `qp + clamp(round(2 * log2(actual / target)), -3, 3)`, clamped to 1..=51.
pub fn rate_control_step(target_bits_per_frame: f64, actual_bits_last_frame: f64, current_qp: u8) -> u8 {
    let ratio = actual_bits_last_frame.max(1.0) / target_bits_per_frame.max(1.0);
    let delta = (RATE_GAIN * ratio.log2())
        .round()
        .clamp(-f64::from(MAX_QP_STEP), f64::from(MAX_QP_STEP)) as i32;
    (i32::from(current_qp) + delta).clamp(i32::from(MIN_QP), i32::from(MAX_QP)) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_target_keeps_qp() {
        assert_eq!(rate_control_step(1000.0, 1000.0, 30), 30);
    }

    #[test]
    fn overshoot_raises_qp_by_at_most_three() {
        assert_eq!(rate_control_step(1000.0, 4000.0, 30), 33);
        assert_eq!(rate_control_step(1000.0, 1500.0, 30), 31);
        assert_eq!(rate_control_step(1000.0, 100.0, 30), 27);
    }

    #[test]
    fn clamped_to_qp_range() {
        assert_eq!(rate_control_step(1000.0, 1e6, 50), 51);
        assert_eq!(rate_control_step(1000.0, 1.0, 2), 1);
    }
}
