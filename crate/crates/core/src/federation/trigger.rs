/// Earliest round at which clustering may start.
pub const TRIGGER_FLOOR: usize = 3;
/// Fraction of the round budget after which clustering is forced.
pub const TRIGGER_CEILING: f64 = 0.8;
pub const DEFAULT_TRIGGER_THRESHOLD: f64 = 0.06;

/// Whether to start clustering after round `r`, given accuracies
/// `history = [A(1), .., A(r)]`.
///
/// Fires once `r >= 3` and either some consecutive improvement
/// `A(r') - A(r'-1)` for `r'` in `3..=r` fell below `threshold`, or `r` has
/// reached 80% of `rounds`.
pub fn should_trigger(history: &[f64], r: usize, rounds: usize, threshold: f64) -> bool {
    if r < TRIGGER_FLOOR || history.len() < r {
        return false;
    }
    if r as f64 >= TRIGGER_CEILING * rounds as f64 {
        return true;
    }
    let min_gain = (TRIGGER_FLOOR..=r)
        .map(|i| history[i - 1] - history[i - 2])
        .fold(f64::INFINITY, f64::min);
    min_gain < threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_when_gain_flattens() {
        let a = [0.1, 0.5, 0.7, 0.75];
        assert!(!should_trigger(&a, 3, 10, 0.06));
        assert!(should_trigger(&a, 4, 10, 0.06));
    }

    #[test]
    fn ceiling_forces_trigger() {
        let a = [0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5];
        assert!(!should_trigger(&a, 7, 10, 0.06));
        assert!(should_trigger(&a, 8, 10, 0.06));
        assert!(should_trigger(&[0.5; 8], 8, 10, 0.06));
    }

    #[test]
    fn floor_blocks_early_rounds() {
        assert!(!should_trigger(&[0.0, 0.0], 2, 4, 0.06));
        assert!(!should_trigger(&[0.9], 1, 2, 0.06));
    }

    #[test]
    fn a_drop_counts_as_small_gain() {
        assert!(should_trigger(&[0.1, 0.9, 0.5], 3, 100, 0.06));
    }
}
