//! Fixed intervention schedules used as non-learned baselines.

/// Intervene every tenth step (t = 10, 20, ...), at `level` otherwise 0.
pub fn rule_s1(t: usize, level: f64) -> f64 {
    if t >= 1 && t % 10 == 0 {
        level
    } else {
        0.0
    }
}

/// Intervene on each of the first twenty steps, at `level` otherwise 0.
pub fn rule_s2(t: usize, level: f64) -> f64 {
    if (1..=20).contains(&t) {
        level
    } else {
        0.0
    }
}

/// Intervene only when the agent is about to pick a non-target arm.
///
/// `next_action` is the action the agent will take this step (available
/// because arm selection does not depend on the current step's
/// intervention).
pub fn rule_rb(next_action: usize, target_arm: usize, level: f64) -> f64 {
    if next_action == target_arm {
        0.0
    } else {
        level
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s1_fires_on_multiples_of_ten() {
        assert_eq!(rule_s1(10, 0.5), 0.5);
        assert_eq!(rule_s1(11, 0.5), 0.0);
        assert_eq!(rule_s1(1, 0.5), 0.0);
        assert_eq!(rule_s1(200, 1.0), 1.0);
    }

    #[test]
    fn s2_fires_on_first_twenty() {
        assert_eq!(rule_s2(1, 0.5), 0.5);
        assert_eq!(rule_s2(20, 0.5), 0.5);
        assert_eq!(rule_s2(21, 0.5), 0.0);
        assert_eq!(rule_s2(0, 0.5), 0.0);
    }

    #[test]
    fn schedules_have_equal_budgets_over_two_hundred_steps() {
        let level = 0.5;
        let horizon = 200;
        let total = |f: &dyn Fn(usize, f64) -> f64| -> f64 {
            (1..=horizon).map(|t| f(t, level).abs()).sum()
        };
        let s1 = total(&rule_s1);
        let s2 = total(&rule_s2);
        assert_eq!(s1, 20.0 * level);
        assert_eq!(s1, s2);
        // Both fire exactly 20 times.
        assert_eq!((1..=horizon).filter(|&t| rule_s1(t, level) != 0.0).count(), 20);
        assert_eq!((1..=horizon).filter(|&t| rule_s2(t, level) != 0.0).count(), 20);
    }

    #[test]
    fn rb_fires_only_off_target() {
        assert_eq!(rule_rb(2, 2, 1.0), 0.0);
        assert_eq!(rule_rb(3, 2, 1.0), 1.0);
        assert_eq!(rule_rb(0, 2, 0.5), 0.5);
    }
}
