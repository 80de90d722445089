use crate::error::{Error, Result};

/// Generalised advantage estimation over one step sequence. A `done` step
/// ends its episode (next value 0); the step after the last one is valued at
/// `bootstrap`, which callers set to 0 when the sequence ends in a terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Contract(format!(
            "gae: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_value = 0.0;
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn telescoping_sums() {
        let (a, r) = compute_gae(&[1.0; 3], &[0.0; 3], &[false, false, true], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![3.0, 2.0, 1.0]);
        assert_eq!(r, a);
    }

    #[test]
    fn zero_rewards_zero_advantages() {
        let (a, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95).unwrap();
        assert!(a.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn myopic_discount() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (a, _) = compute_gae(&r, &v, &[false; 3], 7.0, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] - v[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn episode_boundaries_cut_the_recursion() {
        let (a, _) = compute_gae(&[1.0, 1.0, 1.0, 1.0], &[0.0; 4], &[false, true, false, true], 0.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(a, vec![2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn bootstrap_values_truncated_tail() {
        let (a, _) = compute_gae(&[0.0], &[0.0], &[false], 5.0, 0.5, 1.0).unwrap();
        assert_eq!(a, vec![2.5]);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[0.0], &[], &[false], 0.0, 0.9, 0.9).is_err());
    }
}
