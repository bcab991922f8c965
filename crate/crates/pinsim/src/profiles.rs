//! Odometer-style enumeration of pure assignment profiles.

use crate::error::{Error, Result};
use crate::game::AssignmentProfile;

/// Enumeration cap: exhaustive sweeps are refused above this many profiles.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Number of pure profiles `m^n`, computed without overflow.
pub fn profile_count(n_agents: usize, m_actions: usize) -> u128 {
    let mut count: u128 = 1;
    for _ in 0..n_agents {
        count = count.saturating_mul(m_actions as u128);
    }
    count
}

/// Errors unless `m^n` fits under the enumeration cap.
pub fn check_enumerable(n_agents: usize, m_actions: usize) -> Result<u128> {
    let profiles = profile_count(n_agents, m_actions);
    if profiles > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            profiles,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(profiles)
}

/// Iterator over all pure profiles of `n` agents with `m` actions each,
/// in lexicographic order (last agent varies fastest).
pub struct ProfileIter {
    current: Vec<usize>,
    m: usize,
    done: bool,
}

impl ProfileIter {
    pub fn new(n_agents: usize, m_actions: usize) -> Self {
        // Zero agents still admit exactly one (empty) profile.
        Self {
            current: vec![0; n_agents],
            m: m_actions,
            done: m_actions == 0 && n_agents > 0,
        }
    }
}

impl Iterator for ProfileIter {
    type Item = AssignmentProfile;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = AssignmentProfile::new(self.current.clone());
        // Advance the odometer from the last position.
        let mut i = self.current.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.current[i] += 1;
            if self.current[i] < self.m {
                break;
            }
            self.current[i] = 0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_profiles_in_order() {
        let all: Vec<_> = ProfileIter::new(2, 3).map(|p| p.cpu_of().to_vec()).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[8], vec![2, 2]);
    }

    #[test]
    fn count_matches_iterator() {
        assert_eq!(profile_count(4, 3), 81);
        assert_eq!(ProfileIter::new(4, 3).count(), 81);
        // The empty product: one profile over zero agents.
        assert_eq!(profile_count(0, 3), 1);
        assert_eq!(ProfileIter::new(0, 3).count(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(check_enumerable(4, 3).is_ok());
        assert!(matches!(
            check_enumerable(30, 10),
            Err(Error::TooLarge { .. })
        ));
    }
}
