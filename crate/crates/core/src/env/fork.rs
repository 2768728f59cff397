//! A five-cell junction world whose correct exit depends on where the robot entered.
//!
//! Both entry corridors lead to one junction cell with the same observation; the
//! episode succeeds only at the exit on the entry side. Each side is traversed
//! with its own lateral action, so the action that leaves a cell also enters the
//! next one. Any policy that looks at the current observation alone must guess
//! at the junction.

use super::{mix, Environment};
use crate::action::ActionId;
use crate::error::Result;
use crate::feature::FeatureVector;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Entry(Side, u8),
    Junction,
    Exit(Side, u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForkState {
    pub origin: Side,
    pub cell: Cell,
    pub step_count: u32,
    pub episode_seed: u64,
}

/// Corridor length on each side of the junction.
const CORRIDOR: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ForkEnv {
    pub noise_scale: f64,
}

impl Default for ForkEnv {
    fn default() -> Self {
        Self { noise_scale: 0.02 }
    }
}

impl ForkEnv {
    fn base_feature(cell: Cell) -> [f64; 4] {
        let s = |side: Side| if side == Side::Left { 1.0 } else { -1.0 };
        match cell {
            Cell::Entry(side, i) => [1.0, s(side), -1.0 + 0.5 * i as f64, 0.0],
            Cell::Junction => [1.0, 0.0, 0.0, 0.0],
            Cell::Exit(side, i) => [1.0, 0.0, 0.0, s(side) * (0.5 + 0.5 * i as f64)],
        }
    }

    pub fn start(origin: Side, episode_seed: u64) -> ForkState {
        ForkState {
            origin,
            cell: Cell::Entry(origin, 0),
            step_count: 0,
            episode_seed,
        }
    }
}

impl Environment for ForkEnv {
    type State = ForkState;

    fn task_tag(&self) -> &str {
        "fork"
    }

    fn reset(&self, seed: u64) -> Result<ForkState> {
        let origin = if mix(seed, 0xf0f0) & 1 == 0 {
            Side::Left
        } else {
            Side::Right
        };
        Ok(Self::start(origin, seed))
    }

    fn step(&self, s: &ForkState, a: ActionId) -> ForkState {
        let moved = match a {
            ActionId::BodyLeft => Some(Side::Left),
            ActionId::BodyRight => Some(Side::Right),
            _ => None,
        };
        let cell = match (s.cell, moved) {
            (Cell::Entry(side, i), Some(m)) if m == side && i + 1 < CORRIDOR => Cell::Entry(side, i + 1),
            (Cell::Entry(side, _), Some(m)) if m == side => Cell::Junction,
            (Cell::Junction, Some(m)) => Cell::Exit(m, 0),
            (Cell::Exit(side, i), Some(m)) if m == side && i + 1 < CORRIDOR => Cell::Exit(side, i + 1),
            (c, _) => c,
        };
        ForkState {
            cell,
            step_count: s.step_count + 1,
            ..*s
        }
    }

    fn observe(&self, s: &ForkState) -> FeatureVector {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(s.episode_seed, s.step_count as u64));
        let v: Vec<f64> = Self::base_feature(s.cell)
            .iter()
            .map(|x| x + rng.gen_range(-self.noise_scale..=self.noise_scale))
            .collect();
        FeatureVector::new(v).expect("fork features are finite and non-zero")
    }

    fn success(&self, s: &ForkState) -> bool {
        s.cell == Cell::Exit(s.origin, CORRIDOR - 1)
    }

    fn expert(&self, s: &ForkState) -> Result<Option<ActionId>> {
        Ok(match s.cell {
            _ if self.success(s) => None,
            _ if s.origin == Side::Left => Some(ActionId::BodyLeft),
            _ => Some(ActionId::BodyRight),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{expert_rollout, gen_demos};

    #[test]
    fn expert_solves_both_sides() {
        let env = ForkEnv::default();
        for seed in 0..20 {
            let pairs = expert_rollout(&env, seed, 20).unwrap();
            assert_eq!(pairs.len(), 2 * CORRIDOR as usize);
        }
        let ds = gen_demos(&env, 6, 1, 20).unwrap();
        assert_eq!(ds.trajectories().len(), 6);
    }

    #[test]
    fn junction_hides_the_origin() {
        let env = ForkEnv { noise_scale: 0.0 };
        let mut l = ForkEnv::start(Side::Left, 0);
        let mut r = ForkEnv::start(Side::Right, 0);
        for _ in 0..CORRIDOR {
            l = env.step(&l, ActionId::BodyLeft);
            r = env.step(&r, ActionId::BodyRight);
        }
        assert_eq!(l.cell, Cell::Junction);
        assert_eq!(env.observe(&l), env.observe(&r));
        let wrong = env.step(&l, ActionId::BodyRight);
        let wrong = env.step(&wrong, ActionId::BodyRight);
        assert!(!env.success(&wrong));
        assert_eq!(env.step(&wrong, ActionId::BodyLeft).cell, wrong.cell);
    }
}
