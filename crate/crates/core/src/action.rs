//! The fixed 14-action interface shared by the expert, the simulator, and all policies.

use crate::error::{Error, Result};
use core::fmt;

/// Discrete robot action. Discriminants are the on-disk action ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u32", into = "u32"))]
#[repr(u8)]
pub enum ActionId {
    BodyForward = 0,
    BodyLeft = 1,
    BodyRight = 2,
    BodyBackward = 3,
    BodyTurnLeft = 4,
    BodyTurnRight = 5,
    HandForward = 6,
    HandBackward = 7,
    HandLeft = 8,
    HandRight = 9,
    HandUp = 10,
    HandDown = 11,
    HandGrasp = 12,
    HandRelease = 13,
}

impl ActionId {
    pub const COUNT: usize = 14;

    pub const ALL: [ActionId; 14] = [
        ActionId::BodyForward,
        ActionId::BodyLeft,
        ActionId::BodyRight,
        ActionId::BodyBackward,
        ActionId::BodyTurnLeft,
        ActionId::BodyTurnRight,
        ActionId::HandForward,
        ActionId::HandBackward,
        ActionId::HandLeft,
        ActionId::HandRight,
        ActionId::HandUp,
        ActionId::HandDown,
        ActionId::HandGrasp,
        ActionId::HandRelease,
    ];

    pub fn from_index(id: u32) -> Result<Self> {
        Self::ALL.get(id as usize).copied().ok_or(Error::InvalidAction(id))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionId::BodyForward => "body-move-forward",
            ActionId::BodyLeft => "body-move-left",
            ActionId::BodyRight => "body-move-right",
            ActionId::BodyBackward => "body-move-backward",
            ActionId::BodyTurnLeft => "body-turn-left",
            ActionId::BodyTurnRight => "body-turn-right",
            ActionId::HandForward => "hand-move-forward",
            ActionId::HandBackward => "hand-move-backward",
            ActionId::HandLeft => "hand-move-left",
            ActionId::HandRight => "hand-move-right",
            ActionId::HandUp => "hand-move-up",
            ActionId::HandDown => "hand-move-down",
            ActionId::HandGrasp => "hand-grasp",
            ActionId::HandRelease => "hand-release",
        }
    }
}

impl TryFrom<u32> for ActionId {
    type Error = Error;

    fn try_from(id: u32) -> Result<Self> {
        Self::from_index(id)
    }
}

impl From<ActionId> for u32 {
    fn from(a: ActionId) -> u32 {
        a as u32
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
