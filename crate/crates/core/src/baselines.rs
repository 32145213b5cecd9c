//! Hand-crafted comparison policies: constant stages, triggered lockdown
//! schedules with different release speeds, and two government-style
//! schedules. Triggered policies watch the observed cumulative infection
//! count and fire at most once per episode.

use serde::{Deserialize, Serialize};

use crate::policy::StagePolicy;
use crate::sim::{Observation, Stage};

/// Number of infected persons (observed, cumulative) that fires a trigger.
pub const TRIGGER_INFECTED: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Always the same stage (names `S0` .. `S4`).
    Constant(Stage),
    /// `S0-4-0`: stage 0 until triggered, stage 4 for 30 days, stage 0 after.
    TriggeredLockdown,
    /// `S0-4-0FI`: as above, then down one stage every 5 days.
    TriggeredLockdownFastRelease,
    /// `S0-4-0GI`: as above, then down one stage every 10 days.
    TriggeredLockdownGradualRelease,
    /// `ITA`: ramp up one stage every 5 days after the trigger, hold stage 4
    /// for 30 days, come down one stage every 10 days, settle at stage 2.
    RampHoldSettle,
    /// `SWE`: stage 0 for the first three days, mild stage 1 forever after.
    EarlyMildForever,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 10] = [
        BaselineKind::Constant(Stage::S0),
        BaselineKind::Constant(Stage::S1),
        BaselineKind::Constant(Stage::S2),
        BaselineKind::Constant(Stage::S3),
        BaselineKind::Constant(Stage::S4),
        BaselineKind::TriggeredLockdown,
        BaselineKind::TriggeredLockdownFastRelease,
        BaselineKind::TriggeredLockdownGradualRelease,
        BaselineKind::RampHoldSettle,
        BaselineKind::EarlyMildForever,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Constant(Stage::S0) => "S0",
            BaselineKind::Constant(Stage::S1) => "S1",
            BaselineKind::Constant(Stage::S2) => "S2",
            BaselineKind::Constant(Stage::S3) => "S3",
            BaselineKind::Constant(Stage::S4) => "S4",
            BaselineKind::TriggeredLockdown => "S0-4-0",
            BaselineKind::TriggeredLockdownFastRelease => "S0-4-0FI",
            BaselineKind::TriggeredLockdownGradualRelease => "S0-4-0GI",
            BaselineKind::RampHoldSettle => "ITA",
            BaselineKind::EarlyMildForever => "SWE",
        }
    }

    pub fn from_name(name: &str) -> Option<BaselineKind> {
        BaselineKind::ALL.into_iter().find(|kind| kind.name() == name)
    }
}

/// A baseline with its per-episode trigger state.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    kind: BaselineKind,
    population_size: u32,
    trigger_day: Option<u32>,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, population_size: u32) -> BaselinePolicy {
        BaselinePolicy {
            kind,
            population_size,
            trigger_day: None,
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    fn uses_trigger(&self) -> bool {
        matches!(
            self.kind,
            BaselineKind::TriggeredLockdown
                | BaselineKind::TriggeredLockdownFastRelease
                | BaselineKind::TriggeredLockdownGradualRelease
                | BaselineKind::RampHoldSettle
        )
    }
}

impl StagePolicy for BaselinePolicy {
    fn reset(&mut self) {
        self.trigger_day = None;
    }

    fn act(&mut self, day: u32, obs: &Observation) -> Stage {
        if self.uses_trigger() && self.trigger_day.is_none() {
            let observed_infected = obs.i_g * f64::from(self.population_size);
            if observed_infected >= TRIGGER_INFECTED - 1e-6 {
                self.trigger_day = Some(day);
            }
        }
        match self.kind {
            BaselineKind::Constant(stage) => stage,
            BaselineKind::EarlyMildForever => {
                if day <= 2 {
                    Stage::S0
                } else {
                    Stage::S1
                }
            }
            BaselineKind::TriggeredLockdown => match self.trigger_day {
                None => Stage::S0,
                Some(t) if day - t < 30 => Stage::S4,
                Some(_) => Stage::S0,
            },
            BaselineKind::TriggeredLockdownFastRelease => {
                step_down_after_lockdown(self.trigger_day, day, 5, 0)
            }
            BaselineKind::TriggeredLockdownGradualRelease => {
                step_down_after_lockdown(self.trigger_day, day, 10, 0)
            }
            BaselineKind::RampHoldSettle => match self.trigger_day {
                None => Stage::S0,
                Some(t) => {
                    let offset = day - t;
                    if offset < 15 {
                        // one stage up every 5 days, starting at stage 1
                        stage_at_level(1 + offset / 5)
                    } else if offset < 45 {
                        Stage::S4
                    } else {
                        // one stage down every 10 days, settling at stage 2
                        let steps = (offset - 45) / 10 + 1;
                        stage_at_level(4u32.saturating_sub(steps).max(2))
                    }
                }
            },
        }
    }
}

fn stage_at_level(level: u32) -> Stage {
    Stage::from_level(level as u8).expect("schedule levels stay within 0..=4")
}

/// Stage 0 before the trigger, stage 4 for 30 days, then one stage down
/// every `step_days` until reaching `floor`.
fn step_down_after_lockdown(trigger_day: Option<u32>, day: u32, step_days: u32, floor: u32) -> Stage {
    match trigger_day {
        None => Stage::S0,
        Some(t) => {
            let offset = day - t;
            if offset < 30 {
                Stage::S4
            } else {
                let steps = (offset - 30) / step_days + 1;
                stage_at_level(4u32.saturating_sub(steps).max(floor))
            }
        }
    }
}
