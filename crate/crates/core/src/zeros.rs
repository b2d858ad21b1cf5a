//! Round pipelining.
//!
//! A round splits into data generation (sensing) and data consumption
//! (downlink → training → uplink). Serially, round `r` generates in CR `2r−1`
//! and consumes in CR `2r`. Overlapped, round `r` generates in CR `r` while
//! round `r−1` consumes in the same CR, so `R` rounds need `R+1` CRs instead
//! of `2R`. Within an overlapped CR both phases share the full slot range and
//! contend through pool capacity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::urp::{Claim, Process};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Serial,
    Zeros,
}

impl std::str::FromStr for ScheduleMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "serial" => Ok(Self::Serial),
            "zeros" => Ok(Self::Zeros),
            other => Err(format!("unknown schedule mode `{other}` (expected serial or zeros)")),
        }
    }
}

/// A slot range inside one communication round (1-based CR index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub cr: usize,
    pub slot_start: usize,
    pub slot_end: usize,
}

impl Window {
    fn contains<T>(&self, c: &Claim<T>) -> bool {
        c.cr_index == self.cr && c.slot_start >= self.slot_start && c.slot_end <= self.slot_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// 1-based round index.
    pub gr: usize,
    pub gen: Window,
    pub cons: Window,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaiRoundSchedule {
    pub num_rounds: usize,
    pub cr_length: usize,
    pub mode: ScheduleMode,
    pub rounds: Vec<RoundPlan>,
}

pub fn plan_pipeline(num_rounds: usize, cr_length: usize, mode: ScheduleMode) -> Result<GaiRoundSchedule> {
    if num_rounds == 0 {
        return Err(Error::Config("at least one round is required".into()));
    }
    if cr_length < 2 {
        return Err(Error::Config(format!("cr_length must be >= 2, got {cr_length}")));
    }
    let whole = |cr| Window {
        cr,
        slot_start: 0,
        slot_end: cr_length,
    };
    let rounds = (1..=num_rounds)
        .map(|gr| {
            let (g, c) = match mode {
                ScheduleMode::Serial => (2 * gr - 1, 2 * gr),
                ScheduleMode::Zeros => (gr, gr + 1),
            };
            RoundPlan {
                gr,
                gen: whole(g),
                cons: whole(c),
            }
        })
        .collect();
    Ok(GaiRoundSchedule {
        num_rounds,
        cr_length,
        mode,
        rounds,
    })
}

impl GaiRoundSchedule {
    pub fn total_crs(&self) -> usize {
        match self.mode {
            ScheduleMode::Serial => 2 * self.num_rounds,
            ScheduleMode::Zeros => self.num_rounds + 1,
        }
    }

    /// Total length in slots.
    pub fn makespan(&self) -> usize {
        self.total_crs() * self.cr_length
    }

    pub fn round(&self, gr: usize) -> Option<&RoundPlan> {
        gr.checked_sub(1).and_then(|i| self.rounds.get(i))
    }

    /// Rounds with any phase in communication round `cr`.
    pub fn rounds_in_cr(&self, cr: usize) -> Vec<usize> {
        self.rounds
            .iter()
            .filter(|r| r.gen.cr == cr || r.cons.cr == cr)
            .map(|r| r.gr)
            .collect()
    }

    fn window_for(&self, gr: usize, process: Process) -> Option<Window> {
        self.round(gr).map(|r| match process {
            Process::Sens => r.gen,
            _ => r.cons,
        })
    }

    fn global_slot(&self, cr: usize, slot: usize) -> usize {
        (cr.saturating_sub(1)) * self.cr_length + slot
    }
}

pub fn makespan(schedule: &GaiRoundSchedule) -> usize {
    schedule.makespan()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// `later` starts before `earlier` has finished.
    Order {
        earlier: Process,
        later: Process,
    },
    /// A claim lies outside its scheduled window.
    Window {
        process: Process,
    },
    UnknownRound,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CstcViolation {
    pub client_id: usize,
    pub gr: usize,
    pub kind: ViolationKind,
    /// Global slot indices involved: for ordering violations the last slot of
    /// the earlier process and the first slot of the later one.
    pub slots: (usize, usize),
}

/// Checks the serial timing of every round in `claims`.
///
/// Sensing must end strictly before the downlink starts. Downlink, training
/// and uplink may hand over inside a slot: a process may begin in the slot
/// where its predecessor finishes, but never earlier.
pub fn validate_cstc<T: Scalar>(schedule: &GaiRoundSchedule, claims: &[Claim<T>]) -> Vec<CstcViolation> {
    let mut out = Vec::new();
    // (client, gr) -> process -> (first global slot, last global slot)
    let mut spans: BTreeMap<(usize, usize), BTreeMap<Process, (usize, usize)>> = BTreeMap::new();
    for c in claims {
        let Some(window) = schedule.window_for(c.gr_index, c.process) else {
            out.push(CstcViolation {
                client_id: c.client_id,
                gr: c.gr_index,
                kind: ViolationKind::UnknownRound,
                slots: (c.slot_start, c.slot_end),
            });
            continue;
        };
        let first = schedule.global_slot(c.cr_index, c.slot_start);
        let last = schedule.global_slot(c.cr_index, c.slot_end.saturating_sub(1));
        if !window.contains(c) {
            out.push(CstcViolation {
                client_id: c.client_id,
                gr: c.gr_index,
                kind: ViolationKind::Window { process: c.process },
                slots: (first, last),
            });
        }
        let e = spans
            .entry((c.client_id, c.gr_index))
            .or_default()
            .entry(c.process)
            .or_insert((first, last));
        e.0 = e.0.min(first);
        e.1 = e.1.max(last);
    }

    for (&(client_id, gr), procs) in &spans {
        let mut check = |earlier: Process, later: Process, strict: bool| {
            if let (Some(a), Some(b)) = (procs.get(&earlier), procs.get(&later)) {
                let ok = if strict { a.1 < b.0 } else { a.1 <= b.0 };
                if !ok {
                    out.push(CstcViolation {
                        client_id,
                        gr,
                        kind: ViolationKind::Order { earlier, later },
                        slots: (a.1, b.0),
                    });
                }
            }
        };
        check(Process::Sens, Process::CommDl, true);
        check(Process::CommDl, Process::Comp, false);
        check(Process::Comp, Process::CommUl, false);
        check(Process::CommDl, Process::CommUl, false);
    }
    out
}
