//! Universal resource pools.
//!
//! Each client owns one pool per communication round. A pool holds two slotted
//! grids, time × frequency lanes and time × compute lanes, and every process
//! (sensing, downlink, computing, uplink) draws on the same cells. Cells carry a
//! fixed capacity (Hz·s on frequency lanes, cycles on compute lanes) and a
//! `used` counter that always equals the in-order sum of the live claims
//! touching the cell.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sub-process a claim belongs to. Declaration order is the serial order a
/// round must respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Process {
    Sens,
    CommDl,
    Comp,
    CommUl,
}

impl Process {
    pub const ALL: [Process; 4] = [Process::Sens, Process::CommDl, Process::Comp, Process::CommUl];

    pub fn as_str(self) -> &'static str {
        match self {
            Process::Sens => "SENS",
            Process::CommDl => "COMM_DL",
            Process::Comp => "COMP",
            Process::CommUl => "COMM_UL",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridKind {
    TimeFreq,
    TimeComp,
}

/// Rounding slack tolerated on a cell before it counts as over capacity.
#[inline]
pub fn cell_slack<T: Scalar>(capacity: T) -> T {
    capacity * T::epsilon() * T::lit(16.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceGrid<T> {
    pub num_slots: usize,
    pub num_lanes: usize,
    pub cell_capacity: T,
    /// Row-major `num_slots × num_lanes`.
    pub used: Vec<T>,
}

impl<T: Scalar> ResourceGrid<T> {
    fn new(num_slots: usize, num_lanes: usize, cell_capacity: T) -> Self {
        Self {
            num_slots,
            num_lanes,
            cell_capacity,
            used: vec![T::zero(); num_slots * num_lanes],
        }
    }

    #[inline]
    fn idx(&self, slot: usize, lane: usize) -> usize {
        slot * self.num_lanes + lane
    }

    pub fn used_at(&self, slot: usize, lane: usize) -> T {
        self.used[self.idx(slot, lane)]
    }

    pub fn residual_at(&self, slot: usize, lane: usize) -> T {
        (self.cell_capacity - self.used_at(slot, lane)).max(T::zero())
    }

    pub fn total_capacity(&self) -> T {
        self.cell_capacity * T::from_usize_lossy(self.num_slots * self.num_lanes)
    }

    pub fn total_used(&self) -> T {
        self.used.iter().copied().sum()
    }

    pub fn total_residual(&self) -> T {
        (0..self.num_slots)
            .flat_map(|s| (0..self.num_lanes).map(move |l| (s, l)))
            .map(|(s, l)| self.residual_at(s, l))
            .sum()
    }

    /// True when every cell satisfies `0 <= used <= capacity` up to rounding slack.
    pub fn within_capacity(&self) -> bool {
        let limit = self.cell_capacity + cell_slack(self.cell_capacity);
        self.used.iter().all(|&u| u >= T::zero() && u <= limit)
    }

    fn clear(&mut self) {
        self.used.iter_mut().for_each(|u| *u = T::zero());
    }
}

/// A uniform rectangle of consumption on one grid (or a time-only reservation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim<T> {
    pub client_id: usize,
    pub gr_index: usize,
    /// Communication round hosting the pool this claim lives in.
    pub cr_index: usize,
    pub process: Process,
    /// `None` for visual sensing, which reserves time but no grid cells.
    pub grid: Option<GridKind>,
    pub slot_start: usize,
    pub slot_end: usize,
    pub lanes: Vec<usize>,
    pub amount_per_cell: T,
}

impl<T: Scalar> Claim<T> {
    pub fn slots(&self) -> Range<usize> {
        self.slot_start..self.slot_end
    }

    /// Total resource drawn by the claim.
    pub fn total_amount(&self) -> T {
        self.amount_per_cell * T::from_usize_lossy(self.lanes.len() * (self.slot_end - self.slot_start))
    }

    fn check_shape(&self) -> Result<()> {
        if self.slot_start >= self.slot_end {
            return Err(Error::MalformedClaim(format!(
                "empty slot range {}..{}",
                self.slot_start, self.slot_end
            )));
        }
        match (self.process, self.grid) {
            (Process::Comp, Some(GridKind::TimeComp)) => {}
            (Process::CommDl | Process::CommUl, Some(GridKind::TimeFreq)) => {}
            (Process::Sens, Some(GridKind::TimeFreq) | None) => {}
            (p, g) => {
                return Err(Error::MalformedClaim(format!(
                    "process {} cannot draw on grid {g:?}",
                    p.as_str()
                )))
            }
        }
        if !(self.amount_per_cell >= T::zero()) || !self.amount_per_cell.is_finite() {
            return Err(Error::MalformedClaim("amount must be finite and non-negative".into()));
        }
        if self.grid.is_none() && !self.lanes.is_empty() {
            return Err(Error::MalformedClaim("time-only claim lists lanes".into()));
        }
        if self.grid.is_some() && self.lanes.is_empty() {
            return Err(Error::MalformedClaim("grid claim without lanes".into()));
        }
        let mut sorted = self.lanes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.lanes.len() {
            return Err(Error::MalformedClaim("duplicate lanes".into()));
        }
        Ok(())
    }
}

/// Identity fields shared by every claim a caller emits for one process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClaimTag {
    pub client_id: usize,
    pub gr_index: usize,
    pub cr_index: usize,
    pub process: Process,
}

impl ClaimTag {
    fn claim<T>(&self, grid: Option<GridKind>, slots: Range<usize>, lanes: Vec<usize>, amount: T) -> Claim<T> {
        Claim {
            client_id: self.client_id,
            gr_index: self.gr_index,
            cr_index: self.cr_index,
            process: self.process,
            grid,
            slot_start: slots.start,
            slot_end: slots.end,
            lanes,
            amount_per_cell: amount,
        }
    }

    /// A time-only reservation (visual sensing).
    pub fn time_only<T: Scalar>(&self, slots: Range<usize>) -> Claim<T> {
        self.claim(None, slots, Vec::new(), T::zero())
    }
}

/// Pool dimensions and unit scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec<T> {
    pub num_slots: usize,
    pub freq_lanes: usize,
    pub comp_lanes: usize,
    /// Seconds.
    pub slot_duration: T,
    pub hz_per_lane: T,
    pub cycles_per_lane_slot: T,
}

impl<T: Scalar> PoolSpec<T> {
    /// Window length in seconds.
    pub fn window(&self) -> T {
        self.slot_duration * T::from_usize_lossy(self.num_slots)
    }

    /// Aggregate bandwidth of all frequency lanes, Hz.
    pub fn bandwidth(&self) -> T {
        self.hz_per_lane * T::from_usize_lossy(self.freq_lanes)
    }

    /// Aggregate compute rate of all compute lanes, cycles/s.
    pub fn compute_rate(&self) -> T {
        self.cycles_per_lane_slot * T::from_usize_lossy(self.comp_lanes) / self.slot_duration
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 || self.freq_lanes == 0 || self.comp_lanes == 0 {
            return Err(Error::Config("pool dimensions must be at least 1".into()));
        }
        for (name, v) in [
            ("slot_duration", self.slot_duration),
            ("hz_per_lane", self.hz_per_lane),
            ("cycles_per_lane_slot", self.cycles_per_lane_slot),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalResourcePool<T> {
    pub time_freq: ResourceGrid<T>,
    pub time_comp: ResourceGrid<T>,
    pub slot_duration: T,
    pub claims: Vec<Claim<T>>,
}

impl<T: Scalar> UniversalResourcePool<T> {
    pub fn new(
        num_slots: usize,
        freq_lanes: usize,
        comp_lanes: usize,
        slot_duration: T,
        hz_per_lane: T,
        cycles_per_lane_slot: T,
    ) -> Result<Self> {
        Self::from_spec(&PoolSpec {
            num_slots,
            freq_lanes,
            comp_lanes,
            slot_duration,
            hz_per_lane,
            cycles_per_lane_slot,
        })
    }

    pub fn from_spec(spec: &PoolSpec<T>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            time_freq: ResourceGrid::new(spec.num_slots, spec.freq_lanes, spec.hz_per_lane * spec.slot_duration),
            time_comp: ResourceGrid::new(spec.num_slots, spec.comp_lanes, spec.cycles_per_lane_slot),
            slot_duration: spec.slot_duration,
            claims: Vec::new(),
        })
    }

    pub fn num_slots(&self) -> usize {
        self.time_freq.num_slots
    }

    pub fn grid(&self, kind: GridKind) -> &ResourceGrid<T> {
        match kind {
            GridKind::TimeFreq => &self.time_freq,
            GridKind::TimeComp => &self.time_comp,
        }
    }

    fn grid_mut(&mut self, kind: GridKind) -> &mut ResourceGrid<T> {
        match kind {
            GridKind::TimeFreq => &mut self.time_freq,
            GridKind::TimeComp => &mut self.time_comp,
        }
    }

    fn check_horizon(&self, slots: &Range<usize>) -> Result<()> {
        if slots.end > self.num_slots() || slots.start > slots.end {
            return Err(Error::OutOfHorizon {
                start: slots.start,
                end: slots.end,
                horizon: self.num_slots(),
            });
        }
        Ok(())
    }

    /// Records `claim` if every touched cell stays within capacity. On any
    /// error the pool is left untouched.
    pub fn try_allocate(&mut self, claim: Claim<T>) -> Result<()> {
        self.check_horizon(&claim.slots())?;
        claim.check_shape()?;
        if let Some(kind) = claim.grid {
            let grid = self.grid(kind);
            if let Some(&lane) = claim.lanes.iter().find(|&&l| l >= grid.num_lanes) {
                return Err(Error::MalformedClaim(format!(
                    "lane {lane} outside grid of {} lanes",
                    grid.num_lanes
                )));
            }
            let limit = grid.cell_capacity + cell_slack(grid.cell_capacity);
            for slot in claim.slots() {
                for &lane in &claim.lanes {
                    if grid.used_at(slot, lane) + claim.amount_per_cell > limit {
                        return Err(Error::CapacityExceeded { slot, lane });
                    }
                }
            }
            let grid = self.grid_mut(kind);
            for slot in claim.slots() {
                for &lane in &claim.lanes {
                    let i = grid.idx(slot, lane);
                    grid.used[i] += claim.amount_per_cell;
                }
            }
        }
        self.claims.push(claim);
        Ok(())
    }

    /// Residual capacity per lane-slot over `slots`, row-major, for the
    /// frequency and compute grids.
    pub fn residual(&self, slots: Range<usize>) -> Result<(Vec<T>, Vec<T>)> {
        self.check_horizon(&slots)?;
        let collect = |g: &ResourceGrid<T>| {
            slots
                .clone()
                .flat_map(|s| (0..g.num_lanes).map(move |l| (s, l)))
                .map(|(s, l)| g.residual_at(s, l))
                .collect::<Vec<_>>()
        };
        Ok((collect(&self.time_freq), collect(&self.time_comp)))
    }

    /// Drops every claim of round `gr_index` and rebuilds the counters from the
    /// remaining claims in insertion order, so the result is bit-identical to
    /// a pool that never saw the released claims.
    pub fn release_round(&mut self, gr_index: usize) {
        let before = self.claims.len();
        self.claims.retain(|c| c.gr_index != gr_index);
        if self.claims.len() != before {
            self.rebuild();
        }
    }

    /// Releases everything.
    pub fn clear(&mut self) {
        self.claims.clear();
        self.time_freq.clear();
        self.time_comp.clear();
    }

    fn rebuild(&mut self) {
        self.time_freq.clear();
        self.time_comp.clear();
        let claims = std::mem::take(&mut self.claims);
        for c in &claims {
            if let Some(kind) = c.grid {
                let grid = self.grid_mut(kind);
                for slot in c.slots() {
                    for &lane in &c.lanes {
                        let i = grid.idx(slot, lane);
                        grid.used[i] += c.amount_per_cell;
                    }
                }
            }
        }
        self.claims = claims;
    }

    pub fn within_capacity(&self) -> bool {
        self.time_freq.within_capacity() && self.time_comp.within_capacity()
    }

    /// Places `amount` on `kind` over `slots`, slot-ascending and lowest lane
    /// first, as single-cell claims. Fails atomically with `CapacityExceeded`
    /// when the residual cannot hold it.
    pub fn fill(&mut self, tag: ClaimTag, kind: GridKind, slots: Range<usize>, amount: T) -> Result<Vec<Claim<T>>> {
        self.check_horizon(&slots)?;
        let grid = self.grid(kind);
        let stop = cell_slack(grid.cell_capacity);
        let mut remaining = amount;
        let mut planned = Vec::new();
        'outer: for slot in slots.clone() {
            for lane in 0..grid.num_lanes {
                if remaining <= stop {
                    break 'outer;
                }
                let free = grid.residual_at(slot, lane);
                if free <= T::zero() {
                    continue;
                }
                let piece = free.min(remaining);
                planned.push(tag.claim(Some(kind), slot..slot + 1, vec![lane], piece));
                remaining -= piece;
            }
        }
        if remaining > stop {
            let slot = slots.end.saturating_sub(1);
            return Err(Error::CapacityExceeded { slot, lane: 0 });
        }
        let snapshot = self.clone();
        for c in &planned {
            if let Err(e) = self.try_allocate(c.clone()) {
                *self = snapshot;
                return Err(e);
            }
        }
        Ok(planned)
    }

    /// Places a constant-rate activity over the continuous interval
    /// `[start, end)` seconds: each slot receives `rate × overlap` units,
    /// packed onto the lowest lanes with room.
    pub fn fill_rate(&mut self, tag: ClaimTag, kind: GridKind, start: T, end: T, rate: T) -> Result<Vec<Claim<T>>> {
        let dt = self.slot_duration;
        let horizon = T::from_usize_lossy(self.num_slots()) * dt;
        let end = end.min(horizon);
        if !(end > start) {
            return Ok(Vec::new());
        }
        let first = (start / dt).floor().to_usize().unwrap_or(0);
        let last = ((end / dt).ceil().to_usize().unwrap_or(0)).min(self.num_slots());
        let snapshot = self.clone();
        let mut out = Vec::new();
        for slot in first..last {
            let s0 = T::from_usize_lossy(slot) * dt;
            let overlap = end.min(s0 + dt) - start.max(s0);
            if overlap <= T::zero() {
                continue;
            }
            match self.fill(tag, kind, slot..slot + 1, rate * overlap) {
                Ok(mut c) => out.append(&mut c),
                Err(e) => {
                    *self = snapshot;
                    return Err(e);
                }
            }
        }
        Ok(out)
    }

    /// Fraction of capacity in use on each grid.
    pub fn utilization(&self) -> (T, T) {
        (
            self.time_freq.total_used() / self.time_freq.total_capacity(),
            self.time_comp.total_used() / self.time_comp.total_capacity(),
        )
    }
}
