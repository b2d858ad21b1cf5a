//! Achievable workload of one (client, edge model) pair in one round.
//!
//! The program: maximise the number of samples `W` such that
//! * sensing produces `W` samples inside the generation window,
//! * downlink, training on `W` samples and uplink run back-to-back inside the
//!   consumption window,
//! * bandwidth and compute stay within the residual budgets.
//!
//! Visual sensing (and any uncoupled case) leaves no trade-off: every budget
//! is used in full. Wireless sensing under the overlapped pipeline splits one
//! bandwidth budget between sensing and communication; the optimum sits on
//! the crossing of the increasing sensing branch and the decreasing compute
//! branch and is found by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute slack accepted on feasibility and before flooring sample counts.
pub const FEASIBILITY_SLACK: f64 = 1e-9;
/// Bisection stops once the bracket is narrower than this fraction of `B`.
pub const BISECTION_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensingSpec<T> {
    Vs { secs_per_sample: T },
    Ws { bits_per_sample: T, efficiency: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProblem<T> {
    /// Generation window, s.
    pub t_gen: T,
    /// Consumption window, s.
    pub t_cons: T,
    /// Residual bandwidth, Hz.
    pub bandwidth: T,
    /// Residual compute rate, cycles/s.
    pub compute: T,
    /// Spectral efficiency towards the candidate edge, bits/s/Hz.
    pub eta: T,
    pub size_dl: T,
    pub size_ul: T,
    pub cycles_per_sample: T,
    pub sensing: SensingSpec<T>,
    /// Samples available from sensed targets.
    pub w_cap: T,
    /// Sensing and communication share `bandwidth`.
    pub coupled: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Latencies<T> {
    pub t_sens: T,
    pub t_dl: T,
    pub t_cp: T,
    pub t_ul: T,
}

impl<T: Scalar> Latencies<T> {
    pub fn consumption(&self) -> T {
        self.t_dl + self.t_cp + self.t_ul
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSolution<T> {
    pub w_star: u64,
    pub b_comm: T,
    pub b_sens: T,
    pub f: T,
    pub latencies: Latencies<T>,
    pub feasible: bool,
}

fn floor_samples<T: Scalar>(x: T) -> u64 {
    if !(x > T::zero()) {
        return 0;
    }
    (x + T::lit(FEASIBILITY_SLACK)).floor().to_u64().unwrap_or(u64::MAX)
}

impl<T: Scalar> WorkloadProblem<T> {
    pub fn validate(&self) -> Result<()> {
        let mut fields = vec![
            ("t_gen", self.t_gen),
            ("t_cons", self.t_cons),
            ("bandwidth", self.bandwidth),
            ("compute", self.compute),
            ("size_dl", self.size_dl),
            ("size_ul", self.size_ul),
            ("cycles_per_sample", self.cycles_per_sample),
            ("w_cap", self.w_cap),
        ];
        match self.sensing {
            SensingSpec::Vs { secs_per_sample } => fields.push(("secs_per_sample", secs_per_sample)),
            SensingSpec::Ws {
                bits_per_sample,
                efficiency,
            } => {
                fields.push(("bits_per_sample", bits_per_sample));
                fields.push(("efficiency", efficiency));
            }
        }
        for (name, v) in fields {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidProblem(format!("{name} = {v}")));
            }
        }
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(Error::InvalidProblem(format!("eta = {} must be positive", self.eta)));
        }
        Ok(())
    }

    fn payload(&self) -> T {
        self.size_dl + self.size_ul
    }

    /// Combined downlink + uplink time at bandwidth `b`.
    fn comm_time(&self, b: T) -> T {
        if b > T::zero() {
            self.payload() / (b * self.eta)
        } else if self.payload() > T::zero() {
            T::infinity()
        } else {
            T::zero()
        }
    }

    /// Samples the generation window can produce with `b_sens` Hz of sensing bandwidth.
    fn sensing_branch(&self, b_sens: T) -> T {
        match self.sensing {
            SensingSpec::Vs { secs_per_sample } => {
                if secs_per_sample > T::zero() {
                    self.t_gen / secs_per_sample
                } else {
                    T::infinity()
                }
            }
            SensingSpec::Ws {
                bits_per_sample,
                efficiency,
            } => {
                let bits = b_sens * efficiency * self.t_gen;
                if bits_per_sample > T::zero() {
                    bits / bits_per_sample
                } else if bits > T::zero() {
                    T::infinity()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Samples trainable in what is left of the consumption window.
    fn compute_branch(&self, b_comm: T, f: T) -> T {
        let left = self.t_cons - self.comm_time(b_comm);
        if !(left > T::zero()) {
            return T::zero();
        }
        if self.cycles_per_sample > T::zero() {
            left * f / self.cycles_per_sample
        } else if f > T::zero() {
            T::infinity()
        } else {
            T::zero()
        }
    }

    fn is_coupled_ws(&self) -> bool {
        self.coupled && matches!(self.sensing, SensingSpec::Ws { .. })
    }

    /// Smallest sensing bandwidth producing `w` samples (wireless only).
    fn sensing_bandwidth_for(&self, w: T) -> T {
        match self.sensing {
            SensingSpec::Ws {
                bits_per_sample,
                efficiency,
            } => {
                if w <= T::zero() {
                    T::zero()
                } else {
                    w * bits_per_sample / (efficiency * self.t_gen)
                }
            }
            SensingSpec::Vs { .. } => T::zero(),
        }
    }

    /// Exact integer feasibility of `w` samples under the shared-bandwidth split.
    fn coupled_feasible(&self, w: u64) -> bool {
        let wt = T::lit(w as f64);
        if wt > self.w_cap + T::lit(FEASIBILITY_SLACK) {
            return false;
        }
        let b_sens = self.sensing_bandwidth_for(wt);
        if !(b_sens <= self.bandwidth) {
            return false;
        }
        self.compute_branch(self.bandwidth - b_sens, self.compute) + T::lit(FEASIBILITY_SLACK) >= wt
    }

    fn latencies_at(&self, w: u64, b_sens: T, b_comm: T, f: T) -> Latencies<T> {
        let wt = T::lit(w as f64);
        let t_sens = match self.sensing {
            _ if w == 0 => T::zero(),
            SensingSpec::Vs { secs_per_sample } => wt * secs_per_sample,
            SensingSpec::Ws {
                bits_per_sample,
                efficiency,
            } => wt * bits_per_sample / (b_sens * efficiency),
        };
        let rate = b_comm * self.eta;
        Latencies {
            t_sens,
            t_dl: self.size_dl / rate,
            t_cp: if w == 0 {
                T::zero()
            } else {
                wt * self.cycles_per_sample / f
            },
            t_ul: self.size_ul / rate,
        }
    }
}

/// Bisection for the sensing bandwidth where the sensing and compute branches
/// of the shared-bandwidth program cross. Only meaningful for wireless
/// sensing with `coupled` set.
pub fn sensing_split_crossing<T: Scalar>(p: &WorkloadProblem<T>) -> T {
    let b = p.bandwidth;
    let gap = |x: T| p.sensing_branch(x) - p.compute_branch(b - x, p.compute);
    let (mut lo, mut hi) = (T::zero(), b);
    let tol = b * T::lit(BISECTION_REL_TOL);
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if gap(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::lit(0.5)
}

pub fn solve_workload<T: Scalar>(p: &WorkloadProblem<T>) -> Result<WorkloadSolution<T>> {
    p.validate()?;
    let b = p.bandwidth;
    let f = p.compute;

    if !(p.comm_time(b) < p.t_cons) {
        let (b_sens, b_comm) = (T::zero(), b);
        return Ok(WorkloadSolution {
            w_star: 0,
            b_comm,
            b_sens,
            f,
            latencies: p.latencies_at(0, b_sens, b_comm, f),
            feasible: false,
        });
    }

    if !p.is_coupled_ws() {
        let b_sens = match p.sensing {
            SensingSpec::Vs { .. } => T::zero(),
            SensingSpec::Ws { .. } => b,
        };
        let w = p.sensing_branch(b_sens).min(p.w_cap).min(p.compute_branch(b, f));
        let w_star = floor_samples(w);
        return Ok(WorkloadSolution {
            w_star,
            b_comm: b,
            b_sens,
            f,
            latencies: p.latencies_at(w_star, b_sens, b, f),
            feasible: true,
        });
    }

    let crossing = sensing_split_crossing(p);
    let at = |x: T| p.sensing_branch(x).min(p.compute_branch(b - x, f));
    let continuous = at(crossing).max(at(crossing - b * T::lit(BISECTION_REL_TOL)).max(T::zero()));
    let mut w = floor_samples(continuous.min(p.w_cap));
    // The bracket is only accurate to the tolerance; settle the integer exactly.
    while w > 0 && !p.coupled_feasible(w) {
        w -= 1;
    }
    while p.coupled_feasible(w + 1) {
        w += 1;
    }
    let b_sens = p.sensing_bandwidth_for(T::lit(w as f64)).min(b);
    let b_comm = b - b_sens;
    Ok(WorkloadSolution {
        w_star: w,
        b_comm,
        b_sens,
        f,
        latencies: p.latencies_at(w, b_sens, b_comm, f),
        feasible: true,
    })
}

/// Brute-force lattice search over `(b_sens, f)` returning the best integer
/// workload. Written independently of [`solve_workload`] as its check.
pub fn oracle_workload<T: Scalar>(p: &WorkloadProblem<T>, grid: usize) -> Result<u64> {
    p.validate()?;
    if grid < 2 {
        return Err(Error::InvalidProblem(format!("oracle grid must be >= 2, got {grid}")));
    }
    let b = p.bandwidth.as_f64();
    let f_max = p.compute.as_f64();
    let eta = p.eta.as_f64();
    let payload = (p.size_dl + p.size_ul).as_f64();
    let t_gen = p.t_gen.as_f64();
    let t_cons = p.t_cons.as_f64();
    let kappa = p.cycles_per_sample.as_f64();
    let cap = p.w_cap.as_f64();
    let shared = p.coupled && matches!(p.sensing, SensingSpec::Ws { .. });
    let steps = (grid - 1) as f64;

    let mut best = 0u64;
    for i in 0..grid {
        let b_sens = b * i as f64 / steps;
        let b_comm = if shared { b - b_sens } else { b };
        let comm = if b_comm > 0.0 {
            payload / (b_comm * eta)
        } else if payload > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if comm >= t_cons {
            continue;
        }
        let sensed = match p.sensing {
            SensingSpec::Vs { secs_per_sample } => t_gen / secs_per_sample.as_f64(),
            SensingSpec::Ws {
                bits_per_sample,
                efficiency,
            } => b_sens * efficiency.as_f64() * t_gen / bits_per_sample.as_f64(),
        };
        for j in 0..grid {
            let f = f_max * j as f64 / steps;
            let trained = (t_cons - comm) * f / kappa;
            let w = sensed.min(cap).min(trained);
            if w.is_nan() || w <= 0.0 {
                continue;
            }
            best = best.max((w + FEASIBILITY_SLACK).floor() as u64);
        }
    }
    Ok(best)
}

/// Phase latencies of `w` samples with the whole budget on every phase.
pub fn latency_components<T: Scalar>(p: &WorkloadProblem<T>, w: T) -> Latencies<T> {
    let rate = p.bandwidth * p.eta;
    let t_sens = match p.sensing {
        SensingSpec::Vs { secs_per_sample } => w * secs_per_sample,
        SensingSpec::Ws {
            bits_per_sample,
            efficiency,
        } => w * bits_per_sample / (p.bandwidth * efficiency),
    };
    Latencies {
        t_sens,
        t_dl: p.size_dl / rate,
        t_cp: w * p.cycles_per_sample / p.compute,
        t_ul: p.size_ul / rate,
    }
}
