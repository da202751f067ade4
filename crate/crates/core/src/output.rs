//! CSV and JSON writers. Numbers use Rust's shortest round-trip formatting,
//! so files reproduce the in-memory values exactly and are byte-identical
//! between identical runs.

use crate::analysis::{ImpactEvent, Regime, RegimeSummary};
use crate::model::{eval_kinematics, gap_functions, SystemParams};
use crate::stepper::{StepStats, Trajectory};
use serde::Serialize;
use std::io::{self, Write};

pub const TRAJECTORY_HEADER: &str =
    "t,phi1,phi1c,phi4,phi1_dot,phi1c_dot,g_minus,g_plus,delta,delta_dot";
pub const EVENTS_HEADER: &str = "t,wall,gamma_na,gamma_ne,p_n,p_t";
pub const REGIMES_HEADER: &str = "clearance_m,impacts_per_period,poincare_diameter,classification";

pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    traj: &Trajectory,
    p: &SystemParams,
) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in &traj.samples {
        let kin = eval_kinematics(s.q[1], s.u[1], p.beta);
        let (g_minus, g_plus) = gap_functions(p, &s.q);
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.t,
            s.q[0],
            s.q[1],
            kin.phi4,
            s.u[0],
            s.u[1],
            g_minus,
            g_plus,
            s.delta(),
            s.delta_dot()
        )?;
    }
    w.flush()
}

pub fn write_events_csv<W: Write>(mut w: W, events: &[ImpactEvent]) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{:?},{},{:?},{:?},{:?},{:?}",
            e.t, e.wall, e.gamma_na, e.gamma_ne, e.p_n, e.p_t
        )?;
    }
    w.flush()
}

/// One row of the sweep table. `regime` is `None` when the run failed or
/// was too short to classify.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub clearance: f64,
    pub regime: Option<(f64, f64, Regime)>,
}

pub fn write_regimes_csv<W: Write>(mut w: W, rows: &[RegimeRow]) -> io::Result<()> {
    writeln!(w, "{REGIMES_HEADER}")?;
    for r in rows {
        match r.regime {
            Some((impacts, diameter, class)) => writeln!(
                w,
                "{:?},{:?},{:?},{}",
                r.clearance, impacts, diameter, class
            )?,
            None => writeln!(w, "{:?},,,unavailable", r.clearance)?,
        }
    }
    w.flush()
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsSummary {
    pub steps: usize,
    pub contact_steps: usize,
    pub min_gap_m: Option<f64>,
    pub max_gamma_n_m_s: f64,
    pub max_lcp_residual: f64,
    pub max_cone_excess: Option<f64>,
    pub max_pivots: usize,
}

impl From<&StepStats> for StatsSummary {
    fn from(s: &StepStats) -> Self {
        Self {
            steps: s.steps,
            contact_steps: s.contact_steps,
            min_gap_m: s.min_gap.is_finite().then_some(s.min_gap),
            max_gamma_n_m_s: s.max_gamma_n,
            max_lcp_residual: s.max_lcp_residual,
            max_cone_excess: s.max_cone_excess.is_finite().then_some(s.max_cone_excess),
            max_pivots: s.max_pivots,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// `"ok"` or `"solver_failure"`.
    pub status: &'static str,
    pub failure: Option<String>,
    pub params: SystemParams,
    pub sample_every: usize,
    pub samples: usize,
    pub impact_events: usize,
    pub stats: StatsSummary,
    pub regime: Option<RegimeSummary>,
    pub regime_error: Option<String>,
}

pub fn write_summary_json<W: Write>(mut w: W, summary: &RunSummary) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{State, Wall};
    use crate::stepper::simulate;

    #[test]
    fn trajectory_rows_round_trip() {
        let p = SystemParams {
            t_final: 1e-3,
            ..SystemParams::default()
        };
        let traj = simulate(&p, State::at_rest(), 10);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 1 + traj.samples.len());
        let last: Vec<f64> = lines
            .last()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        let s = traj.samples.last().unwrap();
        assert_eq!(last.len(), 10);
        assert_eq!(last[0], s.t);
        assert_eq!(last[2], s.q[1]);
        assert_eq!(last[5], s.u[1]);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn events_and_regimes_format() {
        let e = ImpactEvent {
            t: 0.5,
            wall: Wall::Right,
            gamma_na: -1e-3,
            gamma_ne: 5e-4,
            p_n: 2e-7,
            p_t: -1e-7,
        };
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &[e]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{EVENTS_HEADER}\n0.5,right,-0.001,0.0005,2e-7,-1e-7\n")
        );

        let rows = [
            RegimeRow {
                clearance: 0.0,
                regime: Some((0.0, 1e-8, Regime::Periodic1)),
            },
            RegimeRow {
                clearance: 5e-5,
                regime: None,
            },
        ];
        let mut buf = Vec::new();
        write_regimes_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{REGIMES_HEADER}\n0.0,0.0,1e-8,Periodic1\n5e-5,,,unavailable\n")
        );
    }
}
