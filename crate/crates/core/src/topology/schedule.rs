use std::ops::Range;

use super::Topology;
use crate::error::{Error, Result};

/// Time-varying topology: consecutive round ranges, each with its own graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    phases: Vec<(Range<usize>, Topology)>,
}

impl TopologySchedule {
    /// Ranges must tile `[0, T)` in order, without gaps or overlaps, and all
    /// graphs must have the same node count.
    pub fn new(mut phases: Vec<(Range<usize>, Topology)>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Topology("empty topology schedule".into()));
        }
        phases.sort_by_key(|(r, _)| r.start);
        let nodes = phases[0].1.len();
        let mut expect = 0;
        for (r, t) in &phases {
            if r.start != expect {
                let what = if r.start > expect { "gap" } else { "overlap" };
                return Err(Error::Topology(format!(
                    "schedule {what} at round {expect} (next phase starts at {})",
                    r.start
                )));
            }
            if r.end <= r.start {
                return Err(Error::Topology(format!("empty round range {r:?}")));
            }
            if t.len() != nodes {
                return Err(Error::Topology("all phases must have the same node count".into()));
            }
            expect = r.end;
        }
        Ok(TopologySchedule { phases })
    }

    pub fn constant(topo: Topology, rounds: usize) -> Result<Self> {
        TopologySchedule::new(vec![(0..rounds.max(1), topo)])
    }

    /// Number of rounds covered.
    pub fn rounds(&self) -> usize {
        self.phases.last().map(|(r, _)| r.end).unwrap_or(0)
    }

    pub fn nodes(&self) -> usize {
        self.phases[0].1.len()
    }

    /// The graph active in round `t`; rounds past the end reuse the last phase.
    pub fn at(&self, t: usize) -> &Topology {
        self.phases
            .iter()
            .find(|(r, _)| r.contains(&t))
            .map(|(_, topo)| topo)
            .unwrap_or(&self.phases.last().unwrap().1)
    }

    pub fn phases(&self) -> &[(Range<usize>, Topology)] {
        &self.phases
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule() {
        let s = TopologySchedule::constant(Topology::ring(6).unwrap(), 50).unwrap();
        assert_eq!(s.at(0), s.at(49));
        assert_eq!(s.rounds(), 50);
    }

    #[test]
    fn two_phase_switch() {
        let s = TopologySchedule::new(vec![
            (30..60, Topology::ring(6).unwrap()),
            (0..30, Topology::line(6).unwrap()),
        ])
        .unwrap();
        assert_eq!(s.at(29), &Topology::line(6).unwrap());
        assert_eq!(s.at(30), &Topology::ring(6).unwrap());
        assert_ne!(s.at(29), s.at(30));
    }

    #[test]
    fn gaps_and_overlaps_rejected() {
        let l = Topology::line(4).unwrap();
        assert!(TopologySchedule::new(vec![(0..10, l.clone()), (11..20, l.clone())]).is_err());
        assert!(TopologySchedule::new(vec![(0..10, l.clone()), (9..20, l.clone())]).is_err());
        assert!(TopologySchedule::new(vec![(1..10, l.clone())]).is_err());
        assert!(TopologySchedule::new(vec![(0..10, l), (10..20, Topology::line(5).unwrap())]).is_err());
    }
}
