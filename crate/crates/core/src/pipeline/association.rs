use crate::geometry::PixelPoint;

use super::PipelineError;

/// An item taking part in association: a track or an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: u32,
    pub centre: PixelPoint,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(track id, observation id)` pairs.
    pub matches: Vec<(u32, u32)>,
    pub unmatched_observations: Vec<u32>,
    pub unmatched_tracks: Vec<u32>,
}

/// Greedy one-to-one nearest-neighbour association on left-image centre
/// distance. Pairs farther than `gate_px` never match. Ties are broken by
/// track id, then by observation id, so the result does not depend on input
/// order.
pub fn associate_tracks(observations: &[Candidate], tracks: &[Candidate], gate_px: f64) -> Result<Assignment, PipelineError> {
    if !(gate_px > 0.0) {
        return Err(PipelineError::InvalidConfig(format!("association gate must be positive, got {gate_px}")));
    }
    let mut pairs: Vec<(f64, u32, u32)> = Vec::new();
    for t in tracks {
        for o in observations {
            let d = t.centre.distance(&o.centre);
            if d <= gate_px {
                pairs.push((d, t.id, o.id));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = std::collections::BTreeSet::new();
    let mut used_o = std::collections::BTreeSet::new();
    let mut out = Assignment::default();
    for (_, t, o) in pairs {
        if used_t.contains(&t) || used_o.contains(&o) {
            continue;
        }
        used_t.insert(t);
        used_o.insert(o);
        out.matches.push((t, o));
    }
    out.matches.sort_unstable();
    out.unmatched_observations = observations.iter().map(|o| o.id).filter(|id| !used_o.contains(id)).collect();
    out.unmatched_observations.sort_unstable();
    out.unmatched_tracks = tracks.iter().map(|t| t.id).filter(|id| !used_t.contains(id)).collect();
    out.unmatched_tracks.sort_unstable();
    Ok(out)
}
