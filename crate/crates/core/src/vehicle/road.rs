//! Piecewise-constant-curvature centerlines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// Arc length (m).
    pub length: f64,
    /// Signed curvature ρ (1/m); positive turns left.
    pub curvature: f64,
}

/// Pose of a point on the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Centerline starting at the origin heading along +x, plus the lane half
/// width `E_max`. Arc lengths outside `[0, length]` continue the first or last
/// segment, so curvature and pose lookups are total.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGeometry {
    segments: Vec<Segment>,
    starts: Vec<f64>,
    start_poses: Vec<Pose>,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid road: {0}")]
pub struct RoadError(pub String);

impl RoadGeometry {
    pub fn new(segments: Vec<Segment>, half_width: f64) -> Result<Self, RoadError> {
        if segments.is_empty() {
            return Err(RoadError("no segments".into()));
        }
        if let Some(s) = segments.iter().find(|s| !(s.length > 0.0) || !s.curvature.is_finite()) {
            return Err(RoadError(format!("segment lengths must be positive, got {s:?}")));
        }
        if !(half_width > 0.0) {
            return Err(RoadError(format!("half width must be positive, got {half_width}")));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut start_poses = Vec::with_capacity(segments.len());
        let mut s = 0.0;
        let mut pose = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for seg in &segments {
            starts.push(s);
            start_poses.push(pose);
            pose = advance(pose, seg.curvature, seg.length);
            s += seg.length;
        }
        Ok(Self {
            segments,
            starts,
            start_poses,
            half_width,
        })
    }

    /// Straight, constant-radius left arc, straight.
    pub fn corner(entry: f64, radius: f64, angle: f64, exit: f64, half_width: f64) -> Result<Self, RoadError> {
        if !(radius > 0.0 && angle > 0.0) {
            return Err(RoadError(format!("corner radius and angle must be positive ({radius}, {angle})")));
        }
        Self::new(
            vec![
                Segment {
                    length: entry,
                    curvature: 0.0,
                },
                Segment {
                    length: radius * angle,
                    curvature: 1.0 / radius,
                },
                Segment {
                    length: exit,
                    curvature: 0.0,
                },
            ],
            half_width,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        let last = self.segments.len() - 1;
        self.starts[last] + self.segments[last].length
    }

    fn index(&self, s: f64) -> usize {
        match self.starts.iter().rposition(|&start| start <= s) {
            Some(i) => i,
            None => 0,
        }
    }

    /// Start and end arc length of segment `i`.
    pub fn segment_span(&self, i: usize) -> (f64, f64) {
        (self.starts[i], self.starts[i] + self.segments[i].length)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segments[self.index(s)].curvature
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let i = self.index(s);
        advance(self.start_poses[i], self.segments[i].curvature, s - self.starts[i])
    }
}

/// Move along a constant-curvature arc by `ds` (may be negative).
fn advance(p: Pose, curvature: f64, ds: f64) -> Pose {
    if curvature.abs() < 1e-12 {
        Pose {
            x: p.x + ds * p.heading.cos(),
            y: p.y + ds * p.heading.sin(),
            heading: p.heading,
        }
    } else {
        let heading = p.heading + curvature * ds;
        Pose {
            x: p.x + (heading.sin() - p.heading.sin()) / curvature,
            y: p.y - (heading.cos() - p.heading.cos()) / curvature,
            heading,
        }
    }
}
