//! Two-moons dataset: generation, exact projection onto the noise-free arcs,
//! and isometric embedding into higher ambient dimension.
//!
//! Both moons are unit-radius half circles: the outer arc is centered at the
//! origin and sweeps the upper half plane, the inner arc is centered at
//! (1, 0.5) and sweeps the lower half plane. Label 0 marks the outer arc,
//! label 1 the inner arc, and label 2 is reserved as the null conditioning
//! label and never appears in generated data.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::linalg::{dot, norm};
use crate::rng::{stream, Domain};

/// Conditioning label meaning "no condition".
pub const NULL_LABEL: u8 = 2;

/// Parameters for [`two_moons`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoMoonsSpec {
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// A point with its conditioning label (0 or 1 for data, 2 for null).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabeledPoint {
    pub position: Vec<f64>,
    pub label: u8,
}

/// One of the two half-circle arcs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MoonArc {
    Outer,
    Inner,
}

impl MoonArc {
    pub fn center(self) -> [f64; 2] {
        match self {
            MoonArc::Outer => [0.0, 0.0],
            MoonArc::Inner => [1.0, 0.5],
        }
    }

    pub fn label(self) -> u8 {
        match self {
            MoonArc::Outer => 0,
            MoonArc::Inner => 1,
        }
    }

    /// Arc point at parameter `theta` in [0, pi].
    pub fn point_at(self, theta: f64) -> [f64; 2] {
        match self {
            MoonArc::Outer => [theta.cos(), theta.sin()],
            MoonArc::Inner => [1.0 - theta.cos(), 0.5 - theta.sin()],
        }
    }

    /// Unit tangent d(point)/d(theta), normalized.
    pub fn tangent_at(self, theta: f64) -> [f64; 2] {
        match self {
            MoonArc::Outer => [-theta.sin(), theta.cos()],
            MoonArc::Inner => [theta.sin(), -theta.cos()],
        }
    }
}

/// Draws the dataset: ceil(n/2) outer points labeled 0 followed by floor(n/2)
/// inner points labeled 1, each an arc point at a uniform parameter plus
/// isotropic Gaussian noise of scale `noise_std`.
pub fn two_moons(spec: &TwoMoonsSpec) -> Result<Vec<LabeledPoint>> {
    if spec.n_samples < 2 {
        return Err(CoreError::InvalidInput(format!(
            "two_moons needs at least 2 samples, got {}",
            spec.n_samples
        )));
    }
    if !spec.noise_std.is_finite() || spec.noise_std < 0.0 {
        return Err(CoreError::InvalidInput(format!(
            "noise_std must be finite and nonnegative, got {}",
            spec.noise_std
        )));
    }
    let mut rng = stream(spec.seed, Domain::Data, 0);
    let n_outer = spec.n_samples.div_ceil(2);
    let mut points = Vec::with_capacity(spec.n_samples);
    for arc in [MoonArc::Outer, MoonArc::Inner] {
        let count = if arc == MoonArc::Outer { n_outer } else { spec.n_samples - n_outer };
        for _ in 0..count {
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            let [mut x, mut y] = arc.point_at(theta);
            // Noise draws happen even at noise_std = 0 so the parameter draw
            // sequence is identical across noise settings.
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            x += spec.noise_std * nx;
            y += spec.noise_std * ny;
            points.push(LabeledPoint { position: vec![x, y], label: arc.label() });
        }
    }
    Ok(points)
}

/// Nearest point on the union of the two arcs, with local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldProjection {
    pub arc: MoonArc,
    /// Arc parameter of the foot point, clamped to [0, pi].
    pub theta: f64,
    pub foot: [f64; 2],
    pub distance: f64,
    /// Unit tangent of the arc at the foot point.
    pub tangent: [f64; 2],
    /// Unit normal at the foot point, oriented toward the foot when the query
    /// is off the manifold (normal . (foot - query) >= 0).
    pub normal: [f64; 2],
}

/// Euclidean projection onto the two-moons manifold.
///
/// For a circle arc the nearest point at a clamped parameter is exact: the
/// squared distance to the circle is monotone in the angular distance to the
/// unclamped foot, so clamping the angle into [0, pi] clamps the distance.
/// Errors when the query coincides with either circle center, where the
/// nearest arc point is not unique.
pub fn project_to_moons(p: &[f64]) -> Result<ManifoldProjection> {
    if p.len() != 2 {
        return Err(CoreError::DimensionMismatch(format!(
            "projection expects a 2-vector, got length {}",
            p.len()
        )));
    }
    if !p[0].is_finite() || !p[1].is_finite() {
        return Err(CoreError::InvalidInput("projection query must be finite".into()));
    }
    let mut best: Option<ManifoldProjection> = None;
    for arc in [MoonArc::Outer, MoonArc::Inner] {
        let [cx, cy] = arc.center();
        let u = [p[0] - cx, p[1] - cy];
        if u[0] == 0.0 && u[1] == 0.0 {
            return Err(CoreError::AmbiguousProjection(cx, cy));
        }
        let theta = clamp_angle(unclamped_param(arc, u));
        let foot = arc.point_at(theta);
        let distance = f64::hypot(p[0] - foot[0], p[1] - foot[1]);
        let better = match &best {
            None => true,
            Some(b) => distance < b.distance,
        };
        if better {
            let tangent = arc.tangent_at(theta);
            let mut normal = [-tangent[1], tangent[0]];
            let toward = [foot[0] - p[0], foot[1] - p[1]];
            if normal[0] * toward[0] + normal[1] * toward[1] < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            best = Some(ManifoldProjection { arc, theta, foot, distance, tangent, normal });
        }
    }
    Ok(best.expect("both arcs evaluated"))
}

/// Arc parameter of the unclamped circle foot for the offset `u` from the arc
/// center, in (-pi, pi].
fn unclamped_param(arc: MoonArc, u: [f64; 2]) -> f64 {
    match arc {
        MoonArc::Outer => u[1].atan2(u[0]),
        // Inner arc points are center - (cos, sin), so the foot direction is
        // the antipode of the offset direction.
        MoonArc::Inner => {
            let phi = u[1].atan2(u[0]);
            if phi > 0.0 {
                phi - std::f64::consts::PI
            } else {
                phi + std::f64::consts::PI
            }
        }
    }
}

/// Clamps an unconstrained arc parameter into [0, pi] by angular distance;
/// parameters in the lower half plane snap to the nearer endpoint, with the
/// tie at -pi/2 resolved to 0.
fn clamp_angle(theta: f64) -> f64 {
    if (0.0..=std::f64::consts::PI).contains(&theta) {
        theta
    } else if theta >= -std::f64::consts::FRAC_PI_2 {
        0.0
    } else {
        std::f64::consts::PI
    }
}

/// Linear isometry from the plane into R^dim, as two orthonormal columns.
#[derive(Debug, Clone)]
pub struct PlaneEmbedding {
    cols: [Vec<f64>; 2],
}

impl PlaneEmbedding {
    /// Random orthonormal pair from Gram-Schmidt over Gaussian draws.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(CoreError::InvalidInput(format!(
                "embedding dimension must be at least 2, got {dim}"
            )));
        }
        let mut rng = stream(seed, Domain::Embed, 0);
        loop {
            let g0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let g1: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n0 = norm(&g0);
            if n0 < 1e-6 {
                continue;
            }
            let q0: Vec<f64> = g0.iter().map(|x| x / n0).collect();
            let proj = dot(&g1, &q0);
            let r1: Vec<f64> = g1.iter().zip(&q0).map(|(x, q)| x - proj * q).collect();
            let n1 = norm(&r1);
            if n1 < 1e-6 {
                continue;
            }
            let q1: Vec<f64> = r1.iter().map(|x| x / n1).collect();
            return Ok(Self { cols: [q0, q1] });
        }
    }

    pub fn dim(&self) -> usize {
        self.cols[0].len()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), 2);
        (0..self.dim()).map(|i| p[0] * self.cols[0][i] + p[1] * self.cols[1][i]).collect()
    }
}

/// Embeds 2-D labeled points into R^dim with a shared random isometry.
pub fn embed_isometric(points: &[LabeledPoint], dim: usize, seed: u64) -> Result<Vec<LabeledPoint>> {
    let embedding = PlaneEmbedding::random(dim, seed)?;
    points
        .iter()
        .map(|p| {
            if p.position.len() != 2 {
                return Err(CoreError::DimensionMismatch(format!(
                    "embedding expects 2-D points, got length {}",
                    p.position.len()
                )));
            }
            Ok(LabeledPoint { position: embedding.apply(&p.position), label: p.label })
        })
        .collect()
}

/// Writes points as CSV with header `x0,..,x{D-1},label`.
pub fn write_points_csv<W: Write>(points: &[LabeledPoint], out: &mut W) -> Result<()> {
    let dim = points.first().map_or(2, |p| p.position.len());
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "{},label", header.join(","))?;
    for p in points {
        for x in &p.position {
            write!(out, "{x},")?;
        }
        writeln!(out, "{}", p.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Brute-force nearest arc point over a dense parameter grid; independent
    /// of the closed-form projection.
    fn dense_projection_oracle(p: [f64; 2]) -> (MoonArc, f64, f64) {
        let steps = 200_000;
        let mut best = (MoonArc::Outer, 0.0, f64::INFINITY);
        for arc in [MoonArc::Outer, MoonArc::Inner] {
            for i in 0..=steps {
                let theta = std::f64::consts::PI * i as f64 / steps as f64;
                let q = arc.point_at(theta);
                let d = f64::hypot(p[0] - q[0], p[1] - q[1]);
                if d < best.2 {
                    best = (arc, theta, d);
                }
            }
        }
        best
    }

    #[test]
    fn noise_free_points_sit_on_their_arcs() {
        let spec = TwoMoonsSpec { n_samples: 1000, noise_std: 0.0, seed: 3 };
        let points = two_moons(&spec).unwrap();
        assert_eq!(points.len(), 1000);
        assert_eq!(points.iter().filter(|p| p.label == 0).count(), 500);
        assert_eq!(points.iter().filter(|p| p.label == 1).count(), 500);
        for p in &points {
            let proj = project_to_moons(&p.position).unwrap();
            assert!(proj.distance <= 1e-12, "off-arc distance {}", proj.distance);
            assert_eq!(proj.arc.label(), p.label);
        }
    }

    #[test]
    fn odd_count_puts_extra_point_on_outer_arc() {
        let spec = TwoMoonsSpec { n_samples: 7, noise_std: 0.1, seed: 0 };
        let points = two_moons(&spec).unwrap();
        assert_eq!(points.iter().filter(|p| p.label == 0).count(), 4);
        assert_eq!(points.iter().filter(|p| p.label == 1).count(), 3);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = TwoMoonsSpec { n_samples: 64, noise_std: 0.05, seed: 9 };
        assert_eq!(two_moons(&spec).unwrap(), two_moons(&spec).unwrap());
        let other = TwoMoonsSpec { seed: 10, ..spec };
        assert_ne!(two_moons(&spec).unwrap(), two_moons(&other).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(two_moons(&TwoMoonsSpec { n_samples: 1, noise_std: 0.0, seed: 0 }).is_err());
        assert!(two_moons(&TwoMoonsSpec { n_samples: 10, noise_std: -0.1, seed: 0 }).is_err());
        assert!(two_moons(&TwoMoonsSpec { n_samples: 10, noise_std: f64::NAN, seed: 0 }).is_err());
    }

    #[test]
    fn projection_from_above_outer_arc() {
        let proj = project_to_moons(&[0.0, 2.0]).unwrap();
        assert_eq!(proj.arc, MoonArc::Outer);
        assert!((proj.foot[0]).abs() <= 1e-12);
        assert!((proj.foot[1] - 1.0).abs() <= 1e-12);
        assert!((proj.distance - 1.0).abs() <= 1e-12);
        // Normal points from the query toward the foot.
        assert!((proj.normal[0]).abs() <= 1e-12);
        assert!((proj.normal[1] + 1.0).abs() <= 1e-12);
        // Frame is orthonormal.
        assert!((dot(&proj.tangent, &proj.normal)).abs() <= 1e-12);
        assert!((norm(&proj.tangent) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn projection_clamps_to_arc_endpoints() {
        // Below and left of the outer arc's theta = pi endpoint, far from the
        // inner arc: the outer candidate clamps to (-1, 0) and wins.
        let proj = project_to_moons(&[-1.2, -0.6]).unwrap();
        assert_eq!(proj.arc, MoonArc::Outer);
        assert!((proj.theta - PI).abs() <= 1e-12, "theta {}", proj.theta);
        assert!((proj.foot[0] + 1.0).abs() <= 1e-12);
        assert!((proj.foot[1]).abs() <= 1e-12);
    }

    #[test]
    fn angle_clamp_tie_goes_to_zero() {
        assert_eq!(clamp_angle(-FRAC_PI_2), 0.0);
        assert_eq!(clamp_angle(-FRAC_PI_2 - 1e-9), PI);
        assert_eq!(clamp_angle(-1e-12), 0.0);
        assert_eq!(clamp_angle(1.0), 1.0);
        assert_eq!(clamp_angle(PI), PI);
    }

    #[test]
    fn projection_matches_dense_oracle() {
        let queries = [
            [2.0, -1.0],
            [-0.5, -0.5],
            [0.5, 0.25],
            [1.5, 0.1],
            [0.9, -0.9],
            [-1.2, 0.3],
            [1.0, 0.49],
            [0.01, 0.01],
        ];
        for q in queries {
            let proj = project_to_moons(&q).unwrap();
            let (arc, theta, dist) = dense_projection_oracle(q);
            assert!((proj.distance - dist).abs() <= 1e-6, "distance mismatch at {q:?}");
            if (proj.distance - dist).abs() <= 1e-9 && proj.arc != arc {
                // Grid winner can differ on near-ties between arcs; distance
                // agreement is the contract there.
                continue;
            }
            assert_eq!(proj.arc, arc, "arc mismatch at {q:?}");
            assert!(
                (proj.theta - theta).abs() <= 1e-3 || proj.distance < 1e-9,
                "theta mismatch at {q:?}: {} vs {theta}",
                proj.theta
            );
        }
    }

    #[test]
    fn projection_errors_at_circle_centers() {
        assert!(matches!(
            project_to_moons(&[0.0, 0.0]),
            Err(CoreError::AmbiguousProjection(_, _))
        ));
        assert!(matches!(
            project_to_moons(&[1.0, 0.5]),
            Err(CoreError::AmbiguousProjection(_, _))
        ));
    }

    #[test]
    fn normal_points_toward_foot_for_off_manifold_queries() {
        let spec = TwoMoonsSpec { n_samples: 50, noise_std: 0.3, seed: 21 };
        for p in two_moons(&spec).unwrap() {
            let proj = match project_to_moons(&p.position) {
                Ok(pr) => pr,
                Err(_) => continue,
            };
            if proj.distance == 0.0 {
                continue;
            }
            let toward = [proj.foot[0] - p.position[0], proj.foot[1] - p.position[1]];
            let align = dot(&proj.normal, &toward) / proj.distance;
            // The orientation convention holds everywhere; exact radial
            // alignment only at interior feet, where the query sits on the
            // circle normal. At clamped endpoints the offset is oblique.
            assert!(align >= -1e-12, "normal flipped: {align}");
            let interior = proj.theta > 1e-9 && proj.theta < PI - 1e-9;
            if interior {
                assert!(align >= 1.0 - 1e-9, "normal misaligned at interior foot: {align}");
            }
        }
    }

    #[test]
    fn embedding_preserves_distances_and_labels() {
        let spec = TwoMoonsSpec { n_samples: 40, noise_std: 0.05, seed: 2 };
        let points = two_moons(&spec).unwrap();
        let embedded = embed_isometric(&points, 10, 2).unwrap();
        assert_eq!(embedded.len(), points.len());
        for (a, b) in points.iter().zip(&embedded) {
            assert_eq!(a.label, b.label);
            assert_eq!(b.position.len(), 10);
            let da = norm(&a.position);
            let db = norm(&b.position);
            assert!((da - db).abs() <= 1e-12 * da.max(1.0), "norm changed: {da} vs {db}");
        }
        for i in [0usize, 7, 23] {
            for j in [1usize, 15, 39] {
                let da: f64 = points[i]
                    .position
                    .iter()
                    .zip(&points[j].position)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let db: f64 = embedded[i]
                    .position
                    .iter()
                    .zip(&embedded[j].position)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                assert!((da - db).abs() <= 1e-12 * da.max(1.0));
            }
        }
        assert!(embed_isometric(&points, 1, 2).is_err());
    }

    #[test]
    fn csv_export_golden() {
        let points = vec![
            LabeledPoint { position: vec![0.5, -1.25], label: 0 },
            LabeledPoint { position: vec![1.0, 0.1], label: 1 },
        ];
        let mut buf = Vec::new();
        write_points_csv(&points, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x0,x1,label\n0.5,-1.25,0\n1,0.1,1\n");
    }
}
