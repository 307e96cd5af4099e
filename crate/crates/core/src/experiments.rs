//! Built-in planar target generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::measure::DiscreteTargetMeasure;

/// A uniform target together with a group label per point, used for colouring.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTarget {
    pub measure: DiscreteTargetMeasure,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Grid {
        k: usize,
        extent: f64,
    },
    Clusters {
        centers: Vec<Point2>,
        per_cluster: usize,
        radius: f64,
        #[serde(default)]
        seed: u64,
    },
    Dumbbell {
        bell_radius: f64,
        bar_width: f64,
        separation: f64,
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Generator {
    pub fn build(&self) -> Result<LabelledTarget> {
        match *self {
            Self::Grid { k, extent } => grid(k, extent),
            Self::Clusters {
                ref centers,
                per_cluster,
                radius,
                seed,
            } => clusters(centers, per_cluster, radius, seed),
            Self::Dumbbell {
                bell_radius,
                bar_width,
                separation,
                count,
                seed,
            } => dumbbell(bell_radius, bar_width, separation, count, seed),
        }
    }

    pub fn set_seed(&mut self, new_seed: u64) {
        match self {
            Self::Grid { .. } => {}
            Self::Clusters { seed, .. } | Self::Dumbbell { seed, .. } => *seed = new_seed,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive")))
    }
}

/// `k × k` lattice on `[−extent, extent]²`, uniform weights.
pub fn grid(k: usize, extent: f64) -> Result<LabelledTarget> {
    nonzero("k", k)?;
    positive("extent", extent)?;
    let coord = |a: usize| {
        if k == 1 {
            0.0
        } else {
            -extent + 2.0 * extent * a as f64 / (k - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            pts.push(vec![coord(a), coord(b)]);
        }
    }
    Ok(LabelledTarget {
        measure: DiscreteTargetMeasure::uniform(pts)?,
        labels: vec![0; k * k],
    })
}

fn in_disk<R: Rng>(rng: &mut R, center: Point2, radius: f64) -> Point2 {
    loop {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        if a * a + b * b <= 1.0 {
            return [center[0] + radius * a, center[1] + radius * b];
        }
    }
}

/// `per_cluster` uniform points in a disk of `radius` around each center.
pub fn clusters(centers: &[Point2], per_cluster: usize, radius: f64, seed: u64) -> Result<LabelledTarget> {
    if centers.is_empty() {
        return Err(Error::InvalidConfig("clusters need at least one center".into()));
    }
    nonzero("per_cluster", per_cluster)?;
    positive("radius", radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, &center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            pts.push(in_disk(&mut rng, center, radius).to_vec());
            labels.push(c);
        }
    }
    Ok(LabelledTarget {
        measure: DiscreteTargetMeasure::uniform(pts)?,
        labels,
    })
}

/// Two disks of `bell_radius` centred at `(±separation/2, 0)` joined by a
/// horizontal bar of `bar_width`; `count` uniform points in the union.
/// Labels: 0 left bell, 1 bar, 2 right bell.
pub fn dumbbell(bell_radius: f64, bar_width: f64, separation: f64, count: usize, seed: u64) -> Result<LabelledTarget> {
    positive("bell_radius", bell_radius)?;
    positive("bar_width", bar_width)?;
    positive("separation", separation)?;
    nonzero("count", count)?;
    if bar_width > 2.0 * bell_radius {
        return Err(Error::InvalidConfig("bar_width must not exceed the bell diameter".into()));
    }
    let half = 0.5 * separation;
    let label = |p: Point2| {
        let l = (p[0] + half).powi(2) + p[1] * p[1] <= bell_radius * bell_radius;
        let r = (p[0] - half).powi(2) + p[1] * p[1] <= bell_radius * bell_radius;
        let bar = p[0].abs() <= half && p[1].abs() <= 0.5 * bar_width;
        if l {
            Some(0)
        } else if r {
            Some(2)
        } else if bar {
            Some(1)
        } else {
            None
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wx, wy) = (half + bell_radius, bell_radius);
    let mut pts = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    while pts.len() < count {
        let p = [rng.gen_range(-wx..wx), rng.gen_range(-wy..wy)];
        if let Some(l) = label(p) {
            pts.push(p.to_vec());
            labels.push(l);
        }
    }
    Ok(LabelledTarget {
        measure: DiscreteTargetMeasure::uniform(pts)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = grid(5, 1.0).unwrap();
        assert_eq!(g.measure.len(), 25);
        assert_eq!(g.measure.point(0), &[-1.0, -1.0]);
        assert_eq!(g.measure.point(24), &[1.0, 1.0]);
        assert_eq!(g.measure.point(12), &[0.0, 0.0]);
        assert_eq!(grid(1, 1.0).unwrap().measure.point(0), &[0.0, 0.0]);
        assert!(grid(0, 1.0).is_err());
    }

    #[test]
    fn clusters_stay_in_their_disks() {
        let c = clusters(&[[-5.0, 0.0], [5.0, 0.0]], 40, 0.5, 3).unwrap();
        assert_eq!(c.measure.len(), 80);
        for i in 0..80 {
            let p = c.measure.point2(i);
            let cx = if c.labels[i] == 0 { -5.0 } else { 5.0 };
            assert!((p[0] - cx).hypot(p[1]) <= 0.5);
        }
        assert_eq!(c, clusters(&[[-5.0, 0.0], [5.0, 0.0]], 40, 0.5, 3).unwrap());
    }

    #[test]
    fn dumbbell_shape() {
        let d = dumbbell(1.0, 0.2, 4.0, 300, 1).unwrap();
        assert_eq!(d.measure.len(), 300);
        for (i, &l) in d.labels.iter().enumerate() {
            let p = d.measure.point2(i);
            match l {
                0 => assert!((p[0] + 2.0).hypot(p[1]) <= 1.0),
                2 => assert!((p[0] - 2.0).hypot(p[1]) <= 1.0),
                _ => assert!(p[0].abs() <= 2.0 && p[1].abs() <= 0.1),
            }
        }
        assert!(d.labels.contains(&1));
        assert!(dumbbell(1.0, 3.0, 4.0, 10, 0).is_err());
    }
}
