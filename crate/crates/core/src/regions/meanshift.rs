use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShiftParams {
    /// Flat-kernel radius in degrees.
    pub bandwidth: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        MeanShiftParams {
            bandwidth: 0.02,
            max_iters: 300,
            tol: 1e-7,
        }
    }
}

impl MeanShiftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::invalid(format!("bad mean shift parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShiftResult {
    /// (lat, lon) of the winning mode.
    pub mode: (f64, f64),
    /// Number of input points whose trajectories end at this mode.
    pub support: usize,
    /// Iterations taken from the basin's earliest start point.
    pub iterations: usize,
}

/// Flat-kernel mean shift started from every point. Modes closer than one
/// bandwidth are one basin; the basin with the most points wins, ties going
/// to the basin containing the earliest point.
pub fn mean_shift(points: &[(f64, f64)], params: &MeanShiftParams) -> Result<MeanShiftResult> {
    if points.is_empty() {
        return Err(Error::invalid("mean shift needs at least one point"));
    }
    params.validate()?;

    // identical coordinates follow identical trajectories
    let mut uniq: Vec<((f64, f64), usize, usize)> = Vec::new(); // point, weight, first index
    {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            points[a]
                .0
                .total_cmp(&points[b].0)
                .then(points[a].1.total_cmp(&points[b].1))
                .then(a.cmp(&b))
        });
        for i in order {
            match uniq.last_mut() {
                Some((p, w, _)) if *p == points[i] => *w += 1,
                _ => uniq.push((points[i], 1, i)),
            }
        }
        uniq.sort_by_key(|u| u.2);
    }

    let h2 = params.bandwidth * params.bandwidth;
    let shift = |x: (f64, f64)| -> Option<(f64, f64)> {
        let (mut sy, mut sx, mut w) = (0.0, 0.0, 0.0);
        for &((py, px), weight, _) in &uniq {
            let (dy, dx) = (py - x.0, px - x.1);
            if dy * dy + dx * dx <= h2 {
                let wt = weight as f64;
                sy += wt * py;
                sx += wt * px;
                w += wt;
            }
        }
        (w > 0.0).then(|| (sy / w, sx / w))
    };

    struct Basin {
        mode: (f64, f64),
        support: usize,
        first: usize,
        iterations: usize,
    }
    let mut basins: Vec<Basin> = Vec::new();
    for &(start, weight, first) in &uniq {
        let mut x = start;
        let mut iterations = 0;
        while iterations < params.max_iters {
            iterations += 1;
            let Some(next) = shift(x) else { break };
            let moved = ((next.0 - x.0).powi(2) + (next.1 - x.1).powi(2)).sqrt();
            x = next;
            if moved < params.tol {
                break;
            }
        }
        let hit = basins
            .iter_mut()
            .find(|b| (b.mode.0 - x.0).powi(2) + (b.mode.1 - x.1).powi(2) <= h2);
        match hit {
            Some(b) => b.support += weight,
            None => basins.push(Basin {
                mode: x,
                support: weight,
                first,
                iterations,
            }),
        }
    }
    let best = basins
        .iter()
        .max_by(|a, b| a.support.cmp(&b.support).then(b.first.cmp(&a.first)))
        .expect("at least one basin");
    Ok(MeanShiftResult {
        mode: best.mode,
        support: best.support,
        iterations: best.iterations,
    })
}
