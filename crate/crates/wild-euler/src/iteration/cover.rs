use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::SubsolutionField;
use super::IterationError;
use crate::perturbation::ball_volume;

/// One selected ball with the state sampled at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverBall {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Time slice of the center node.
    pub slice: usize,
    /// Flat state at the base point (the center node).
    pub base: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub balls: Vec<CoverBall>,
    /// 2·Σ_j dens(c_j)·|B_{r_j}|.
    pub achieved: f64,
    /// ∫ dens over the nodes off the boundary layer.
    pub required: f64,
}

/// Ratio between consecutive radius levels.
const RADIUS_DECAY: f64 = 0.9;
/// Smallest admissible radius in cells.
const MIN_RADIUS_CELLS: f64 = 1.0;
/// Relative jitter of the deficit ranking; it is what distinguishes seeds.
const RANK_JITTER: f64 = 0.25;

/// Greedy disjoint balls inside O centered on grid nodes ranked by deficit
/// density, until 2·Σ dens(c_j)|B_{r_j}| ≥ ∫ dens over the non-boundary nodes.
///
/// Every node carries the radius of the largest ball around it that stays in
/// O and misses the balls chosen so far. Radius levels decrease geometrically;
/// at each level the nodes whose free radius reaches it are visited in ranked
/// order and receive the largest ball that fits, capped by the level above.
pub fn select_cover(field: &SubsolutionField, r_max: f64, seed: u64) -> Result<Cover, IterationError> {
    let g = &field.grid;
    let d = g.dim();
    let h = g.spacing();
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    if !(r_max > hmax) {
        return Err(IterationError::Config(format!(
            "r_max = {r_max} is below one grid cell ({hmax})"
        )));
    }
    let lengths = g.lengths();
    let shape = g.shape();
    let cell = g.cell_volume();
    let nodes = g.node_count();
    // Boundary-layer nodes are pinned to zero by the support invariant and
    // cannot be reached by any ball, so the integral runs over the rest.
    let dens: Vec<f64> =
        (0..nodes).map(|i| if g.is_boundary(i) { 0.0 } else { field.deficit_density(i).max(0.0) }).collect();
    let required: f64 = dens.iter().sum::<f64>() * cell;

    // Balls keep half a cell from ∂O so the boundary layer of nodes stays zero.
    let mut free: Vec<f64> = (0..nodes)
        .map(|i| {
            let y = g.coords(i);
            (0..d)
                .map(|a| (y[a] - 0.5 * h[a]).min(lengths[a] - 0.5 * h[a] - y[a]))
                .fold(r_max, f64::min)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(f64, usize)> = dens
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (w * (1.0 + RANK_JITTER * rng.gen::<f64>()), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut balls: Vec<CoverBall> = Vec::new();
    let mut achieved = 0.0;
    let r_min = MIN_RADIUS_CELLS * hmax;
    let mut cap = r_max;
    let mut level = r_max * RADIUS_DECAY;
    let mut m = vec![0usize; d];
    'levels: while level >= r_min {
        for &(_, idx) in &order {
            if free[idx] < level {
                continue;
            }
            let r = free[idx].min(cap) * (1.0 - 1e-9);
            let c = g.coords(idx);
            let it = g.time_index(idx);
            balls.push(CoverBall { center: c.clone(), radius: r, slice: it, base: field.node(idx).to_vec() });
            achieved += 2.0 * dens[idx] * ball_volume(d, r);
            if achieved >= required {
                break 'levels;
            }
            // Shrink the free radius of every node that could host a ball
            // touching this one.
            let reach = r + r_max;
            let lo: Vec<usize> = (0..d).map(|a| (((c[a] - reach) / h[a] - 0.5).floor().max(0.0)) as usize).collect();
            let hi: Vec<usize> =
                (0..d).map(|a| ((((c[a] + reach) / h[a] - 0.5).ceil() as usize) + 1).min(shape[a])).collect();
            m.copy_from_slice(&lo);
            loop {
                let j = g.linear_index(&m);
                let dist: f64 = (0..d).map(|a| ((m[a] as f64 + 0.5) * h[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                free[j] = free[j].min(dist - r);
                let mut a = 0;
                loop {
                    m[a] += 1;
                    if m[a] < hi[a] {
                        break;
                    }
                    m[a] = lo[a];
                    a += 1;
                    if a == d {
                        break;
                    }
                }
                if a == d {
                    break;
                }
            }
        }
        cap = level;
        level *= RADIUS_DECAY;
    }
    if achieved < required {
        return Err(IterationError::CoverFailed { achieved, required });
    }
    Ok(Cover { balls, achieved, required })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iteration::field::{Grid, HProfile};

    #[test]
    fn zero_field_cover_reaches_half_volume() {
        let g = Grid::new(2, vec![1.0, 1.0], 1.0, 32, 32).unwrap();
        let f = SubsolutionField::zeros(g.clone(), &HProfile::default()).unwrap();
        let cover = select_cover(&f, 0.25, 1).unwrap();
        // Uniform density: the balls must cover half the interior (non-boundary) volume.
        let interior = (0..g.node_count()).filter(|&i| !g.is_boundary(i)).count() as f64 * g.cell_volume();
        let vol: f64 = cover.balls.iter().map(|b| ball_volume(3, b.radius)).sum();
        assert!(2.0 * vol >= interior - 1e-12);
        assert!(interior < g.volume());
        for (i, a) in cover.balls.iter().enumerate() {
            for b in &cover.balls[i + 1..] {
                let d2: f64 = a.center.iter().zip(&b.center).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(d2.sqrt() >= a.radius + b.radius - 1e-12);
            }
        }
        assert!(select_cover(&f, 0.01, 1).is_err());
    }
}
