use crate::error::{Error, Result};
use crate::volume::{Grid, LabelMap, Orientation, Volume3D};

/// For each output axis: the input axis it reads from and whether it is reversed.
struct AxisPlan {
    source: [usize; 3],
    flip: [bool; 3],
}

fn plan(grid: &Grid, target: Orientation) -> Result<(Grid, AxisPlan)> {
    let current = grid.orientation()?.axes();
    let wanted = target.axes();
    let mut source = [0usize; 3];
    let mut flip = [false; 3];
    for t in 0..3 {
        let s = (0..3)
            .find(|&s| current[s].axis() == wanted[t].axis())
            .ok_or_else(|| Error::Argument(format!("cannot reorient to {target}")))?;
        source[t] = s;
        flip[t] = current[s] != wanted[t];
    }

    let old = grid.affine();
    let old_dims = grid.dims();
    let mut affine = *old;
    let mut dims = [0usize; 3];
    for t in 0..3 {
        let s = source[t];
        dims[t] = old_dims[s];
        let sign = if flip[t] { -1.0 } else { 1.0 };
        for r in 0..3 {
            affine[r][t] = sign * old[r][s];
        }
    }
    for r in 0..3 {
        affine[r][3] = old[r][3]
            + (0..3)
                .filter(|&t| flip[t])
                .map(|t| old[r][source[t]] * (old_dims[source[t]] - 1) as f64)
                .sum::<f64>();
    }
    Ok((Grid::new(dims, affine)?, AxisPlan { source, flip }))
}

fn permute<T: Copy>(old: &Grid, data: &[T], new: &Grid, plan: &AxisPlan) -> Vec<T> {
    let nd = new.dims();
    let od = old.dims();
    let mut out = Vec::with_capacity(data.len());
    for k in 0..nd[2] {
        for j in 0..nd[1] {
            for i in 0..nd[0] {
                let idx = [i, j, k];
                let mut src = [0usize; 3];
                for t in 0..3 {
                    let s = plan.source[t];
                    src[s] = if plan.flip[t] { od[s] - 1 - idx[t] } else { idx[t] };
                }
                out.push(data[old.index(src[0], src[1], src[2])]);
            }
        }
    }
    out
}

/// Pure axis permutation and flip; every voxel keeps its world position.
pub fn reorient(vol: &Volume3D, target: Orientation) -> Result<Volume3D> {
    let (grid, plan) = plan(vol.grid(), target)?;
    let data = permute(vol.grid(), vol.data(), &grid, &plan);
    Volume3D::new(grid, data, vol.dtype())
}

pub fn reorient_labels(map: &LabelMap, target: Orientation) -> Result<LabelMap> {
    let (grid, plan) = plan(map.grid(), target)?;
    let data = permute(map.grid(), map.data(), &grid, &plan);
    LabelMap::new(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{diagonal_affine, DataType};

    fn sample() -> Volume3D {
        let mut a = diagonal_affine([0.8, 1.0, 1.5]);
        a[0][3] = -10.0;
        a[1][3] = 4.0;
        a[2][3] = 7.5;
        let g = Grid::new([3, 4, 5], a).unwrap();
        Volume3D::new(g, (0..60).map(f64::from).collect(), DataType::Float32).unwrap()
    }

    #[test]
    fn same_orientation_is_identity() {
        let v = sample();
        let o = v.grid().orientation().unwrap();
        assert_eq!(reorient(&v, o).unwrap(), v);
    }

    #[test]
    fn round_trip_through_lpi() {
        let v = sample();
        let o = v.grid().orientation().unwrap();
        let there = reorient(&v, Orientation::LPI).unwrap();
        assert_eq!(there.grid().orientation().unwrap(), Orientation::LPI);
        assert_eq!(reorient(&there, o).unwrap(), v);
    }

    // Oracle: map the marked voxel's index through both affines directly.
    #[test]
    fn marked_voxel_keeps_world_position_for_every_code() {
        let v = sample();
        let marked = [2usize, 1, 3];
        let g = v.grid();
        let p = g.voxel_to_world(marked.map(|x| x as f64));
        let mut data = vec![0.0; g.len()];
        data[g.index(marked[0], marked[1], marked[2])] = 1.0;
        let v = Volume3D::new(g.clone(), data, DataType::Float32).unwrap();
        for code in Orientation::all() {
            let r = reorient(&v, code).unwrap();
            assert_eq!(r.grid().orientation().unwrap(), code);
            let idx = r.data().iter().position(|&x| x == 1.0).unwrap();
            let c = r.grid().coords(idx).map(|x| x as f64);
            let q = r.grid().voxel_to_world(c);
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-9, "{code}: {p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn invalid_code_is_argument_error() {
        assert!(matches!("RRS".parse::<Orientation>(), Err(Error::Argument(_))));
        assert!(matches!("XYZ".parse::<Orientation>(), Err(Error::Argument(_))));
    }
}
