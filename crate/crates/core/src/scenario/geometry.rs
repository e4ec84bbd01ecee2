use super::{CellToken, GeoGrid, Point, ScenarioError};

/// Row-major token of the cell containing `p`. Points on the far edges
/// belong to the last row/column.
pub fn cell_index(grid: &GeoGrid, p: Point) -> Result<CellToken, ScenarioError> {
    if !grid.contains(p) {
        return Err(ScenarioError::OutOfBounds { x: p.x, y: p.y });
    }
    let col = (((p.x - grid.origin.x) / grid.resolution_m).floor() as usize).min(grid.cols() - 1);
    let row = (((p.y - grid.origin.y) / grid.resolution_m).floor() as usize).min(grid.rows() - 1);
    Ok(CellToken(row * grid.cols() + col))
}

pub fn cell_center(grid: &GeoGrid, t: CellToken) -> Result<Point, ScenarioError> {
    if !grid.is_valid_token(t) {
        return Err(ScenarioError::Invalid(format!(
            "cell token {} outside grid of {} cells",
            t.0,
            grid.cell_count()
        )));
    }
    let (row, col) = (t.0 / grid.cols(), t.0 % grid.cols());
    Ok(Point::new(
        grid.origin.x + (col as f64 + 0.5) * grid.resolution_m,
        grid.origin.y + (row as f64 + 0.5) * grid.resolution_m,
    ))
}

/// Terrain line-of-sight between two points with heights above local
/// ground. The segment is sampled every `resolution_m / 2`; any sample whose
/// cell terrain rises above the ray blocks it.
pub fn los_check(grid: &GeoGrid, a: Point, height_a: f64, b: Point, height_b: f64) -> Result<bool, ScenarioError> {
    for p in [a, b] {
        if !grid.contains(p) {
            return Err(ScenarioError::OutOfBounds { x: p.x, y: p.y });
        }
    }
    let Some(terrain) = &grid.terrain_height else {
        return Ok(true);
    };
    // canonical order makes the sampled points identical for (a,b) and (b,a)
    let (a, ha, b, hb) = if (a.x, a.y, height_a) <= (b.x, b.y, height_b) {
        (a, height_a, b, height_b)
    } else {
        (b, height_b, a, height_a)
    };
    let za = grid.terrain_at(a) + ha;
    let zb = grid.terrain_at(b) + hb;
    let dist = a.dist(b);
    let n = (dist / (grid.resolution_m / 2.0)).ceil() as usize;
    for k in 1..n {
        let t = k as f64 / n as f64;
        let p = a.lerp(b, t);
        let ray = za + (zb - za) * t;
        let cell = cell_index(grid, p)?;
        if terrain[cell.0] > ray {
            return Ok(false);
        }
    }
    Ok(true)
}
