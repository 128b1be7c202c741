use super::geometry::{point_polyline_distance, point_segment_distance, Point};
use super::{InfrastructureImage, ScenarioError, TopologyGraph, Trajectory};

/// Pixels within this many pixel widths of a graph polyline keep their
/// infrastructure intensity in the reconstruction target.
pub const DEFAULT_MASK_HALF_WIDTH_PX: f64 = 1.0;

/// Two-channel `2 x S x S` reconstruction target (channel-major, row-major).
/// Channel 0 holds the infrastructure restricted to the graph lanes, channel
/// 1 the rasterized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionTarget {
    size: usize,
    data: Vec<f64>,
}

impl ReconstructionTarget {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self, ScenarioError> {
        if data.len() != 2 * size * size {
            return Err(ScenarioError::InvalidImage(format!(
                "target needs {} values for size {size}, got {}",
                2 * size * size,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ScenarioError::InvalidImage("target values outside [0, 1]".into()));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Renders lane centerlines into a grayscale image. A pixel's intensity falls
/// off linearly from 1 on a centerline to 0 one pixel width away.
pub fn render_lanes(
    size: usize,
    meters_per_pixel: f64,
    lanes: &[Vec<Point>],
) -> Result<InfrastructureImage, ScenarioError> {
    let mut image = InfrastructureImage::blank(size, meters_per_pixel)?;
    let m = meters_per_pixel;
    let extent = image.extent();
    let mut best = vec![f64::INFINITY; size * size];
    for lane in lanes {
        let segments: Vec<(Point, Point)> = match lane.as_slice() {
            [] => continue,
            [p] => vec![(*p, *p)],
            _ => lane.windows(2).map(|w| (w[0], w[1])).collect(),
        };
        for (a, b) in segments {
            let col_lo = ((a[0].min(b[0]) - m) / m).floor().max(0.0) as usize;
            let col_hi = ((a[0].max(b[0]) + m) / m).ceil().min(size as f64) as usize;
            let row_lo = ((extent - a[1].max(b[1]) - m) / m).floor().max(0.0) as usize;
            let row_hi = ((extent - a[1].min(b[1]) + m) / m).ceil().min(size as f64) as usize;
            for row in row_lo..row_hi {
                for col in col_lo..col_hi {
                    let d = point_segment_distance(image.pixel_center(row, col), a, b);
                    let cell = &mut best[row * size + col];
                    *cell = cell.min(d);
                }
            }
        }
    }
    image.pixels = best
        .into_iter()
        .map(|d| ((1.0 - d / m).max(0.0) as f32) as f64)
        .collect();
    Ok(image)
}

/// Grid cells (row, col) crossed by a polyline given in continuous cell
/// coordinates `[col, row]`, traversed segment by segment with an exact grid
/// walk. Cells may repeat.
pub fn rasterize_polyline_cells(size: usize, polyline: &[[f64; 2]]) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    let mut push = |r: i64, c: i64| {
        if r >= 0 && c >= 0 && (r as usize) < size && (c as usize) < size {
            cells.push((r as usize, c as usize));
        }
    };
    if let [only] = polyline {
        push(only[1].floor() as i64, only[0].floor() as i64);
    }
    for w in polyline.windows(2) {
        let ([u0, v0], [u1, v1]) = (w[0], w[1]);
        let (mut c, mut r) = (u0.floor() as i64, v0.floor() as i64);
        let (ce, re) = (u1.floor() as i64, v1.floor() as i64);
        let (nx, ny) = ((ce - c).abs(), (re - r).abs());
        let (du, dv) = (u1 - u0, v1 - v0);
        let axis = |d: f64, start: f64, cell: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((cell + 1) as f64 - start) / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, (start - cell as f64) / -d, -1.0 / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, mut tmx, tdx) = axis(du, u0, c);
        let (sy, mut tmy, tdy) = axis(dv, v0, r);
        push(r, c);
        let (mut ix, mut iy) = (0, 0);
        while ix < nx || iy < ny {
            if iy >= ny || (ix < nx && tmx < tmy) {
                c += sx;
                tmx += tdx;
                ix += 1;
            } else {
                r += sy;
                tmy += tdy;
                iy += 1;
            }
            push(r, c);
        }
    }
    cells
}

/// Builds the two-channel reconstruction target: image pixels within
/// `half_width_px` pixels of any graph lane polyline (channel 0) and the
/// cells crossed by the trajectory polyline (channel 1).
pub fn build_reconstruction_target(
    image: &InfrastructureImage,
    graph: &TopologyGraph,
    trajectory: &Trajectory,
    half_width_px: f64,
) -> Result<ReconstructionTarget, ScenarioError> {
    let s = image.size();
    let m = image.meters_per_pixel();
    let extent = image.extent();
    let mut data = vec![0.0; 2 * s * s];

    let reach = half_width_px * m;
    for row in 0..s {
        for col in 0..s {
            let i = row * s + col;
            if image.pixels()[i] == 0.0 {
                continue;
            }
            let p = image.pixel_center(row, col);
            if graph
                .vertices()
                .iter()
                .any(|v| point_polyline_distance(p, &v.polyline) <= reach)
            {
                data[i] = image.pixels()[i];
            }
        }
    }

    let mut uv = Vec::with_capacity(trajectory.len());
    for (index, [x, y]) in trajectory.positions().enumerate() {
        let (u, v) = (x / m, (extent - y) / m);
        if !(0.0..s as f64).contains(&u) || !(0.0..s as f64).contains(&v) {
            return Err(ScenarioError::OutOfFrame { index, x, y });
        }
        uv.push([u, v]);
    }
    for (row, col) in rasterize_polyline_cells(s, &uv) {
        data[s * s + row * s + col] = 1.0;
    }
    ReconstructionTarget::new(s, data)
}
