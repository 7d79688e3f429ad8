//! Grid evaluation of a fitted model's vanishing polynomials over a 2-d
//! window, for rendering zero-level sets externally. CSV output writes the
//! knots to a sibling file; JSON bundles everything in one document.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KnotModel;
use crate::poly::PointValues;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid_config(format!(
                "unknown format {other:?}; expected csv or json"
            ))),
        }
    }
}

/// Evaluations of every vanishing polynomial over a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    /// (x_min, x_max, y_min, y_max)
    pub bounds: (f64, f64, f64, f64),
    pub resolution: usize,
    /// Column labels of the form g{degree}_{index}.
    pub poly_names: Vec<String>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// values[p][iy][ix] is polynomial p at (xs[ix], ys[iy]).
    pub values: Vec<Vec<Vec<f64>>>,
    pub knots: Vec<Vec<f64>>,
}

pub fn build_contour_grid(
    model: &KnotModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<ContourGrid> {
    if model.dim() != 2 {
        return Err(Error::invalid_config(format!(
            "contour grids need a 2-d model, got {}-d",
            model.dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::invalid_config(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    let (x0, x1, y0, y1) = bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::invalid_config(format!(
            "degenerate bounds {bounds:?}"
        )));
    }
    let reg = &model.registry;
    let refs: Vec<(usize, usize)> = (0..=reg.top_degree())
        .flat_map(|d| (0..reg.g_layer(d).len()).map(move |i| (d, i)))
        .collect();
    let poly_names = refs.iter().map(|(d, i)| format!("g{d}_{i}")).collect();
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let xs: Vec<f64> = (0..resolution).map(|i| step(x0, x1, i)).collect();
    let ys: Vec<f64> = (0..resolution).map(|i| step(y0, y1, i)).collect();
    let mut values = vec![vec![vec![0.0; resolution]; resolution]; refs.len()];
    let mut buf = PointValues::compute(reg, &DVector::from_vec(vec![xs[0], ys[0]]))?;
    let mut point = DVector::zeros(2);
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            point[0] = x;
            point[1] = y;
            buf.recompute(reg, &point)?;
            for (p, &(d, i)) in refs.iter().enumerate() {
                values[p][iy][ix] = buf.g[d][i];
            }
        }
    }
    let knots = (0..model.knots.len())
        .map(|i| model.knots.point(i).iter().copied().collect())
        .collect();
    Ok(ContourGrid {
        bounds,
        resolution,
        poly_names,
        xs,
        ys,
        values,
        knots,
    })
}

/// CSV layout: header `x,y,<poly...>`, one row per grid node (y-major, x
/// fastest), resolution^2 rows; knots go to `<path>.knots.csv`.
pub fn write_contour_grid(grid: &ContourGrid, format: OutputFormat, path: &Path) -> Result<()> {
    match format {
        OutputFormat::Json => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(serde_json::to_string_pretty(grid)?.as_bytes())?;
            f.write_all(b"\n")?;
        }
        OutputFormat::Csv => {
            let mut f = std::fs::File::create(path)?;
            writeln!(f, "x,y,{}", grid.poly_names.join(","))?;
            for (iy, &y) in grid.ys.iter().enumerate() {
                for (ix, &x) in grid.xs.iter().enumerate() {
                    write!(f, "{x},{y}")?;
                    for p in 0..grid.values.len() {
                        write!(f, ",{}", grid.values[p][iy][ix])?;
                    }
                    writeln!(f)?;
                }
            }
            let knot_path = {
                let mut s = path.as_os_str().to_owned();
                s.push(".knots.csv");
                std::path::PathBuf::from(s)
            };
            let mut kf = std::fs::File::create(knot_path)?;
            writeln!(kf, "x,y")?;
            for k in &grid.knots {
                writeln!(kf, "{},{}", k[0], k[1])?;
            }
        }
    }
    Ok(())
}

pub fn export_contour_grid(
    model: &KnotModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
    format: OutputFormat,
    path: &Path,
) -> Result<()> {
    write_contour_grid(&build_contour_grid(model, bounds, resolution)?, format, path)
}
