//! One meta-learning task: a context set and the locations to predict.

use crate::error::{dim_err, Result};
use crate::lie::Point;

/// Context pairs and targets. Outputs are stored row-major, `y_dim` values per
/// location. One-dimensional inputs use component 0 of each [`Point`].
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    pub y_dim: usize,
    pub context_x: Vec<Point<f64>>,
    pub context_y: Vec<f64>,
    pub target_x: Vec<Point<f64>>,
    pub target_y: Option<Vec<f64>>,
}

impl TaskSet {
    pub fn new(
        y_dim: usize,
        context_x: Vec<Point<f64>>,
        context_y: Vec<f64>,
        target_x: Vec<Point<f64>>,
        target_y: Option<Vec<f64>>,
    ) -> Result<Self> {
        let t = Self {
            y_dim,
            context_x,
            context_y,
            target_x,
            target_y,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y_dim == 0 {
            return Err(dim_err!("outputs need at least one dimension"));
        }
        if self.context_y.len() != self.context_x.len() * self.y_dim {
            return Err(dim_err!(
                "{} context outputs for {} locations of dimension {}",
                self.context_y.len(),
                self.context_x.len(),
                self.y_dim
            ));
        }
        if let Some(ty) = &self.target_y {
            if ty.len() != self.target_x.len() * self.y_dim {
                return Err(dim_err!(
                    "{} target outputs for {} locations of dimension {}",
                    ty.len(),
                    self.target_x.len(),
                    self.y_dim
                ));
            }
        }
        Ok(())
    }

    pub fn num_context(&self) -> usize {
        self.context_x.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_x.len()
    }

    /// Output vector of context point `i`.
    pub fn context_output(&self, i: usize) -> &[f64] {
        &self.context_y[i * self.y_dim..(i + 1) * self.y_dim]
    }

    /// The same task with the context reordered by `perm` (`perm[k]` is the old index).
    pub fn permute_context(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.context_x = perm.iter().map(|&i| self.context_x[i]).collect();
        out.context_y = perm
            .iter()
            .flat_map(|&i| self.context_output(i).iter().copied())
            .collect();
        out
    }

    /// Every location shifted by `c`.
    pub fn translated(&self, c: Point<f64>) -> Self {
        let shift = |p: &Point<f64>| [p[0] + c[0], p[1] + c[1]];
        let mut out = self.clone();
        out.context_x = self.context_x.iter().map(shift).collect();
        out.target_x = self.target_x.iter().map(shift).collect();
        out
    }
}

/// Centers of an `h x w` pixel lattice mapped into `[-1, 1]^2`, row-major with
/// row 0 at the top: `x = (2c + 1) / w - 1`, `y = 1 - (2r + 1) / h`. No center
/// falls on the origin.
pub fn pixel_coords(h: usize, w: usize) -> Vec<Point<f64>> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push([
                (2 * c + 1) as f64 / w as f64 - 1.0,
                1.0 - (2 * r + 1) as f64 / h as f64,
            ]);
        }
    }
    out
}

/// An image with its context mask; every pixel is a target.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageObservation {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `C x H x W`, channel-major.
    pub pixels: Vec<f64>,
    /// `H x W` of 0/1.
    pub mask: Vec<f64>,
}

impl ImageObservation {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f64>, mask: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if channels == 0 || n == 0 || pixels.len() != channels * n || mask.len() != n {
            return Err(dim_err!(
                "image of {} values and mask of {} for {channels} x {height} x {width}",
                pixels.len(),
                mask.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            pixels,
            mask,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Pixel values as `N x C` rows (the target outputs).
    pub fn target_rows(&self) -> Vec<f64> {
        let n = self.num_pixels();
        (0..n)
            .flat_map(|p| (0..self.channels).map(move |c| self.pixels[c * n + p]))
            .collect()
    }

    /// The same observation as a point task: masked pixels are the context.
    pub fn to_task_set(&self) -> TaskSet {
        let coords = pixel_coords(self.height, self.width);
        let rows = self.target_rows();
        let c = self.channels;
        let mut context_x = Vec::new();
        let mut context_y = Vec::new();
        for (p, &m) in self.mask.iter().enumerate() {
            if m != 0.0 {
                context_x.push(coords[p]);
                context_y.extend_from_slice(&rows[p * c..(p + 1) * c]);
            }
        }
        TaskSet {
            y_dim: c,
            context_x,
            context_y,
            target_x: coords,
            target_y: Some(rows),
        }
    }
}
