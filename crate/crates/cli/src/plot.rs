use std::fmt::Write as _;
use std::path::Path;

use equivcnp::data::{read_pgm, read_task, write_pgm, TaskDump};
use equivcnp::experiment::{stream_rng, streams};
use equivcnp::model::EquivCnp;
use equivcnp::task::TaskSet;
use equivcnp::Error;

use crate::Failure;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const PAD: f64 = 40.0;
const GRID_POINTS: usize = 400;

/// Renders a 1D task dump as SVG, or tiles the PGMs of a completion
/// directory (context, truth, mean) side by side.
pub fn plot(input: &Path, out: &Path, checkpoint: Option<&Path>) -> Result<(), Failure> {
    if input.is_dir() {
        return tile(input, out);
    }
    let dump = read_task(input)?;
    if dump.input_dim != 1 {
        return Err(Error::Config(format!(
            "{}: only 1D task dumps can be plotted as SVG",
            input.display()
        ))
        .into());
    }
    let model = checkpoint.map(EquivCnp::load).transpose()?;
    let svg = render_svg(&dump, model.as_ref())?;
    std::fs::write(out, svg).map_err(Error::from)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn tile(dir: &Path, out: &Path) -> Result<(), Failure> {
    let mut panels = Vec::new();
    for name in ["context.pgm", "truth.pgm", "mean.pgm"] {
        panels.push(read_pgm(dir.join(name))?);
    }
    let (w, h) = (panels[0].0, panels[0].1);
    if panels.iter().any(|p| p.0 != w || p.1 != h) {
        return Err(Error::Format(format!("{}: panels differ in size", dir.display())).into());
    }
    let gap = 2;
    let total_w = 3 * w + 2 * gap;
    let mut pixels = vec![1.0; total_w * h];
    for (k, (_, _, vals)) in panels.iter().enumerate() {
        let x0 = k * (w + gap);
        for r in 0..h {
            pixels[r * total_w + x0..r * total_w + x0 + w].copy_from_slice(&vals[r * w..(r + 1) * w]);
        }
    }
    write_pgm(out, total_w, h, &pixels)?;
    println!("wrote {}", out.display());
    Ok(())
}

struct Frame {
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x[0]) / (self.x[1] - self.x[0]) * (WIDTH - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - PAD - (y - self.y[0]) / (self.y[1] - self.y[0]) * (HEIGHT - 2.0 * PAD)
    }
}

fn parse_range(s: Option<&str>) -> Option<[f64; 2]> {
    let (a, b) = s?.split_once(',')?;
    Some([a.parse().ok()?, b.parse().ok()?])
}

fn render_svg(dump: &TaskDump, model: Option<&EquivCnp>) -> Result<String, Error> {
    let task = &dump.task;
    let xs: Vec<f64> = task.context_x.iter().chain(&task.target_x).map(|p| p[0]).collect();
    let x_range = parse_range(dump.get("x_range")).unwrap_or_else(|| {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        [lo, hi]
    });

    let band = match model {
        Some(m) => {
            let grid: Vec<f64> = (0..GRID_POINTS)
                .map(|i| x_range[0] + (x_range[1] - x_range[0]) * i as f64 / (GRID_POINTS - 1) as f64)
                .collect();
            let query = TaskSet::new(
                1,
                task.context_x.clone(),
                task.context_y.clone(),
                grid.iter().map(|&x| [x, 0.0]).collect(),
                None,
            )?;
            let pred = m.predict(&query, &mut stream_rng(0, streams::EVAL, 0))?;
            Some((grid, pred.mu.data().to_vec(), pred.sigma.data().to_vec()))
        }
        None => None,
    };

    let mut ys: Vec<f64> = task.context_y.clone();
    if let Some(t) = &task.target_y {
        ys.extend(t);
    }
    if let Some((_, mu, sd)) = &band {
        ys.extend(mu.iter().zip(sd).flat_map(|(m, s)| [m - 2.0 * s, m + 2.0 * s]));
    }
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let margin = 0.05 * (hi - lo).max(1e-6);
    let f = Frame {
        x: if x_range[1] > x_range[0] { x_range } else { [x_range[0] - 1.0, x_range[0] + 1.0] },
        y: [lo - margin, hi + margin],
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * PAD,
        HEIGHT - 2.0 * PAD
    );
    if let Some(tr) = parse_range(dump.get("train_range")) {
        for x in tr {
            if x > f.x[0] && x < f.x[1] {
                let _ = writeln!(
                    s,
                    r#"<line class="train-range" x1="{0:.2}" y1="{PAD}" x2="{0:.2}" y2="{1}" stroke="gray" stroke-dasharray="6,4"/>"#,
                    f.px(x),
                    HEIGHT - PAD
                );
            }
        }
    }
    if let Some((grid, mu, sd)) = &band {
        let upper = grid.iter().zip(mu.iter().zip(sd)).map(|(&x, (m, s))| (x, m + 2.0 * s));
        let lower = grid.iter().zip(mu.iter().zip(sd)).rev().map(|(&x, (m, s))| (x, m - 2.0 * s));
        let pts: Vec<String> = upper
            .chain(lower)
            .map(|(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
            pts.join(" ")
        );
        let line: Vec<String> = grid
            .iter()
            .zip(mu)
            .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            line.join(" ")
        );
    }
    if let Some(ty) = &task.target_y {
        let mut pairs: Vec<(f64, f64)> = task.target_x.iter().map(|p| p[0]).zip(ty.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let line: Vec<String> = pairs
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="targets" points="{}" fill="none" stroke="black" stroke-dasharray="2,2"/>"#,
            line.join(" ")
        );
    }
    for (p, &y) in task.context_x.iter().zip(&task.context_y) {
        let _ = writeln!(
            s,
            r#"<circle class="context" cx="{:.2}" cy="{:.2}" r="4" fill="crimson"/>"#,
            f.px(p[0]),
            f.py(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="12" font-family="sans-serif">x in [{}, {}]</text>"#,
        PAD - 10.0,
        f.x[0],
        f.x[1]
    );
    s.push_str("</svg>\n");
    Ok(s)
}
