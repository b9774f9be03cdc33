//! Speed-density curves for the two reference figures.
//!
//! * `fig1`: Laplace target with rate 1, λ = 1/2, start 0, one curve per
//!   `W ∈ {0.25, 0.5, 1, 1.5, 2}` on `[-4, 4]`. The `W = 2` curve is
//!   Brownian motion (`ν ≡ 1`).
//! * `fig2`: uniform target on `[-1, 1]`, λ = 1/2, `W = 1`, one curve per
//!   start `X0 ∈ {0, 1/2, -1}`. The `X0 = -1` curve starts at the left end
//!   and uses the call branch throughout.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::measure::TargetMeasure;
use crate::synthesis::synthesize;

/// Columns sharing one abscissa.
#[derive(Debug, Clone)]
pub struct FigureData {
    pub headers: Vec<String>,
    pub x: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl FigureData {
    pub fn column(&self, header: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == header).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x");
        for h in &self.headers {
            out.push(',');
            out.push_str(h);
        }
        out.push('\n');
        for (i, &x) in self.x.iter().enumerate() {
            out.push_str(&fmt_f64(x));
            for c in &self.columns {
                let _ = write!(out, ",{}", fmt_f64(c[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Grid `k / 100` for `k` in `from..=to`, exact at the integers.
fn centi_grid(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| k as f64 / 100.0).collect()
}

pub fn figure_data(id: &str) -> Result<FigureData> {
    match id {
        "fig1" => {
            let mu = TargetMeasure::laplace(1.0)?;
            let x = centi_grid(-400, 400);
            let ws = [0.25, 0.5, 1.0, 1.5, 2.0];
            let mut columns = Vec::new();
            for &w in &ws {
                let m = synthesize(&mu, 0.0, 0.5, w)?;
                columns.push(x.iter().map(|&v| m.speed_density(v)).collect());
            }
            Ok(FigureData { headers: ws.iter().map(|w| format!("W={w}")).collect(), x, columns })
        }
        "fig2" => {
            let mu = TargetMeasure::uniform(-1.0, 1.0)?;
            let x = centi_grid(-100, 100);
            let starts = [0.0, 0.5, -1.0];
            let mut columns = Vec::new();
            for &x0 in &starts {
                let m = synthesize(&mu, x0, 0.5, 1.0)?;
                columns.push(x.iter().map(|&v| m.speed_density(v)).collect());
            }
            Ok(FigureData { headers: starts.iter().map(|s| format!("X0={s}")).collect(), x, columns })
        }
        other => Err(Error::UnknownFigure(other.to_string())),
    }
}
