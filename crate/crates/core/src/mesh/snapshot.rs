//! Field snapshots: a `#`-prefixed plain-text header followed by a CSV body
//! with one row per node (`node,c0,c1,...`).

use super::grid::Grid;
use crate::error::{PhcmError, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: String,
    /// Free-form kind tag, e.g. `covector-valued 1-form`.
    pub kind: String,
    pub step: usize,
    pub t: f64,
    pub dims: [usize; 3],
    pub comps: usize,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn new(grid: &Grid, field: &str, kind: &str, step: usize, t: f64, comps: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * comps {
            return Err(PhcmError::Dimension { expected: grid.len() * comps, got: values.len() });
        }
        Ok(Snapshot { field: field.into(), kind: kind.into(), step, t, dims: grid.dims(), comps, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# field: {}", self.field)?;
        writeln!(f, "# kind: {}", self.kind)?;
        writeln!(f, "# step: {}", self.step)?;
        writeln!(f, "# t: {:e}", self.t)?;
        writeln!(f, "# dims: {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(f, "# components: {}", self.comps)?;
        let header: Vec<String> = std::iter::once("node".to_string()).chain((0..self.comps).map(|c| format!("c{c}"))).collect();
        writeln!(f, "{}", header.join(","))?;
        let nodes = self.values.len() / self.comps.max(1);
        for node in 0..nodes {
            write!(f, "{node}")?;
            for c in 0..self.comps {
                write!(f, ",{:e}", self.values[node * self.comps + c])?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let mut snap = Snapshot { field: String::new(), kind: String::new(), step: 0, t: 0.0, dims: [1; 3], comps: 0, values: Vec::new() };
        let bad = |m: &str| PhcmError::Config { field: path.display().to_string(), msg: m.to_string() };
        let mut body = Vec::new();
        for line in lines.by_ref() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, val) = rest.split_once(": ").ok_or_else(|| bad("malformed header"))?;
                match key {
                    "field" => snap.field = val.into(),
                    "kind" => snap.kind = val.into(),
                    "step" => snap.step = val.parse().map_err(|_| bad("step"))?,
                    "t" => snap.t = val.parse().map_err(|_| bad("t"))?,
                    "dims" => {
                        let d: Vec<usize> = val.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                        if d.len() != 3 {
                            return Err(bad("dims"));
                        }
                        snap.dims = [d[0], d[1], d[2]];
                    }
                    "components" => snap.comps = val.parse().map_err(|_| bad("components"))?,
                    _ => {}
                }
            } else {
                body.push(line);
                break;
            }
        }
        body.extend(lines.map_while(|l| l.ok()));
        let text = body.join("\n");
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            for c in 0..snap.comps {
                let v: f64 = rec.get(c + 1).ok_or_else(|| bad("short row"))?.trim().parse().map_err(|_| bad("number"))?;
                snap.values.push(v);
            }
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = Grid::periodic(&[4, 5], &[1.0, 1.0]).unwrap();
        let vals: Vec<f64> = (0..g.len() * 2).map(|i| i as f64 * 0.1 - 1.0 / 3.0).collect();
        let s = Snapshot::new(&g, "m", "covector-valued 2-form", 3, 0.25, 2, vals).unwrap();
        let dir = std::env::temp_dir().join(format!("phcm-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.csv");
        s.write(&p).unwrap();
        let r = Snapshot::read(&p).unwrap();
        assert_eq!(r, s);
        std::fs::remove_dir_all(dir).ok();
    }
}
