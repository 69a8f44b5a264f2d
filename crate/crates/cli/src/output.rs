//! Artifact emission. Every file starts with (CSV) or contains (JSON) the
//! manifest hash, and `manifest.json` lists everything written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Hash identifying one run: the subcommand plus the effective config with
/// the output directory removed, so relocating a run does not change bytes.
pub fn manifest_hash(subcommand: &str, cfg: &ExperimentConfig) -> String {
    let mut hashed = cfg.clone();
    hashed.out_dir = None;
    let digest = Sha256::digest(format!("{subcommand}\n{}", hashed.to_toml()).as_bytes());
    hex(&digest)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Shortest representation that round-trips, with an exponent for very
/// small or large magnitudes; negative zero prints as `0.0`.
pub fn num(v: f64) -> String {
    format!("{:?}", v + 0.0)
}

/// The single writer of a run's output directory.
pub struct Output {
    dir: PathBuf,
    hash: String,
    plot: bool,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path, hash: String, plot: bool) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash, plot, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: String) -> io::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// A CSV table preceded by a `# manifest=<hash>` comment line.
    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        R: IntoIterator<Item = String>,
        I: IntoIterator<Item = R>,
    {
        let mut body = format!("# manifest={}\n{}\n", self.hash, header.join(","));
        for row in rows {
            body.push_str(&row.into_iter().collect::<Vec<_>>().join(","));
            body.push('\n');
        }
        self.write(name, body)
    }

    /// A sampled path: one `dt,horizon,seed,replication` header row, then
    /// the values one per line.
    pub fn path_csv(
        &mut self,
        name: &str,
        dt: f64,
        horizon: f64,
        seed: u64,
        replication: usize,
        values: &[f64],
    ) -> io::Result<()> {
        let mut body = format!(
            "# manifest={}\ndt,horizon,seed,replication\n{},{},{seed},{replication}\nvalue\n",
            self.hash,
            num(dt),
            num(horizon)
        );
        for &v in values {
            body.push_str(&num(v));
            body.push('\n');
        }
        self.write(name, body)
    }

    /// Pretty JSON with a `manifest_hash` key added to the top-level object.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(io::Error::other)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("manifest_hash".into(), Value::String(self.hash.clone()));
            }
            other => {
                v = json!({ "manifest_hash": self.hash, "value": other.take() });
            }
        }
        let mut body = serde_json::to_string_pretty(&v).map_err(io::Error::other)?;
        body.push('\n');
        self.write(name, body)
    }

    /// An `x,y` series under `plot/`, only with `--emit-plot-data`.
    pub fn plot(&mut self, name: &str, xs: &[f64], ys: &[f64]) -> io::Result<()> {
        if !self.plot {
            return Ok(());
        }
        let rows = xs.iter().zip(ys).map(|(&x, &y)| [num(x), num(y)]);
        self.csv(&format!("plot/{name}.csv"), &["x", "y"], rows)
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(
        mut self,
        subcommand: &str,
        cfg: &ExperimentConfig,
        status: &str,
        summary: Value,
    ) -> io::Result<PathBuf> {
        let mut params = cfg.clone();
        params.out_dir = None;
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "config_hash": params.content_hash(),
            "params": params,
            "tolerances": cfg.tolerances,
            "status": status,
            "summary": summary,
            "files": self.files,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.dir.join("manifest.json"))
    }
}
