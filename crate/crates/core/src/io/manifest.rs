//! CSV manifests tying PFM files to their render provenance.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::math::theta_key;

use super::pfm::read_pfm;

pub const MANIFEST_HEADER: [&str; 5] = ["path", "theta", "spp", "seed", "role"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Primary,
    Perturbed,
    GradientPlus,
    GradientMinus,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Primary => "primary",
            Role::Perturbed => "perturbed",
            Role::GradientPlus => "gradient-plus",
            Role::GradientMinus => "gradient-minus",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "primary" => Role::Primary,
            "perturbed" => Role::Perturbed,
            "gradient-plus" => Role::GradientPlus,
            "gradient-minus" => Role::GradientMinus,
            other => return Err(Error::Manifest(format!("unknown role `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub theta: Vec<f64>,
    pub spp: u32,
    pub seed: u64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    pub row: ManifestRow,
    pub image: RadianceImage,
}

#[derive(Serialize, Deserialize)]
struct RawRow {
    path: String,
    theta: String,
    spp: u32,
    seed: u64,
    role: String,
}

fn encode_theta(theta: &[f64]) -> String {
    // `{}` on f64 prints the shortest string that parses back to the same bits
    theta
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_theta(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Manifest(format!("row {line}: bad theta component `{t}`")))
        })
        .collect()
}

fn check_rows(rows: &[ManifestRow]) -> Result<()> {
    let mut paths = HashSet::new();
    let dim = rows.first().map(|r| r.theta.len());
    for (i, r) in rows.iter().enumerate() {
        if !paths.insert(&r.path) {
            return Err(Error::Manifest(format!(
                "row {}: duplicate path {}",
                i + 1,
                r.path.display()
            )));
        }
        if Some(r.theta.len()) != dim || r.theta.is_empty() {
            return Err(Error::Manifest(format!(
                "row {}: theta has {} components, expected {}",
                i + 1,
                r.theta.len(),
                dim.unwrap_or(0)
            )));
        }
        if r.spp == 0 {
            return Err(Error::Manifest(format!("row {}: spp must be ≥ 1", i + 1)));
        }
    }
    Ok(())
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    check_rows(rows)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.serialize(RawRow {
            path: r.path.to_string_lossy().replace('\\', "/"),
            theta: encode_theta(&r.theta),
            spp: r.spp,
            seed: r.seed,
            role: r.role.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Manifest(format!(
            "header must be `{}`",
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let raw = rec.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?;
        rows.push(ManifestRow {
            path: PathBuf::from(raw.path),
            theta: decode_theta(&raw.theta, i + 1)?,
            spp: raw.spp,
            seed: raw.seed,
            role: raw.role.parse()?,
        });
    }
    check_rows(&rows)?;
    Ok(rows)
}

/// Loads every image named by the manifest, in manifest order.
///
/// Each image's `meta` is filled from its row. All images must share one
/// shape and no two rows may repeat a (θ, spp, seed) triple.
pub fn load_stack(manifest: impl AsRef<Path>) -> Result<Vec<StackEntry>> {
    let manifest = manifest.as_ref();
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let rows = read_manifest(manifest)?;
    let mut seen = HashSet::new();
    let mut out: Vec<StackEntry> = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert((theta_key(&row.theta), row.spp, row.seed)) {
            return Err(Error::Manifest(format!(
                "duplicate (theta, spp, seed) = ({:?}, {}, {})",
                row.theta, row.spp, row.seed
            )));
        }
        let mut image = read_pfm(dir.join(&row.path))?;
        if let Some(first) = out.first() {
            first.image.ensure_same_shape(&image)?;
        }
        image.meta.theta = row.theta.clone();
        image.meta.spp = row.spp;
        image.meta.seed = row.seed;
        out.push(StackEntry { row, image });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_pfm;

    fn row(path: &str, theta: Vec<f64>, seed: u64) -> ManifestRow {
        ManifestRow {
            path: path.into(),
            theta,
            spp: 4,
            seed,
            role: Role::Primary,
        }
    }

    #[test]
    fn theta_encoding_is_exact() {
        let t = vec![0.1 + 0.2, -1e-300, 12345.678901234567];
        assert_eq!(decode_theta(&encode_theta(&t), 1).unwrap(), t);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![
            row("a.pfm", vec![0.5, 1.0], 1),
            ManifestRow {
                role: Role::GradientMinus,
                ..row("b.pfm", vec![0.25, 1.0], u64::MAX)
            },
        ];
        write_manifest(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,theta,spp,seed,role\n"));
        assert!(text.contains("0.5;1.0"));
        assert_eq!(read_manifest(&p).unwrap(), rows);
    }

    #[test]
    fn manifest_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        assert!(write_manifest(&p, &[row("a", vec![1.0], 1), row("a", vec![2.0], 1)]).is_err());
        assert!(write_manifest(&p, &[row("a", vec![1.0], 1), row("b", vec![1.0, 2.0], 1)]).is_err());
        std::fs::write(&p, "path,theta,spp,seed,role\na,1,4,1,sideways\n").unwrap();
        assert!(read_manifest(&p).is_err());
        std::fs::write(&p, "path,theta,spp\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }

    #[test]
    fn empty_manifest_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,theta,spp,seed,role\n").unwrap();
        assert!(load_stack(&p).unwrap().is_empty());
        std::fs::write(&p, "").unwrap();
        assert!(load_stack(&p).unwrap().is_empty());
    }

    #[test]
    fn stack_checks() {
        let dir = tempfile::tempdir().unwrap();
        let big = RadianceImage::filled(4, 3, 3, 1.0).unwrap();
        let small = RadianceImage::filled(2, 2, 3, 1.0).unwrap();
        write_pfm(&big, dir.path().join("a.pfm")).unwrap();
        write_pfm(&big, dir.path().join("b.pfm")).unwrap();
        write_pfm(&small, dir.path().join("c.pfm")).unwrap();
        let p = dir.path().join("m.csv");

        write_manifest(&p, &[row("a.pfm", vec![1.0], 1), row("c.pfm", vec![2.0], 1)]).unwrap();
        let err = load_stack(&p).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");

        write_manifest(&p, &[row("a.pfm", vec![1.0], 1), row("b.pfm", vec![1.0], 1)]).unwrap();
        assert!(load_stack(&p).unwrap_err().to_string().contains("duplicate"));

        write_manifest(&p, &[row("a.pfm", vec![1.0], 1), row("missing.pfm", vec![2.0], 1)]).unwrap();
        assert!(load_stack(&p).is_err());

        write_manifest(&p, &[row("b.pfm", vec![2.0], 7), row("a.pfm", vec![1.0], 1)]).unwrap();
        let s = load_stack(&p).unwrap();
        assert_eq!(s[0].image.meta.theta, vec![2.0]);
        assert_eq!(s[0].image.meta.seed, 7);
        assert_eq!(s[1].row.path, PathBuf::from("a.pfm"));
    }
}
