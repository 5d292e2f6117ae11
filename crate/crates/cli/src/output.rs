//! Artifact formats and the on-disk layout of a run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use fraclap::geometry::RadialSample;
use fraclap::grid::{DiscreteFunction, NodeRole};
use fraclap::operator::KernelWeights;
use fraclap::solver::IterationRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// File name of the manifest written next to the artifacts.
pub const MANIFEST_FILE: &str = "manifest.json";

/// One output file, kept in memory until written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Manifest {
    /// Seconds since the Unix epoch when the artifacts were written.
    pub created_unix: u64,
    pub artifacts: Vec<ManifestEntry>,
}

/// Lossless float formatting: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn role_name(role: NodeRole) -> &'static str {
    match role {
        NodeRole::Interior => "INTERIOR",
        NodeRole::ExteriorFixed => "EXTERIOR_FIXED",
        NodeRole::FarFieldBoundary => "FAR_FIELD_BOUNDARY",
    }
}

fn coords_header(dim: usize) -> &'static str {
    if dim == 1 {
        "x1"
    } else {
        "x1,x2"
    }
}

fn coords(x: &[f64], dim: usize) -> String {
    x[..dim]
        .iter()
        .map(|&c| num(c))
        .collect::<Vec<_>>()
        .join(",")
}

/// Nodal values as `x1[,x2],value,role`.
pub fn solution_csv(u: &DiscreteFunction) -> String {
    let g = u.grid();
    let dim = g.dim();
    let mut out = format!("{},value,role\n", coords_header(dim));
    for i in 0..g.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            coords(g.node(i), dim),
            num(u.value(i)),
            role_name(g.role(i))
        );
    }
    out
}

pub fn iteration_log_csv(log: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,energy,energy_change,residual_norm,step\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            num(r.energy),
            num(r.energy_change),
            num(r.residual_norm),
            num(r.step)
        );
    }
    out
}

/// Values along rays from the origin; one dimension has the two rays `θ = 0, π`.
pub fn radial_profile_csv(samples: &[RadialSample]) -> String {
    let mut out = String::from("theta,r,value\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{}", num(s.theta), num(s.r), num(s.value));
    }
    out
}

/// Crossing points of each level set, one row per point.
pub fn level_sets_csv(sets: &[(f64, Vec<Vec<f64>>)], dim: usize) -> String {
    let mut out = format!("level,{}\n", coords_header(dim));
    for (level, pts) in sets {
        for x in pts {
            let _ = writeln!(out, "{},{}", num(*level), coords(x, dim));
        }
    }
    out
}

/// Offset table (`kind = offset`, index `|dx| + nx·|dy|`) and per-node exterior coefficients.
pub fn weights_csv(w: &KernelWeights) -> String {
    let mut out = String::from("kind,index,value\n");
    for (k, v) in w.offset_table().iter().enumerate() {
        let _ = writeln!(out, "offset,{k},{}", num(*v));
    }
    for (k, v) in w.exterior_coefficients().iter().enumerate() {
        let _ = writeln!(out, "exterior,{k},{}", num(*v));
    }
    out
}

/// Writes every artifact into `dir`, then a manifest with their SHA-256 hashes.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> io::Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
        entries.push(ManifestEntry {
            path: a.name.clone(),
            sha256: hex::encode(Sha256::digest(&a.contents)),
            bytes: a.contents.len(),
        });
    }
    let created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        created_unix,
        artifacts: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)? + "\n";
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}
