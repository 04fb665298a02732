//! LR training corpus: generation, on-disk manifest and validated reload.

mod psrf;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use psrf::{decode_field, encode_field, read_field, write_field};

use crate::downnet::DOWNSCALE_FACTOR;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, residual_norm, sample_forcing, solve, ForcingParams, Grid};
use crate::fem::{Field, DEFAULT_TOL};
use crate::seed::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_VERSION: u32 = 1;
pub const MIN_LR_SIZE: usize = 8;

/// Seed-path tags, kept apart so per-sample draws never collide with the split shuffle.
const TAG_SAMPLE: u64 = 0;
const TAG_SPLIT: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which samples get an HR ground-truth solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrPolicy {
    None,
    #[default]
    TestOnly,
    All,
}

impl HrPolicy {
    fn wants(self, split: Split) -> bool {
        match self {
            HrPolicy::None => false,
            HrPolicy::TestOnly => split == Split::Test,
            HrPolicy::All => true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub n: usize,
    pub l: usize,
    pub seed: u64,
    #[serde(default)]
    pub hr: HrPolicy,
}

impl GenerateConfig {
    pub fn new(n: usize, l: usize, seed: u64) -> Self {
        Self {
            n,
            l,
            seed,
            hr: HrPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("dataset size n must be at least 1".into()));
        }
        if self.l < MIN_LR_SIZE {
            return Err(Error::Config(format!("LR size l must be at least {MIN_LR_SIZE}, got {}", self.l)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub seed: u64,
    pub l: usize,
    pub n: usize,
    pub version: u32,
    /// Run configuration that produced the corpus, if recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub lr_path: String,
    pub hr_path: Option<String>,
    pub split: Split,
    pub crc32_lr: u32,
    pub crc32_hr: Option<u32>,
}

impl SampleRecord {
    pub fn params(&self) -> ForcingParams {
        ForcingParams::new(self.a, self.b, self.c, self.d)
    }
}

/// Loaded corpus. Field payloads are read on demand; paths resolve against `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
    root: PathBuf,
}

impl Manifest {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn l(&self) -> usize {
        self.header.l
    }

    pub fn lr_grid(&self) -> Result<Grid> {
        Grid::new(self.header.l)
    }

    pub fn hr_grid(&self) -> Result<Grid> {
        Grid::new(self.header.l * DOWNSCALE_FACTOR)
    }

    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.records.iter().filter(|r| r.split == split).map(|r| r.id).collect()
    }

    pub fn train_ids(&self) -> Vec<usize> {
        self.ids(Split::Train)
    }

    pub fn test_ids(&self) -> Vec<usize> {
        self.ids(Split::Test)
    }

    pub fn record(&self, id: usize) -> Result<&SampleRecord> {
        self.records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Config(format!("no sample with id {id} in manifest")))
    }

    pub fn load_lr(&self, id: usize) -> Result<Field> {
        let rec = self.record(id)?;
        self.read_checked(id, &rec.lr_path, rec.crc32_lr, self.header.l)
    }

    /// HR truth for `id`, or `None` if the corpus has none for it.
    pub fn load_hr(&self, id: usize) -> Result<Option<Field>> {
        let rec = self.record(id)?;
        match (&rec.hr_path, rec.crc32_hr) {
            (Some(p), Some(crc)) => self
                .read_checked(id, p, crc, self.header.l * DOWNSCALE_FACTOR)
                .map(Some),
            (None, None) => Ok(None),
            _ => Err(Error::Format {
                path: self.path(),
                reason: format!("sample {id}: hr_path and crc32_hr must both be set or both null"),
            }),
        }
    }

    fn read_checked(&self, id: usize, rel: &str, crc: u32, n: usize) -> Result<Field> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if crc32fast::hash(&bytes) != crc {
            return Err(Error::Checksum { id, path });
        }
        let field = decode_field(&bytes, &path).map_err(|e| e.in_sample(id))?;
        if field.grid().n() != n {
            return Err(Error::Shape(format!(
                "sample {id}: {} holds a {m}x{m} field, expected {n}x{n}",
                path.display(),
                m = field.grid().n()
            )));
        }
        Ok(field)
    }

    /// Largest relative residual `‖A u − b‖/‖b‖` over all stored LR fields.
    pub fn max_lr_residual(&self) -> Result<f64> {
        let grid = self.lr_grid()?;
        let a = assemble_stiffness(&grid)?;
        let mut worst = 0.0f64;
        for rec in &self.records {
            let u = self.load_lr(rec.id)?;
            let b = assemble_load(&grid, &rec.params());
            let rel = residual_norm(&a, u.data(), b.data()) / crate::fem::norm(b.data());
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    fn write(&self) -> Result<()> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &self.header)?;
        out.push(b'\n');
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)?;
            out.push(b'\n');
        }
        let path = self.path();
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&out).map_err(|e| Error::io(&path, e))
    }
}

/// Number of training samples for an 80/20 split of `n`, rounded half up.
pub fn train_count(n: usize) -> usize {
    (8 * n + 5) / 10
}

/// Split tag per sample id, from a seeded shuffle.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SPLIT])));
    let mut splits = vec![Split::Test; n];
    for &id in &order[..train_count(n)] {
        splits[id] = Split::Train;
    }
    splits
}

/// Forcing parameters of sample `id` in a corpus generated with `seed`.
pub fn sample_params(seed: u64, id: usize) -> ForcingParams {
    sample_forcing(derive_seed(seed, &[TAG_SAMPLE, id as u64]))
}

/// Generates a corpus into `out_dir` and writes its manifest.
pub fn generate(out_dir: impl AsRef<Path>, config: &GenerateConfig) -> Result<Manifest> {
    generate_with_meta(out_dir, config, None)
}

/// As [`generate`], embedding `meta` (typically the run configuration) in the header.
pub fn generate_with_meta(
    out_dir: impl AsRef<Path>,
    config: &GenerateConfig,
    meta: Option<serde_json::Value>,
) -> Result<Manifest> {
    config.validate()?;
    let root = out_dir.as_ref().to_path_buf();
    for dir in [root.clone(), root.join("lr"), root.join("hr")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let lr_grid = Grid::new(config.l)?;
    let hr_grid = Grid::new(config.l * DOWNSCALE_FACTOR)?;
    let lr_a = assemble_stiffness(&lr_grid)?;
    let hr_a = if config.hr == HrPolicy::None {
        None
    } else {
        Some(assemble_stiffness(&hr_grid)?)
    };
    let splits = assign_splits(config.n, config.seed);

    let records = (0..config.n)
        .into_par_iter()
        .map(|id| {
            let params = sample_params(config.seed, id);
            let split = splits[id];
            let write = |dir: &str, a: &crate::SparseMatrix, grid: &Grid| -> Result<(String, u32)> {
                let b = assemble_load(grid, &params);
                let u = solve(a, &b, DEFAULT_TOL)?;
                let rel = format!("{dir}/{id:05}.psrf");
                let bytes = encode_field(&u);
                let path = root.join(&rel);
                fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
                Ok((rel, crc32fast::hash(&bytes)))
            };
            let (lr_path, crc32_lr) = write("lr", &lr_a, &lr_grid)?;
            let (hr_path, crc32_hr) = match &hr_a {
                Some(a) if config.hr.wants(split) => {
                    let (p, c) = write("hr", a, &hr_grid)?;
                    (Some(p), Some(c))
                }
                _ => (None, None),
            };
            Ok(SampleRecord {
                id,
                a: params.a,
                b: params.b,
                c: params.c,
                d: params.d,
                lr_path,
                hr_path,
                split,
                crc32_lr,
                crc32_hr,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .enumerate()
        .map(|(id, r)| r.map_err(|e| e.in_sample(id)))
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        header: ManifestHeader {
            seed: config.seed,
            l: config.l,
            n: config.n,
            version: MANIFEST_VERSION,
            config: meta,
        },
        records,
        root,
    };
    manifest.write()?;
    Ok(manifest)
}

/// Loads a manifest (file or containing directory) and validates every referenced field.
pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
    let manifest = load_unchecked(path)?;
    for rec in &manifest.records {
        manifest.load_lr(rec.id)?;
        manifest.load_hr(rec.id)?;
    }
    Ok(manifest)
}

/// Parses a manifest without touching the field files.
pub fn load_unchecked(path: impl AsRef<Path>) -> Result<Manifest> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path.push(MANIFEST_FILE);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let format = |reason: String| Error::Format {
        path: path.clone(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: ManifestHeader = serde_json::from_str(lines.next().ok_or_else(|| format("empty manifest".into()))?)
        .map_err(|e| format(format!("header: {e}")))?;
    if header.version != MANIFEST_VERSION {
        return Err(format(format!("unsupported manifest version {}", header.version)));
    }
    let records = lines
        .enumerate()
        .map(|(k, line)| serde_json::from_str(line).map_err(|e| format(format!("record {k}: {e}"))))
        .collect::<Result<Vec<SampleRecord>>>()?;
    if records.len() != header.n {
        return Err(format(format!("header declares {} samples, found {}", header.n, records.len())));
    }
    let mut seen = vec![false; header.n];
    for r in &records {
        if r.id >= header.n || std::mem::replace(&mut seen[r.id], true) {
            return Err(format(format!("sample id {} is out of range or duplicated", r.id)));
        }
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest { header, records, root })
}
