//! Adapter checkpoint directories.
//!
//! One directory per layer:
//!
//! ```text
//! {layer}/A.pssa
//! {layer}/B.pssa
//! {layer}/Wres.pssa | Wres.psq4   (optional frozen base)
//! {layer}/meta.txt                (key=value lines)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AdapterPair, Base, DecomposedLayer, Origin};
use crate::error::{Error, Result};
use crate::linalg::{load_matrix, save_matrix, write_atomic};
use crate::quant::{load_quantized, save_quantized};

pub const A_FILE: &str = "A.pssa";
pub const B_FILE: &str = "B.pssa";
pub const DENSE_BASE_FILE: &str = "Wres.pssa";
pub const QUANT_BASE_FILE: &str = "Wres.psq4";
pub const META_FILE: &str = "meta.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseFile {
    None,
    Dense,
    Nf4,
}

impl BaseFile {
    fn as_str(self) -> &'static str {
        match self {
            BaseFile::None => "none",
            BaseFile::Dense => "dense",
            BaseFile::Nf4 => "nf4",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterMeta {
    pub rank: usize,
    pub scale: f64,
    pub origin: Origin,
    pub seed: Option<u64>,
    pub base: BaseFile,
}

impl AdapterMeta {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rank={}", self.rank);
        let _ = writeln!(out, "scale={:.17e}", self.scale);
        let _ = writeln!(out, "origin={}", self.origin);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed={s}");
            }
            None => out.push_str("seed=none\n"),
        }
        let _ = writeln!(out, "base={}", self.base.as_str());
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            format: "adapter meta",
            offset: 0,
            detail,
        };
        let (mut rank, mut scale, mut origin, mut seed, mut base) = (None, None, None, None, BaseFile::None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{line}'")))?;
            match key.trim() {
                "rank" => rank = Some(value.parse().map_err(|_| bad(format!("bad rank '{value}'")))?),
                "scale" => scale = Some(value.parse().map_err(|_| bad(format!("bad scale '{value}'")))?),
                "origin" => origin = Some(value.parse::<Origin>()?),
                "seed" => {
                    seed = match value {
                        "none" => None,
                        v => Some(v.parse().map_err(|_| bad(format!("bad seed '{v}'")))?),
                    }
                }
                "base" => {
                    base = match value {
                        "none" => BaseFile::None,
                        "dense" => BaseFile::Dense,
                        "nf4" => BaseFile::Nf4,
                        v => return Err(bad(format!("bad base kind '{v}'"))),
                    }
                }
                _ => {}
            }
        }
        Ok(Self {
            rank: rank.ok_or_else(|| bad("missing rank".into()))?,
            scale: scale.ok_or_else(|| bad("missing scale".into()))?,
            origin: origin.ok_or_else(|| bad("missing origin".into()))?,
            seed,
            base,
        })
    }
}

/// Writes `layer` into `dir` (created if missing). The base is written only
/// when `with_base` is set.
pub fn save_adapter_dir(dir: &Path, layer: &DecomposedLayer, seed: Option<u64>, with_base: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ad = layer.adapter();
    save_matrix(dir.join(A_FILE), &ad.a)?;
    save_matrix(dir.join(B_FILE), &ad.b)?;
    let base = if !with_base {
        BaseFile::None
    } else {
        match layer.base() {
            Base::Dense(m) => {
                save_matrix(dir.join(DENSE_BASE_FILE), m)?;
                BaseFile::Dense
            }
            Base::Quantized { q, .. } => {
                save_quantized(dir.join(QUANT_BASE_FILE), q)?;
                BaseFile::Nf4
            }
        }
    };
    let meta = AdapterMeta {
        rank: ad.rank(),
        scale: ad.scale,
        origin: layer.origin(),
        seed,
        base,
    };
    write_atomic(&dir.join(META_FILE), meta.to_text().as_bytes())
}

/// Reads an adapter directory. The base is `None` when none was saved.
pub fn load_adapter_dir(dir: &Path) -> Result<(AdapterPair, Option<Base>, AdapterMeta)> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = AdapterMeta::parse(&text)?;
    let a = load_matrix(dir.join(A_FILE))?;
    let b = load_matrix(dir.join(B_FILE))?;
    let pair = AdapterPair::new(a, b, meta.scale)?;
    if pair.rank() != meta.rank {
        return Err(Error::Format {
            format: "adapter meta",
            offset: 0,
            detail: format!("meta says rank {} but A has {} columns", meta.rank, pair.rank()),
        });
    }
    let base = match meta.base {
        BaseFile::None => None,
        BaseFile::Dense => Some(Base::Dense(load_matrix(dir.join(DENSE_BASE_FILE))?)),
        BaseFile::Nf4 => Some(Base::quantized(load_quantized(dir.join(QUANT_BASE_FILE))?)),
    };
    Ok((pair, base, meta))
}
