//! `KCC1` dataset containers: token grids, foreground masks and class metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KccError, Result};
use crate::format::{self, EntryInfo, PayloadWriter};

pub const CONTAINER_MAGIC: &[u8; 4] = b"KCC1";
pub const CONTAINER_VERSION: u32 = 1;

/// Patch tokens of one image arranged on their spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub image_id: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    /// Row-major `[grid_h, grid_w, dim]`.
    pub tokens: Vec<f32>,
    pub cls_vector: Option<Vec<f32>>,
    pub orig_h: usize,
    pub orig_w: usize,
    pub patch_size: usize,
}

impl TokenGrid {
    pub fn token(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.grid_w + col) * self.dim;
        &self.tokens[start..start + self.dim]
    }

    pub fn num_tokens(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.image_id;
        if self.grid_h == 0 || self.grid_w == 0 || self.dim == 0 {
            return Err(KccError::Invalid(format!("grid `{id}` has an empty dimension")));
        }
        if self.patch_size == 0 || self.orig_h == 0 || self.orig_w == 0 {
            return Err(KccError::Invalid(format!("grid `{id}` has zero image or patch size")));
        }
        if self.tokens.len() != self.grid_h * self.grid_w * self.dim {
            return Err(KccError::Invalid(format!(
                "grid `{id}`: {} token values for shape {}x{}x{}",
                self.tokens.len(),
                self.grid_h,
                self.grid_w,
                self.dim
            )));
        }
        let covers = |g: usize, o: usize| g * self.patch_size <= o + self.patch_size && g <= o;
        if !covers(self.grid_h, self.orig_h) || !covers(self.grid_w, self.orig_w) {
            return Err(KccError::Invalid(format!(
                "grid `{id}` ({}x{} patches of {}) does not fit image {}x{}",
                self.grid_h, self.grid_w, self.patch_size, self.orig_h, self.orig_w
            )));
        }
        if self.tokens.iter().any(|v| !v.is_finite()) {
            return Err(KccError::NonFinite(id.clone()));
        }
        if let Some(cls) = &self.cls_vector {
            if cls.len() != self.dim {
                return Err(KccError::Invalid(format!(
                    "grid `{id}`: class token has length {}, expected {}",
                    cls.len(),
                    self.dim
                )));
            }
            if cls.iter().any(|v| !v.is_finite()) {
                return Err(KccError::NonFinite(format!("{id} (class token)")));
            }
        }
        Ok(())
    }
}

/// Binary foreground mask at input-pixel resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    /// Row-major, one byte per pixel, each 0 or 1.
    pub values: Vec<u8>,
}

impl ForegroundMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col] != 0
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(KccError::Invalid(format!("mask `{}` is empty", self.image_id)));
        }
        if self.values.len() != self.height * self.width {
            return Err(KccError::Invalid(format!(
                "mask `{}`: {} values for {}x{}",
                self.image_id,
                self.values.len(),
                self.height,
                self.width
            )));
        }
        if self.values.iter().any(|&v| v > 1) {
            return Err(KccError::Invalid(format!("mask `{}` is not binary", self.image_id)));
        }
        Ok(())
    }
}

/// Class table and per-image metadata carried alongside the arrays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub encoder_id: String,
    /// Class names indexed by dense class id.
    #[serde(default)]
    pub classes: Vec<String>,
    /// image_id -> class id.
    #[serde(default)]
    pub labels: BTreeMap<String, u32>,
    /// image_id -> image file path, relative to an image root.
    #[serde(default)]
    pub image_paths: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub grids: Vec<TokenGrid>,
    pub masks: Vec<ForegroundMask>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn grid(&self, image_id: &str) -> Option<&TokenGrid> {
        self.grids.iter().find(|g| g.image_id == image_id)
    }

    pub fn mask(&self, image_id: &str) -> Option<&ForegroundMask> {
        self.masks.iter().find(|m| m.image_id == image_id)
    }

    pub fn label(&self, image_id: &str) -> Option<u32> {
        self.meta.labels.get(image_id).copied()
    }

    /// Grid and mask for `image_id`, or an error naming what is missing.
    pub fn entry(&self, image_id: &str) -> Result<(&TokenGrid, &ForegroundMask)> {
        let grid = self
            .grid(image_id)
            .ok_or_else(|| KccError::Invalid(format!("no token grid for `{image_id}`")))?;
        let mask = self
            .mask(image_id)
            .ok_or_else(|| KccError::Invalid(format!("no mask for `{image_id}`")))?;
        Ok((grid, mask))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(KccError::EmptyDataset);
        }
        let mut grid_ids = BTreeMap::new();
        for g in &self.grids {
            g.validate()?;
            if grid_ids.insert(g.image_id.as_str(), g).is_some() {
                return Err(KccError::Invalid(format!("duplicate grid id `{}`", g.image_id)));
            }
        }
        let mut mask_ids = BTreeSet::new();
        for m in &self.masks {
            m.validate()?;
            if !mask_ids.insert(m.image_id.as_str()) {
                return Err(KccError::Invalid(format!("duplicate mask id `{}`", m.image_id)));
            }
            let g = grid_ids
                .get(m.image_id.as_str())
                .ok_or_else(|| KccError::Invalid(format!("mask `{}` has no token grid", m.image_id)))?;
            if g.orig_h != m.height || g.orig_w != m.width {
                return Err(KccError::Invalid(format!(
                    "mask `{}` is {}x{} but its image is {}x{}",
                    m.image_id, m.height, m.width, g.orig_h, g.orig_w
                )));
            }
        }
        for (id, &label) in &self.meta.labels {
            if !grid_ids.contains_key(id.as_str()) {
                return Err(KccError::Invalid(format!("label for unknown image `{id}`")));
            }
            if label as usize >= self.meta.classes.len() {
                return Err(KccError::Invalid(format!(
                    "image `{id}` has class {label} but only {} classes are named",
                    self.meta.classes.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerManifest {
    pub format_version: u32,
    pub entries: Vec<EntryInfo>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    image_id: String,
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    orig_h: usize,
    orig_w: usize,
    patch_size: usize,
    has_cls: bool,
}

#[derive(Serialize, Deserialize)]
struct MaskDoc {
    image_id: String,
    height: usize,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    format_version: u32,
    meta: DatasetMeta,
    grids: Vec<GridDoc>,
    masks: Vec<MaskDoc>,
    payload_length: u64,
    entries: Vec<EntryInfo>,
}

/// Serializes a validated dataset to `KCC1` bytes.
pub fn encode_container(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let mut w = PayloadWriter::default();
    let mut grids = Vec::with_capacity(dataset.grids.len());
    for g in &dataset.grids {
        w.push_f32(
            format!("tokens:{}", g.image_id),
            vec![g.grid_h, g.grid_w, g.dim],
            &g.tokens,
        );
        if let Some(cls) = &g.cls_vector {
            w.push_f32(format!("cls:{}", g.image_id), vec![g.dim], cls);
        }
        grids.push(GridDoc {
            image_id: g.image_id.clone(),
            grid_h: g.grid_h,
            grid_w: g.grid_w,
            dim: g.dim,
            orig_h: g.orig_h,
            orig_w: g.orig_w,
            patch_size: g.patch_size,
            has_cls: g.cls_vector.is_some(),
        });
    }
    let mut masks = Vec::with_capacity(dataset.masks.len());
    for m in &dataset.masks {
        w.push_u8(format!("mask:{}", m.image_id), vec![m.height, m.width], &m.values);
        masks.push(MaskDoc {
            image_id: m.image_id.clone(),
            height: m.height,
            width: m.width,
        });
    }
    let (entries, payload) = w.into_parts();
    let doc = ManifestDoc {
        format_version: CONTAINER_VERSION,
        meta: dataset.meta.clone(),
        grids,
        masks,
        payload_length: payload.len() as u64,
        entries,
    };
    let manifest = serde_json::to_vec(&doc).map_err(|e| KccError::Manifest(e.to_string()))?;
    Ok(format::assemble(CONTAINER_MAGIC, CONTAINER_VERSION, &manifest, &payload))
}

/// Parses `KCC1` bytes, verifying every checksum and type invariant.
pub fn decode_container(bytes: &[u8]) -> Result<(Dataset, ContainerManifest)> {
    let raw = format::split(bytes, CONTAINER_MAGIC, CONTAINER_VERSION)?;
    let doc: ManifestDoc =
        serde_json::from_slice(raw.manifest).map_err(|e| KccError::Manifest(e.to_string()))?;
    if doc.format_version != u32::from_le_bytes(bytes[4..8].try_into().unwrap()) {
        return Err(KccError::Manifest("header and manifest versions disagree".into()));
    }
    format::verify_entries(&doc.entries, doc.payload_length, raw.payload, bytes.len())?;

    let by_name: BTreeMap<&str, &EntryInfo> =
        doc.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let lookup = |name: String| {
        by_name
            .get(name.as_str())
            .copied()
            .ok_or_else(|| KccError::Manifest(format!("missing entry `{name}`")))
    };

    let mut grids = Vec::with_capacity(doc.grids.len());
    for gd in &doc.grids {
        let e = lookup(format!("tokens:{}", gd.image_id))?;
        if e.shape != [gd.grid_h, gd.grid_w, gd.dim] {
            return Err(KccError::Manifest(format!("entry `{}` has shape {:?}", e.name, e.shape)));
        }
        let tokens = format::entry_f32(raw.payload, e)?;
        let cls_vector = if gd.has_cls {
            let e = lookup(format!("cls:{}", gd.image_id))?;
            Some(format::entry_f32(raw.payload, e)?)
        } else {
            None
        };
        grids.push(TokenGrid {
            image_id: gd.image_id.clone(),
            grid_h: gd.grid_h,
            grid_w: gd.grid_w,
            dim: gd.dim,
            tokens,
            cls_vector,
            orig_h: gd.orig_h,
            orig_w: gd.orig_w,
            patch_size: gd.patch_size,
        });
    }
    let mut masks = Vec::with_capacity(doc.masks.len());
    for md in &doc.masks {
        let e = lookup(format!("mask:{}", md.image_id))?;
        if e.shape != [md.height, md.width] {
            return Err(KccError::Manifest(format!("entry `{}` has shape {:?}", e.name, e.shape)));
        }
        masks.push(ForegroundMask {
            image_id: md.image_id.clone(),
            height: md.height,
            width: md.width,
            values: format::entry_u8(raw.payload, e)?.to_vec(),
        });
    }
    let dataset = Dataset {
        grids,
        masks,
        meta: doc.meta,
    };
    dataset.validate()?;
    let manifest = ContainerManifest {
        format_version: doc.format_version,
        entries: doc.entries,
        meta: dataset.meta.clone(),
    };
    Ok((dataset, manifest))
}

pub fn write_container(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let bytes = encode_container(dataset)?;
    format::write_file(path.as_ref(), &bytes)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(Dataset, ContainerManifest)> {
    let bytes = format::read_file(path.as_ref())?;
    decode_container(&bytes)
}
