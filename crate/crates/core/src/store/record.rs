use std::collections::BTreeMap;
use std::path::Path;

use super::pack::{read_tensors, write_tensors, Tensor};
use super::{check_unit_norm, validate_name, NormPolicy, StoreError};

/// Patch tokens of one sample on a `rows x cols` grid, row-major, `dim` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self, StoreError> {
        if rows * cols * dim != data.len() || rows == 0 || cols == 0 || dim == 0 {
            return Err(StoreError::Invariant(format!(
                "token grid {rows}x{cols}x{dim} does not hold {} values",
                data.len()
            )));
        }
        Ok(TokenGrid { rows, cols, dim, data })
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of patches `N`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f32] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Everything the engine knows about one sample.
///
/// Component embeddings and token-grid masks are keyed `"class/component"`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub global: Vec<f32>,
    pub components: BTreeMap<String, Vec<f32>>,
    pub tokens: Option<TokenGrid>,
    /// Normalized patch-centre coordinates, `(x, y)` with `(0, 0)` top-left.
    pub positions: Option<Vec<[f32; 2]>>,
    /// Token-grid component masks (length `N`, grid shape of `tokens`).
    pub masks: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingRecord {
    pub fn new(sample_id: impl Into<String>, global: Vec<f32>) -> Self {
        EmbeddingRecord {
            sample_id: sample_id.into(),
            global,
            components: BTreeMap::new(),
            tokens: None,
            positions: None,
            masks: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.global.len()
    }

    /// Enforces the record invariants; with [`NormPolicy::Renormalize`] stored
    /// vectors that are off-norm are rescaled instead of rejected.
    pub fn validate(&mut self, policy: NormPolicy) -> Result<(), StoreError> {
        validate_name("sample", &self.sample_id)?;
        let id = self.sample_id.clone();
        let dim = self.global.len();
        if dim == 0 {
            return Err(StoreError::Invariant(format!("{id}: empty global embedding")));
        }
        check_unit_norm(|| format!("{id}/global"), &mut self.global, policy)?;
        for (key, v) in self.components.iter_mut() {
            check_key(&id, key)?;
            if v.len() != dim {
                return Err(StoreError::Invariant(format!(
                    "{id}/comp/{key}: dimension {} differs from global {dim}",
                    v.len()
                )));
            }
            check_unit_norm(|| format!("{id}/comp/{key}"), v, policy)?;
        }
        let n = match &mut self.tokens {
            Some(tokens) => {
                if tokens.dim != dim {
                    return Err(StoreError::Invariant(format!(
                        "{id}/tokens: dimension {} differs from global {dim}",
                        tokens.dim
                    )));
                }
                for (n, row) in tokens.data.chunks_exact_mut(dim).enumerate() {
                    check_unit_norm(|| format!("{id}/tokens[{n}]"), row, policy)?;
                }
                Some(tokens.len())
            }
            None => None,
        };
        if let Some(positions) = &self.positions {
            if let Some(n) = n {
                if positions.len() != n {
                    return Err(StoreError::Invariant(format!(
                        "{id}/positions: {} rows but {n} tokens",
                        positions.len()
                    )));
                }
            }
            check_positions(&id, positions)?;
        }
        if !self.masks.is_empty() {
            let n = n.ok_or_else(|| StoreError::Invariant(format!("{id}: masks present without a token grid")))?;
            for (key, mask) in &self.masks {
                check_key(&id, key)?;
                if mask.len() != n {
                    return Err(StoreError::Invariant(format!(
                        "{id}/mask/{key}: length {} but grid has {n} patches",
                        mask.len()
                    )));
                }
                if let Some(bad) = mask.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(StoreError::Invariant(format!(
                        "{id}/mask/{key}: value {bad} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_key(id: &str, key: &str) -> Result<(), StoreError> {
    match key.split_once('/') {
        Some((class, comp)) if !class.is_empty() && !comp.is_empty() && !comp.contains('/') => Ok(()),
        _ => Err(StoreError::Invariant(format!(
            "{id}: component key {key:?} is not \"class/component\""
        ))),
    }
}

fn check_positions(id: &str, positions: &[[f32; 2]]) -> Result<(), StoreError> {
    for p in positions {
        if !p.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(StoreError::Invariant(format!(
                "{id}/positions: {p:?} outside the unit square"
            )));
        }
    }
    let mut sorted: Vec<(u32, u32)> = positions.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(StoreError::Invariant(format!(
            "{id}/positions: duplicate patch positions"
        )));
    }
    Ok(())
}

/// Flattens records into canonical tensor entries: records by `sample_id`,
/// then `global`, `tokens`, `positions`, `comp/<key>`, `mask/<key>`.
pub fn records_to_tensors(records: &[EmbeddingRecord]) -> Result<Vec<(String, Tensor)>, StoreError> {
    let mut sorted: Vec<&EmbeddingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
        return Err(StoreError::Invariant(format!(
            "duplicate sample_id {:?}",
            w[0].sample_id
        )));
    }
    let mut entries = Vec::new();
    for r in sorted {
        validate_name("sample", &r.sample_id)?;
        let id = &r.sample_id;
        entries.push((format!("{id}/global"), Tensor::vector(r.global.clone())));
        if let Some(t) = &r.tokens {
            entries.push((
                format!("{id}/tokens"),
                Tensor::new(vec![t.rows as u64, t.cols as u64, t.dim as u64], t.data.clone()),
            ));
        }
        if let Some(p) = &r.positions {
            entries.push((
                format!("{id}/positions"),
                Tensor::new(
                    vec![p.len() as u64, 2],
                    p.iter().flat_map(|xy| xy.iter().copied()).collect(),
                ),
            ));
        }
        for (key, v) in &r.components {
            entries.push((format!("{id}/comp/{key}"), Tensor::vector(v.clone())));
        }
        for (key, m) in &r.masks {
            let (rows, cols) = r
                .tokens
                .as_ref()
                .map(|t| t.grid_shape())
                .ok_or_else(|| StoreError::Invariant(format!("{id}: masks present without a token grid")))?;
            entries.push((
                format!("{id}/mask/{key}"),
                Tensor::new(vec![rows as u64, cols as u64], m.clone()),
            ));
        }
    }
    Ok(entries)
}

/// Reassembles records from tensor entries (inverse of [`records_to_tensors`]).
pub fn records_from_tensors(
    entries: Vec<(String, Tensor)>,
    policy: NormPolicy,
) -> Result<Vec<EmbeddingRecord>, StoreError> {
    struct Partial {
        global: Option<Vec<f32>>,
        record: EmbeddingRecord,
        mask_shapes: Vec<(String, Vec<u64>)>,
    }
    let malformed = |name: &str, msg: &str| StoreError::MalformedFile(format!("{name:?}: {msg}"));
    let mut partials: BTreeMap<String, Partial> = BTreeMap::new();
    for (name, tensor) in entries {
        let (id, field) = name
            .split_once('/')
            .ok_or_else(|| malformed(&name, "name is not sampleId/field"))?;
        let partial = partials.entry(id.to_owned()).or_insert_with(|| Partial {
            global: None,
            record: EmbeddingRecord::new(id, Vec::new()),
            mask_shapes: Vec::new(),
        });
        let rank = tensor.dims.len();
        match field {
            "global" => {
                if rank != 1 {
                    return Err(malformed(&name, "global must be rank 1"));
                }
                partial.global = Some(tensor.data);
            }
            "tokens" => {
                if rank != 3 {
                    return Err(malformed(&name, "tokens must be rank 3 (rows, cols, dim)"));
                }
                let d = &tensor.dims;
                partial.record.tokens = Some(
                    TokenGrid::new(d[0] as usize, d[1] as usize, d[2] as usize, tensor.data)
                        .map_err(|e| malformed(&name, &e.to_string()))?,
                );
            }
            "positions" => {
                if rank != 2 || tensor.dims[1] != 2 {
                    return Err(malformed(&name, "positions must have shape (N, 2)"));
                }
                partial.record.positions = Some(tensor.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect());
            }
            _ => {
                if let Some(key) = field.strip_prefix("comp/") {
                    if rank != 1 {
                        return Err(malformed(&name, "component embedding must be rank 1"));
                    }
                    partial.record.components.insert(key.to_owned(), tensor.data);
                } else if let Some(key) = field.strip_prefix("mask/") {
                    if rank != 2 {
                        return Err(malformed(&name, "mask must be rank 2"));
                    }
                    partial.mask_shapes.push((key.to_owned(), tensor.dims));
                    partial.record.masks.insert(key.to_owned(), tensor.data);
                } else {
                    return Err(malformed(&name, "unknown field"));
                }
            }
        }
    }
    let mut records = Vec::with_capacity(partials.len());
    for (id, partial) in partials {
        let mut record = partial.record;
        record.global = partial
            .global
            .ok_or_else(|| StoreError::MalformedFile(format!("sample {id:?} has no global entry")))?;
        for (key, shape) in &partial.mask_shapes {
            let grid = record.tokens.as_ref().map(|t| t.grid_shape());
            if grid.map(|(r, c)| vec![r as u64, c as u64]).as_ref() != Some(shape) {
                return Err(StoreError::MalformedFile(format!(
                    "{id}/mask/{key}: shape {shape:?} does not match the token grid"
                )));
            }
        }
        record.validate(policy)?;
        records.push(record);
    }
    Ok(records)
}

pub fn save_tensor_pack(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_tensors(path, &records_to_tensors(records)?)
}

/// Loads records sorted by `sample_id`, validating every invariant.
pub fn load_tensor_pack(path: impl AsRef<Path>, policy: NormPolicy) -> Result<Vec<EmbeddingRecord>, StoreError> {
    records_from_tensors(read_tensors(path)?, policy)
}

#[cfg(test)]
mod tests {
    use super::super::pack::{decode_tensors, encode_tensors};
    use super::*;

    fn sample(id: &str) -> EmbeddingRecord {
        let mut r = EmbeddingRecord::new(id, vec![0.0, 1.0, 0.0, 0.0]);
        r.components.insert("cat/head".into(), vec![1.0, 0.0, 0.0, 0.0]);
        let tokens = (0..4)
            .flat_map(|n| {
                let mut v = vec![0.0f32; 4];
                v[n] = 1.0;
                v
            })
            .collect();
        r.tokens = Some(TokenGrid::new(2, 2, 4, tokens).unwrap());
        r.positions = Some(vec![[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]);
        r.masks.insert("cat/head".into(), vec![1.0, 0.5, 0.0, 0.25]);
        r
    }

    #[test]
    fn one_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.coodt");
        let r = sample("a");
        save_tensor_pack(std::slice::from_ref(&r), &path).unwrap();
        let back = load_tensor_pack(&path, NormPolicy::Reject).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn empty_list_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.coodt");
        save_tensor_pack(&[], &path).unwrap();
        assert!(load_tensor_pack(&path, NormPolicy::Reject).unwrap().is_empty());
    }

    #[test]
    fn output_is_sorted_by_sample_id() {
        let entries = records_to_tensors(&[sample("b"), sample("a")]).unwrap();
        assert!(entries[0].0.starts_with("a/"));
        let back = records_from_tensors(entries, NormPolicy::Reject).unwrap();
        assert_eq!(back[0].sample_id, "a");
        assert_eq!(back[1].sample_id, "b");
    }

    #[test]
    fn duplicate_sample_ids_are_rejected() {
        assert!(records_to_tensors(&[sample("a"), sample("a")]).is_err());
    }

    #[test]
    fn off_norm_token_rejected_on_load() {
        let mut r = sample("a");
        let mut tokens = r.tokens.take().unwrap();
        tokens.data[0] = 3.0;
        r.tokens = Some(tokens);
        let bytes = encode_tensors(&records_to_tensors(&[r]).unwrap()).unwrap();
        let entries = decode_tensors(&bytes).unwrap();
        assert!(matches!(
            records_from_tensors(entries.clone(), NormPolicy::Reject),
            Err(StoreError::NormViolation { .. })
        ));
        let fixed = records_from_tensors(entries, NormPolicy::Renormalize).unwrap();
        let row = fixed[0].tokens.as_ref().unwrap().row(0);
        assert!((crate::vector::norm(row) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn positions_must_be_distinct_and_in_range() {
        let mut r = sample("a");
        r.positions = Some(vec![[0.25, 0.25], [0.25, 0.25], [0.25, 0.75], [0.75, 0.75]]);
        assert!(r.validate(NormPolicy::Reject).is_err());
        let mut r = sample("a");
        r.positions = Some(vec![[1.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]);
        assert!(r.validate(NormPolicy::Reject).is_err());
    }

    #[test]
    fn unknown_field_is_malformed() {
        let entries = vec![("a/bogus".to_string(), Tensor::vector(vec![1.0]))];
        assert!(matches!(
            records_from_tensors(entries, NormPolicy::Reject),
            Err(StoreError::MalformedFile(_))
        ));
    }
}
