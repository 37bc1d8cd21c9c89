//! Synthetic embedding worlds with known component structure.
//!
//! Each class owns a text embedding and `P` component text embeddings
//! (mutually orthonormal when the dimension allows). An image of class `y`
//! places its `P` components as 2x2 token blocks on a fixed per-class layout,
//! jittered by up to one patch. Two OOD sets are produced:
//!
//! * `component_shift`: same layout, but each component embedding matches its
//!   text only with probability `psi_out` instead of `psi_in`;
//! * `compositional`: components present as in-distribution, but the blocks
//!   are rearranged by a random derangement.
//!
//! Global embeddings follow the same distribution in every split, so a
//! global-only score cannot separate ID from OOD.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::error::Error;
use crate::store::{
    component_key, save_tensor_pack, ClassEntry, ComponentEntry, ComponentVocabulary, Dataset, DatasetManifest,
    EmbeddingRecord, NormPolicy, Role, StoreError, TokenGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub components_per_class: usize,
    /// Probability that an in-distribution component embedding matches its text.
    pub psi_in: f64,
    /// The same probability for the component-shift OOD set.
    pub psi_out: f64,
    pub dim: usize,
    /// Side of the square token grid.
    pub grid: usize,
    /// Noise scale of component embeddings and component tokens.
    pub noise: f64,
    /// Noise scale of global embeddings.
    pub global_noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub ood_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            components_per_class: 4,
            psi_in: 0.9,
            psi_out: 0.4,
            dim: 64,
            grid: 8,
            noise: 0.3,
            global_noise: 1.0,
            train_per_class: 50,
            test_per_class: 30,
            ood_per_class: 30,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn cells_per_side(&self) -> usize {
        self.grid.saturating_sub(2) / 2
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.classes == 0 || self.dim == 0 {
            return bad("classes and dim must be positive".into());
        }
        if self.components_per_class < 2 {
            return bad("components_per_class must be at least 2".into());
        }
        let cells = self.cells_per_side() * self.cells_per_side();
        if cells < self.components_per_class {
            return bad(format!(
                "a {0}x{0} grid holds {cells} component blocks, fewer than {1}",
                self.grid, self.components_per_class
            ));
        }
        for (name, p) in [("psi_in", self.psi_in), ("psi_out", self.psi_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, s) in [("noise", self.noise), ("global_noise", self.global_noise)] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {s}"));
            }
        }
        if self.train_per_class == 0 || self.test_per_class == 0 || self.ood_per_class == 0 {
            return bad("per-class sample counts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub vocab: ComponentVocabulary,
    pub id_train: Dataset,
    pub id_test: Dataset,
    pub ood_tests: Vec<Dataset>,
}

/// Paths written by [`SynthWorld::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldFiles {
    pub vocab: PathBuf,
    pub id_train: PathBuf,
    pub id_test: PathBuf,
    pub ood_tests: Vec<PathBuf>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    normalized(&gaussian(rng, dim))
}

/// `normalize(base + scale * g)` with `g ~ N(0, I / dim)`.
fn perturbed(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    let s = scale / (base.len() as f64).sqrt();
    let g = gaussian(rng, base.len());
    normalized(&base.iter().zip(&g).map(|(b, g)| b + s * g).collect::<Vec<_>>())
}

/// Unit vectors, orthonormalized while the dimension allows.
fn text_embeddings(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for i in 0..count {
        let mut v = gaussian(rng, dim);
        if i < dim {
            for u in &out[..i] {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        out.push(normalized(&v));
    }
    out
}

struct ClassModel {
    text: Vec<f64>,
    component_texts: Vec<Vec<f64>>,
    /// Top-left `(row, col)` of each component block.
    layout: Vec<(usize, usize)>,
    /// Prototype token of each block patch, `[component][subpatch]`.
    prototypes: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, PartialEq)]
enum SampleKind {
    Id,
    Shift,
    Compositional,
}

const SUBPATCHES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

fn component_name(p: usize) -> String {
    format!("part{p}")
}

fn class_name(y: usize) -> String {
    format!("class{y:02}")
}

fn derangement(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

struct Generator<'a> {
    config: &'a SynthConfig,
    models: Vec<ClassModel>,
    positions: Vec<[f32; 2]>,
}

impl Generator<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng, id: String, y: usize, kind: SampleKind) -> EmbeddingRecord {
        let c = self.config;
        let (g, dim, p_count) = (c.grid, c.dim, c.components_per_class);
        let model = &self.models[y];
        let global = perturbed(rng, &model.text, c.global_noise);
        let mut record = EmbeddingRecord::new(id, to_f32(&global));

        let psi = if kind == SampleKind::Shift { c.psi_out } else { c.psi_in };
        for (yy, other) in self.models.iter().enumerate() {
            for p in 0..p_count {
                let feature = if yy == y && rng.random::<f64>() < psi {
                    perturbed(rng, &other.component_texts[p], c.noise)
                } else {
                    random_unit(rng, dim)
                };
                record
                    .components
                    .insert(component_key(&class_name(yy), &component_name(p)), to_f32(&feature));
            }
        }

        let placement: Vec<usize> = match kind {
            SampleKind::Compositional => derangement(rng, p_count),
            _ => (0..p_count).collect(),
        };
        let dr = rng.random_range(-1i64..=1);
        let dc = rng.random_range(-1i64..=1);
        let mut tokens: Vec<Vec<f64>> = (0..g * g).map(|_| random_unit(rng, dim)).collect();
        let mut block_patches = vec![Vec::new(); p_count];
        for p in 0..p_count {
            let (r0, c0) = model.layout[placement[p]];
            for (s, (sr, sc)) in SUBPATCHES.iter().enumerate() {
                let r = (r0 as i64 + dr) as usize + sr;
                let col = (c0 as i64 + dc) as usize + sc;
                let n = r * g + col;
                tokens[n] = perturbed(rng, &model.prototypes[p][s], c.noise);
                block_patches[p].push(n);
            }
        }
        for (p, patches) in block_patches.iter().enumerate() {
            let mask: Vec<f32> = (0..g * g)
                .map(|n| {
                    let u = rng.random::<f64>();
                    if patches.contains(&n) {
                        0.8 + 0.2 * u
                    } else {
                        0.1 * u
                    }
                })
                .map(|v| v as f32)
                .collect();
            record
                .masks
                .insert(component_key(&class_name(y), &component_name(p)), mask);
        }
        let data: Vec<f32> = tokens.iter().flat_map(|t| to_f32(t)).collect();
        record.tokens = Some(TokenGrid::new(g, g, dim, data).expect("token grid shape is consistent"));
        record.positions = Some(self.positions.clone());
        record
    }
}

fn dataset(role: Role, name: &str, records: Vec<EmbeddingRecord>, labels: BTreeMap<String, String>) -> Dataset {
    Dataset {
        role,
        name: name.into(),
        records,
        labels,
    }
}

/// Generates a world deterministically from `config.seed`.
pub fn synth_world(config: &SynthConfig) -> Result<SynthWorld, Error> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let (p_count, dim, g) = (c.components_per_class, c.dim, c.grid);
    let texts = text_embeddings(&mut rng, c.classes * (1 + p_count), dim);

    let side = c.cells_per_side();
    let mut models = Vec::with_capacity(c.classes);
    for y in 0..c.classes {
        let mut cells: Vec<(usize, usize)> = (0..side * side)
            .map(|i| (1 + 2 * (i / side), 1 + 2 * (i % side)))
            .collect();
        cells.shuffle(&mut rng);
        cells.truncate(p_count);
        let component_texts: Vec<Vec<f64>> = (0..p_count)
            .map(|p| texts[c.classes + y * p_count + p].clone())
            .collect();
        let prototypes = component_texts
            .iter()
            .map(|t| {
                SUBPATCHES
                    .iter()
                    .map(|_| {
                        let u = random_unit(&mut rng, dim);
                        normalized(&t.iter().zip(&u).map(|(a, b)| a + b).collect::<Vec<_>>())
                    })
                    .collect()
            })
            .collect();
        models.push(ClassModel {
            text: texts[y].clone(),
            component_texts,
            layout: cells,
            prototypes,
        });
    }

    let classes = models
        .iter()
        .enumerate()
        .map(|(y, m)| ClassEntry {
            name: class_name(y),
            class_embedding: to_f32(&m.text),
            components: m
                .component_texts
                .iter()
                .enumerate()
                .map(|(p, t)| ComponentEntry {
                    name: component_name(p),
                    embedding: to_f32(t),
                })
                .collect(),
            global_only: false,
        })
        .collect();
    let vocab = ComponentVocabulary::new(dim, classes, NormPolicy::Renormalize)?;

    let positions: Vec<[f32; 2]> = (0..g * g)
        .map(|n| [((n % g) as f64 + 0.5) / g as f64, ((n / g) as f64 + 0.5) / g as f64])
        .map(|[x, y]| [x as f32, y as f32])
        .collect();
    let generator = Generator {
        config: c,
        models,
        positions,
    };

    let mut split = |prefix: &str, per_class: usize, kind: SampleKind| {
        let mut records = Vec::with_capacity(c.classes * per_class);
        let mut labels = BTreeMap::new();
        for y in 0..c.classes {
            for i in 0..per_class {
                let id = format!("{prefix}_{}_{i:04}", class_name(y));
                labels.insert(id.clone(), class_name(y));
                let mut record = generator.sample(&mut rng, id, y, kind);
                record
                    .validate(NormPolicy::Renormalize)
                    .expect("generated records are well formed");
                records.push(record);
            }
        }
        (records, labels)
    };
    let (train, train_labels) = split("train", c.train_per_class, SampleKind::Id);
    let (test, _) = split("test", c.test_per_class, SampleKind::Id);
    let (shift, _) = split("shift", c.ood_per_class, SampleKind::Shift);
    let (comp, _) = split("comp", c.ood_per_class, SampleKind::Compositional);

    Ok(SynthWorld {
        config: c.clone(),
        vocab,
        id_train: dataset(Role::IdTrain, "id_train", train, train_labels),
        id_test: dataset(Role::IdTest, "id_test", test, BTreeMap::new()),
        ood_tests: vec![
            dataset(Role::OodTest, "component_shift", shift, BTreeMap::new()),
            dataset(Role::OodTest, "compositional", comp, BTreeMap::new()),
        ],
    })
}

impl SynthWorld {
    /// Writes `vocab.json`, `synth.json`, and one pack plus manifest per split.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<WorldFiles, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        let vocab = dir.join("vocab.json");
        self.vocab.save(&vocab)?;
        let config_path = dir.join("synth.json");
        let mut text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        text.push('\n');
        fs::write(&config_path, text).map_err(|e| StoreError::io(&config_path, e))?;
        let write = |d: &Dataset| -> Result<PathBuf, StoreError> {
            let pack = format!("{}.coodt", d.name);
            save_tensor_pack(&d.records, dir.join(&pack))?;
            let manifest = dir.join(format!("{}.json", d.name));
            DatasetManifest {
                role: d.role,
                name: d.name.clone(),
                packs: vec![PathBuf::from(pack)],
                labels: d.labels.clone(),
            }
            .save(&manifest)?;
            Ok(manifest)
        };
        Ok(WorldFiles {
            vocab,
            id_train: write(&self.id_train)?,
            id_test: write(&self.id_test)?,
            ood_tests: self.ood_tests.iter().map(write).collect::<Result<_, _>>()?,
        })
    }
}
