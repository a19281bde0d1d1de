//! Paired synthetic volumes and tabular records with a planted signal that
//! each modality carries only part of the time, patient-level splits, and
//! the on-disk dataset layout.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::emr::TabularFrame;
use crate::error::{Error, Result};

pub const VOLUME_FILE: &str = "volumes.bin";
pub const EMR_FILE: &str = "emr.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const VOLUME_MAGIC: &[u8; 4] = b"PEMV";
pub const VOLUME_VERSION: u32 = 1;
/// magic + version + five u32 extents
pub const VOLUME_HEADER_BYTES: u64 = 28;

const LATENT_DIM: usize = 4;
const LAYOUT_SALT: u64 = 0x6c61_796f_7574;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_patients: usize,
    /// C, D, H, W
    pub dims: [usize; 4],
    pub n_informative: usize,
    pub n_decoy: usize,
    pub n_noise: usize,
    pub p_img: f64,
    pub p_emr: f64,
    pub sigma_img: f64,
    pub sigma_emr: f64,
    /// Mean blob brightness above background.
    pub blob_intensity: f64,
    /// Magnitude of the label-driven shift of each informative column.
    pub emr_shift: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_patients: 512,
            dims: [1, 16, 32, 32],
            n_informative: 12,
            n_decoy: 4,
            n_noise: 24,
            p_img: 0.7,
            p_emr: 0.7,
            sigma_img: 0.8,
            sigma_emr: 1.0,
            blob_intensity: 2.0,
            emr_shift: 0.8,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_img", self.p_img), ("p_emr", self.p_emr)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("{name} = {p} outside (0, 1]")));
            }
        }
        if self.dims.contains(&0) || self.n_patients == 0 {
            return Err(Error::Config("dimensions and patient count must be positive".into()));
        }
        if self.n_columns() == 0 {
            return Err(Error::Config("at least one tabular column is required".into()));
        }
        if !(self.sigma_img >= 0.0 && self.sigma_emr >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.n_informative + self.n_decoy + self.n_noise
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Column roles in file order. The order is a seeded shuffle so roles
    /// cannot be read off positions.
    pub fn column_roles(&self) -> Vec<ColumnRole> {
        let mut roles: Vec<ColumnRole> = std::iter::repeat_n(ColumnRole::Informative, self.n_informative)
            .chain(std::iter::repeat_n(ColumnRole::Decoy, self.n_decoy))
            .chain(std::iter::repeat_n(ColumnRole::Noise, self.n_noise))
            .collect();
        roles.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ LAYOUT_SALT));
        roles
    }

    pub fn column_names(&self) -> Vec<String> {
        (0..self.n_columns()).map(|i| format!("x{i:02}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnRole {
    Informative,
    /// Constant across patients.
    Decoy,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!("unknown split `{s}` (train, val, test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// `C·D·H·W` values, row-major.
    pub volume: Vec<f32>,
    pub tabular: Vec<f64>,
    pub label: u8,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dims: [usize; 4],
    pub columns: Vec<String>,
    pub records: Vec<PatientRecord>,
}

/// What the generator planted for one patient; not part of the files.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSignal {
    pub image: bool,
    pub emr: bool,
    /// Blob centre (D, H, W) and semi-axes, present for image carriers.
    pub blob: Option<([f64; 3], [f64; 3])>,
}

impl PlantedSignal {
    pub fn in_blob(&self, d: usize, h: usize, w: usize) -> bool {
        self.blob.is_some_and(|(c, r)| {
            let p = [d as f64, h as f64, w as f64];
            (0..3).map(|i| ((p[i] - c[i]) / r[i]).powi(2)).sum::<f64>() <= 1.0
        })
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates the dataset with every record in the training split; see
/// [`split_patients`].
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    Ok(generate_with_truth(cfg)?.0)
}

/// Draw order, all from one ChaCha8 stream seeded with `cfg.seed`:
/// 1. per informative column: shift sign (uniform), then 4 latent loadings;
/// 2. per patient: label (uniform < 0.5), 4 latent normals, carrier pairs
///    (image uniform, EMR uniform) redrawn until one holds (positives only),
///    every voxel's noise in row-major order, then each non-decoy column's
///    noise in column order.
///
/// The column layout comes from a separate stream (see [`GenConfig::column_roles`]).
pub fn generate_with_truth(cfg: &GenConfig) -> Result<(Dataset, Vec<PlantedSignal>)> {
    cfg.validate()?;
    let roles = cfg.column_roles();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let loadings: Vec<(f64, [f64; LATENT_DIM])> = (0..cfg.n_informative)
        .map(|_| {
            let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            let mut b = [0.0; LATENT_DIM];
            b.iter_mut().for_each(|v| *v = 0.3 * normal(&mut rng));
            (sign * cfg.emr_shift, b)
        })
        .collect();

    let [_, d, h, w] = cfg.dims;
    let radii = [d as f64 / 6.0, h as f64 / 6.0, w as f64 / 6.0].map(|r| r.max(1.0));
    let mut records = Vec::with_capacity(cfg.n_patients);
    let mut truth = Vec::with_capacity(cfg.n_patients);
    for p in 0..cfg.n_patients {
        let label = u8::from(rng.random::<f64>() < 0.5);
        let mut u = [0.0; LATENT_DIM];
        u.iter_mut().for_each(|v| *v = normal(&mut rng));
        let (image, emr) = if label == 1 {
            loop {
                let i = rng.random::<f64>() < cfg.p_img;
                let e = rng.random::<f64>() < cfg.p_emr;
                if i || e {
                    break (i, e);
                }
            }
        } else {
            (false, false)
        };

        let mut volume: Vec<f64> = (0..cfg.voxels()).map(|_| cfg.sigma_img * normal(&mut rng)).collect();
        let mut sig = PlantedSignal {
            image,
            emr,
            blob: None,
        };
        if image {
            let ext = [d, h, w];
            let centre: [f64; 3] = std::array::from_fn(|i| {
                let mid = (ext[i] as f64 - 1.0) / 2.0;
                let c = mid + 0.15 * ext[i] as f64 * u[i + 1];
                c.clamp(radii[i].min(mid), (ext[i] as f64 - 1.0 - radii[i]).max(mid))
            });
            let intensity = cfg.blob_intensity * (1.0 + 0.25 * u[0]).max(0.25);
            sig.blob = Some((centre, radii));
            let per_channel = d * h * w;
            for (i, v) in volume.iter_mut().enumerate() {
                let r = i % per_channel;
                if sig.in_blob(r / (h * w), (r / w) % h, r % w) {
                    *v += intensity;
                }
            }
        }

        let mut row = Vec::with_capacity(roles.len());
        let mut inf = 0;
        for role in &roles {
            match role {
                ColumnRole::Decoy => row.push(1.0),
                ColumnRole::Noise => row.push(cfg.sigma_emr * normal(&mut rng)),
                ColumnRole::Informative => {
                    let mut v = cfg.sigma_emr * normal(&mut rng);
                    if emr {
                        let (a, b) = &loadings[inf];
                        v += a * (1.0 + b.iter().zip(&u).map(|(b, u)| b * u).sum::<f64>());
                    }
                    inf += 1;
                    row.push(v);
                }
            }
        }

        records.push(PatientRecord {
            id: format!("P{p:05}"),
            volume: volume.into_iter().map(|v| v as f32).collect(),
            tabular: row,
            label,
            split: Split::Train,
        });
        truth.push(sig);
    }
    Ok((
        Dataset {
            dims: cfg.dims,
            columns: cfg.column_names(),
            records,
        },
        truth,
    ))
}

/// Shuffles patients with `seed`; `floor(n·val)` go to validation,
/// `floor(n·test)` to test, the rest to training.
pub fn split_patients(ds: &mut Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<()> {
    let n = ds.records.len();
    if n < 3 {
        return Err(Error::Data(format!("cannot split {n} patients three ways")));
    }
    let (tr, va, te) = fractions;
    if [tr, va, te].iter().any(|f| !(0.0..=1.0).contains(f)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * va).floor() as usize;
    let n_test = (n as f64 * te).floor() as usize;
    for (pos, &i) in order.iter().enumerate() {
        ds.records[i].split = if pos < n_val {
            Split::Val
        } else if pos < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(())
}

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// What `gen` writes: the generated records, split 80/10/10 with the
/// generator seed.
pub fn generate_split(cfg: &GenConfig) -> Result<Dataset> {
    let mut ds = generate_dataset(cfg)?;
    split_patients(&mut ds, DEFAULT_FRACTIONS, cfg.seed)?;
    Ok(ds)
}

impl Dataset {
    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split == split).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn emr_frame(&self) -> Result<TabularFrame> {
        TabularFrame::new(
            self.columns.clone(),
            self.records.iter().map(|r| r.id.clone()).collect(),
            self.records.iter().flat_map(|r| r.tabular.iter().copied()).collect(),
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.records.len();
        let mut bytes = Vec::with_capacity(VOLUME_HEADER_BYTES as usize + 4 * n * self.voxels());
        bytes.extend_from_slice(VOLUME_MAGIC);
        bytes.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
        for e in [n, self.dims[0], self.dims[1], self.dims[2], self.dims[3]] {
            let e = u32::try_from(e).map_err(|_| Error::Data(format!("extent {e} exceeds u32")))?;
            bytes.extend_from_slice(&e.to_le_bytes());
        }
        for r in &self.records {
            if r.volume.len() != self.voxels() {
                return Err(Error::dim(format!("patient {} volume has {} values", r.id, r.volume.len())));
            }
            r.volume.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        }
        let vpath = dir.join(VOLUME_FILE);
        fs::write(&vpath, bytes).map_err(|e| Error::io(&vpath, e))?;

        let epath = dir.join(EMR_FILE);
        let file = fs::File::create(&epath).map_err(|e| Error::io(&epath, e))?;
        self.emr_frame()?.write_csv(std::io::BufWriter::new(file))?;

        let mpath = dir.join(MANIFEST_FILE);
        let mut m = String::from("patient_id,label,split\n");
        for r in &self.records {
            m.push_str(&format!("{},{},{}\n", r.id, r.label, r.split.as_str()));
        }
        let mut f = fs::File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
        f.write_all(m.as_bytes()).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut lines = manifest.lines();
        if lines.next() != Some("patient_id,label,split") {
            return Err(Error::Data(format!("{} must start with `patient_id,label,split`", mpath.display())));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |m: &str| Error::Data(format!("{} line {}: {m}", mpath.display(), i + 2));
            if f.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let label = match f[1] {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad("label must be 0 or 1")),
            };
            let split: Split = f[2].parse().map_err(|_| bad("split must be train, val or test"))?;
            entries.push((f[0].to_string(), label, split));
        }

        let vpath = dir.join(VOLUME_FILE);
        let bytes = fs::read(&vpath).map_err(|e| Error::io(&vpath, e))?;
        let (n, dims, floats) = parse_volumes(&bytes)?;
        if n != entries.len() {
            return Err(Error::Consistency(format!(
                "manifest lists {} patients but {VOLUME_FILE} holds {n}",
                entries.len()
            )));
        }

        let epath = dir.join(EMR_FILE);
        let ids: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
        let frame = TabularFrame::read_csv(&epath)?;
        if frame.n_rows() != n {
            return Err(Error::Consistency(format!("{EMR_FILE} has {} rows for {n} patients", frame.n_rows())));
        }
        let frame = frame.reorder_rows(&ids)?;

        let voxels: usize = dims.iter().product();
        let records = entries
            .into_iter()
            .enumerate()
            .map(|(i, (id, label, split))| PatientRecord {
                id,
                volume: floats[i * voxels..(i + 1) * voxels].to_vec(),
                tabular: frame.row(i).to_vec(),
                label,
                split,
            })
            .collect();
        Ok(Self {
            dims,
            columns: frame.columns().to_vec(),
            records,
        })
    }
}

/// Parses a volume file: header, then `N·C·D·H·W` little-endian f32 values.
pub fn parse_volumes(bytes: &[u8]) -> Result<(usize, [usize; 4], Vec<f32>)> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::Format {
                offset: bytes.len() as u64,
                message: format!("file ends inside the header (needs {VOLUME_HEADER_BYTES} bytes)"),
            })
    };
    if bytes.get(..4) != Some(VOLUME_MAGIC.as_slice()) {
        return Err(Error::Format {
            offset: 0,
            message: "missing PEMV magic".into(),
        });
    }
    let version = word(4)?;
    if version != VOLUME_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let mut ext = [0usize; 5];
    for (i, e) in ext.iter_mut().enumerate() {
        *e = word(8 + 4 * i)? as usize;
    }
    let [n, c, d, h, w] = ext;
    if [c, d, h, w].contains(&0) {
        return Err(Error::Format {
            offset: 12,
            message: format!("zero volume extent in {:?}", &ext[1..]),
        });
    }
    let count = n * c * d * h * w;
    let expected = VOLUME_HEADER_BYTES as usize + 4 * count;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected) as u64,
            message: format!("expected {expected} bytes for {n}×{c}×{d}×{h}×{w} volumes, found {}", bytes.len()),
        });
    }
    let floats = bytes[VOLUME_HEADER_BYTES as usize..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((n, [c, d, h, w], floats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GenConfig {
        GenConfig {
            n_patients: 10,
            dims: [1, 4, 6, 6],
            ..GenConfig::default()
        }
    }

    #[test]
    fn ten_patients_split_eight_one_one() {
        let mut ds = generate_dataset(&tiny()).unwrap();
        split_patients(&mut ds, DEFAULT_FRACTIONS, 3).unwrap();
        let counts = Split::ALL.map(|s| ds.indices(s).len());
        assert_eq!(counts, [8, 1, 1]);
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let mut a = generate_dataset(&tiny()).unwrap();
        let mut b = a.clone();
        split_patients(&mut a, DEFAULT_FRACTIONS, 9).unwrap();
        split_patients(&mut b, DEFAULT_FRACTIONS, 9).unwrap();
        assert_eq!(a, b);
        let total: usize = Split::ALL.iter().map(|&s| a.indices(s).len()).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn too_few_patients() {
        let mut ds = generate_dataset(&GenConfig {
            n_patients: 2,
            ..tiny()
        })
        .unwrap();
        assert!(matches!(split_patients(&mut ds, DEFAULT_FRACTIONS, 0), Err(Error::Data(_))));
    }

    #[test]
    fn decoys_are_constant() {
        let cfg = GenConfig {
            n_patients: 40,
            ..tiny()
        };
        let ds = generate_dataset(&cfg).unwrap();
        for (c, role) in cfg.column_roles().iter().enumerate() {
            if *role == ColumnRole::Decoy {
                assert!(ds.records.iter().all(|r| r.tabular[c] == ds.records[0].tabular[c]));
            }
        }
    }

    #[test]
    fn negatives_carry_nothing_positives_carry_something() {
        let (ds, truth) = generate_with_truth(&GenConfig {
            n_patients: 60,
            ..tiny()
        })
        .unwrap();
        for (r, t) in ds.records.iter().zip(&truth) {
            assert_eq!(r.label == 1, t.image || t.emr);
        }
    }

    #[test]
    fn bad_probability_is_config_error() {
        let cfg = GenConfig {
            p_img: 0.0,
            ..tiny()
        };
        assert!(matches!(generate_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn header_checks() {
        assert!(matches!(parse_volumes(b"PEMX"), Err(Error::Format { offset: 0, .. })));
        let mut b = b"PEMV".to_vec();
        b.extend_from_slice(&2u32.to_le_bytes());
        assert!(matches!(parse_volumes(&b), Err(Error::Format { offset: 4, .. })));
        let mut b = b"PEMV".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(parse_volumes(&b), Err(Error::Format { offset: 12, .. })));
    }
}
