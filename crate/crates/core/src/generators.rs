//! Seeded generators for the four synthetic families.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::milp::{MilpInstance, ObjSense, Row, RowSense};
use crate::seed::{derive_seed_path, rng_from, stream};

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    MaxCut,
    Packing,
    BinPacking,
    Planning,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::MaxCut,
        Family::Packing,
        Family::BinPacking,
        Family::Planning,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Family::MaxCut => "maxcut",
            Family::Packing => "packing",
            Family::BinPacking => "binpacking",
            Family::Planning => "planning",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown family `{s}` (maxcut, packing, binpacking, planning)"))
    }
}

/// Optional size overrides; `None` keeps the family default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeOverrides {
    pub vertices: Option<usize>,
    pub edges: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub seed: u64,
    pub count: usize,
    #[serde(default)]
    pub sizes: SizeOverrides,
}

impl GenSpec {
    pub fn new(family: Family, seed: u64, count: usize) -> Self {
        GenSpec {
            family,
            seed,
            count,
            sizes: SizeOverrides::default(),
        }
    }
}

/// Generates `spec.count` instances, instance `i` from its own sub-seed.
pub fn generate(spec: &GenSpec) -> Vec<MilpInstance> {
    (0..spec.count).map(|i| generate_one(spec, i)).collect()
}

pub fn generate_one(spec: &GenSpec, index: usize) -> MilpInstance {
    let seed = derive_seed_path(spec.seed, &[stream::GENERATE, index as u64]);
    let mut rng = rng_from(seed);
    let s = &spec.sizes;
    let mut inst = match spec.family {
        Family::MaxCut => max_cut(&mut rng, s.vertices.unwrap_or(14), s.edges.unwrap_or(40)),
        Family::Packing => packing(&mut rng, s.n.unwrap_or(60), s.m.unwrap_or(60)),
        Family::BinPacking => bin_packing(&mut rng, s.n.unwrap_or(66), s.m.unwrap_or(66)),
        Family::Planning => planning(&mut rng, s.horizon.unwrap_or(40)),
    };
    inst.name = format!("{}-s{}-{:04}", spec.family, spec.seed, index);
    inst.family = Some(spec.family.tag().to_string());
    inst.generator_version = Some(GENERATOR_VERSION);
    inst
}

fn max_cut(rng: &mut ChaCha8Rng, v: usize, e: usize) -> MilpInstance {
    let mut pairs: Vec<(usize, usize)> = (0..v)
        .flat_map(|a| (a + 1..v).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(rng);
    pairs.truncate(e);
    pairs.sort();
    let n = v + pairs.len();
    let mut obj = vec![0.0; n];
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let ev = v + k;
        obj[ev] = rng.gen_range(1..=10) as f64;
        rows.push(Row::le(vec![(a, -1.0), (b, -1.0), (ev, 1.0)], 0.0).unwrap());
        rows.push(Row::le(vec![(a, 1.0), (b, 1.0), (ev, 1.0)], 2.0).unwrap());
    }
    let mut inst = MilpInstance::new("", obj);
    inst.sense = ObjSense::Maximize;
    inst.rows = rows;
    inst.var_upper = vec![1.0; n];
    inst.integrality = (0..n).collect();
    inst
}

/// Resource rows with `A_ij ∈ {1..5}` at density 0.3; every column gets at
/// least one entry so the instance stays bounded.
fn resource_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let mut a: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut covered = vec![false; n];
    for row in a.iter_mut() {
        for (j, cov) in covered.iter_mut().enumerate() {
            if rng.gen_bool(0.3) {
                row.push((j, rng.gen_range(1..=5) as f64));
                *cov = true;
            }
        }
    }
    for (j, cov) in covered.iter().enumerate() {
        if !cov {
            let i = rng.gen_range(0..m);
            a[i].push((j, rng.gen_range(1..=5) as f64));
            a[i].sort_by_key(|e| e.0);
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        if row.is_empty() {
            row.push((i % n, rng.gen_range(1..=5) as f64));
        }
    }
    a
}

fn packing(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MilpInstance {
    let a = resource_matrix(rng, n, m);
    let obj: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=10) as f64).collect();
    let lo = (9 * n / 10).max(1);
    let hi = (10 * n).max(lo);
    let mut inst = MilpInstance::new("", obj);
    inst.sense = ObjSense::Maximize;
    inst.rows = a
        .into_iter()
        .map(|coeffs| Row::le(coeffs, rng.gen_range(lo..=hi) as f64).unwrap())
        .collect();
    inst.integrality = (0..n).collect();
    inst
}

/// Row capacity as a fraction of the row's total weight. With binary items a
/// capacity near `10n` would leave every row slack.
const BIN_CAPACITY: (f64, f64) = (0.9, 1.2);

fn bin_packing(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MilpInstance {
    let a = resource_matrix(rng, n, m);
    let obj: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=10) as f64).collect();
    let mut inst = MilpInstance::new("", obj);
    inst.sense = ObjSense::Maximize;
    for coeffs in a {
        let total: f64 = coeffs.iter().map(|c| c.1).sum();
        let lo = (BIN_CAPACITY.0 * total).ceil() as i64;
        let hi = ((BIN_CAPACITY.1 * total).ceil() as i64).max(lo);
        let rhs = rng.gen_range(lo..=hi) as f64;
        inst.rows.push(Row::le(coeffs, rhs).unwrap());
    }
    for j in 0..n {
        inst.rows.push(Row::le(vec![(j, 1.0)], 1.0).unwrap());
    }
    inst.var_upper = vec![1.0; n];
    inst.integrality = (0..n).collect();
    inst
}

/// Lot sizing: variables `y_t` (setup, binary), `p_t` (production), `s_t`
/// (end inventory), laid out as `[y | p | s]`.
fn planning(rng: &mut ChaCha8Rng, t: usize) -> MilpInstance {
    let d: Vec<f64> = (0..t).map(|_| rng.gen_range(1..=10) as f64).collect();
    let f: Vec<f64> = (0..t).map(|_| rng.gen_range(20..=60) as f64).collect();
    let h: Vec<f64> = (0..t).map(|_| rng.gen_range(1..=3) as f64).collect();
    let v: Vec<f64> = (0..t).map(|_| rng.gen_range(1..=5) as f64).collect();
    let (y, p, s) = (0, t, 2 * t);
    let mut obj = Vec::with_capacity(3 * t);
    obj.extend_from_slice(&f);
    obj.extend_from_slice(&v);
    obj.extend_from_slice(&h);
    let mut inst = MilpInstance::new("", obj);
    let mut remaining: f64 = d.iter().sum();
    for k in 0..t {
        inst.rows
            .push(Row::le(vec![(p + k, 1.0), (y + k, -remaining)], 0.0).unwrap());
        remaining -= d[k];
    }
    for k in 0..t {
        let mut coeffs = vec![(p + k, 1.0), (s + k, -1.0)];
        if k > 0 {
            coeffs.push((s + k - 1, 1.0));
        }
        inst.rows
            .push(Row::new(coeffs, RowSense::Eq, d[k]).unwrap());
    }
    for k in 0..t {
        inst.var_upper[y + k] = 1.0;
    }
    inst.integrality = (0..t).collect();
    inst
}
