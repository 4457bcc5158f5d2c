//! Parameter sweeps with deterministic per-point seeds, append-only
//! checkpoints and the campaign-level experiments built on them.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{bath_blp, ratio_from_energies, single_mode_blp, trace_distance_run, BathSetup, BlpSearch, SingleModeSetup};
use crate::fit::{fit_tanh, TanhFit};
use crate::quantum::C64;
use crate::siv::{build_full_hamiltonian, PhononModeParams, SivParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn linspace(name: impl Into<String>, min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidParameter(format!("axis needs at least 2 points, got {count}")));
        }
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::InvalidParameter(format!("axis range [{min}, {max}] is empty")));
        }
        let values = (0..count).map(|k| min + (max - min) * k as f64 / (count - 1) as f64).collect();
        Ok(Self { name: name.into(), values })
    }

    pub fn explicit(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("axis values must be finite and non-empty".into()));
        }
        Ok(Self { name: name.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major grid (last axis fastest) with seeds `base_seed XOR index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub base_seed: u64,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, base_seed: u64) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidParameter("grid needs non-empty axes".into()));
        }
        Ok(Self { axes, base_seed })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            out[k] = index % axis.len();
            index /= axis.len();
        }
        out
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.multi_index(index).iter().zip(&self.axes).map(|(i, a)| a.values[*i]).collect()
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.base_seed ^ index as u64
    }
}

/// One grid point as stored in memory and in checkpoint files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub coords: Vec<f64>,
    /// NaN for failed points (serialised as null).
    #[serde(with = "nan_as_null")]
    pub value: f64,
    pub seed: u64,
    /// "ok" or "failed: <reason>".
    pub status: String,
    pub evaluations: usize,
    pub wall_time: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_none()
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            Some(Repr::Num(v)) => v,
            Some(Repr::Text(t)) if t == "inf" => f64::INFINITY,
            Some(Repr::Text(t)) if t == "-inf" => f64::NEG_INFINITY,
            _ => f64::NAN,
        })
    }
}

impl PointRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// What a point evaluation returns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointOutcome {
    pub value: f64,
    pub evaluations: usize,
    pub extra: BTreeMap<String, f64>,
}

impl PointOutcome {
    pub fn value(value: f64) -> Self {
        Self { value, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub records: Vec<PointRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    /// Values as a (first axis) × (second axis) matrix.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Dimension(format!("matrix view needs a 2-D sweep, got {}-D", s.len())));
        }
        Ok(DMatrix::from_row_slice(s[0], s[1], &self.values()))
    }
}

/// Hex SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn read_checkpoint(path: &Path, grid: &GridSpec) -> Result<HashMap<usize, PointRecord>> {
    let mut done = HashMap::new();
    let Ok(file) = File::open(path) else {
        return Ok(done);
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        // a torn final line from an interrupted run is skipped
        let Ok(rec) = serde_json::from_str::<PointRecord>(&line) else {
            continue;
        };
        if rec.index < grid.len() && rec.seed == grid.seed(rec.index) {
            done.insert(rec.index, rec);
        }
    }
    Ok(done)
}

/// Evaluates `f(index, coords, seed)` on every grid point in parallel.
/// Finished points are appended to `checkpoint` (one JSON line each);
/// points already present there are not recomputed. Failures are recorded
/// and do not stop the sweep.
pub fn run_sweep<F>(grid: &GridSpec, checkpoint: Option<&Path>, f: F) -> Result<SweepResult>
where
    F: Fn(usize, &[f64], u64) -> Result<PointOutcome> + Sync,
{
    let done = match checkpoint {
        Some(p) => read_checkpoint(p, grid)?,
        None => HashMap::new(),
    };
    let writer = match checkpoint {
        Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };
    let todo: Vec<usize> = (0..grid.len()).filter(|i| !done.contains_key(i)).collect();
    let fresh = todo
        .par_iter()
        .map(|&index| {
            let coords = grid.point(index);
            let seed = grid.seed(index);
            let start = Instant::now();
            let outcome = f(index, &coords, seed);
            let wall_time = start.elapsed().as_secs_f64();
            let rec = match outcome {
                Ok(o) => PointRecord {
                    index,
                    coords,
                    value: o.value,
                    seed,
                    status: "ok".into(),
                    evaluations: o.evaluations,
                    wall_time,
                    extra: o.extra,
                },
                Err(e) => {
                    log::warn!("sweep point {index} failed: {e}");
                    PointRecord {
                        index,
                        coords,
                        value: f64::NAN,
                        seed,
                        status: format!("failed: {e}"),
                        evaluations: 0,
                        wall_time,
                        extra: BTreeMap::new(),
                    }
                }
            };
            if let Some(w) = &writer {
                let mut line = serde_json::to_string(&rec)?;
                line.push('\n');
                let mut file = w.lock().map_err(|_| Error::Contract("checkpoint writer poisoned".into()))?;
                file.write_all(line.as_bytes())?;
                file.flush()?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<PointRecord> = done.into_values().chain(fresh).collect();
    records.sort_by_key(|r| r.index);
    let mut metadata = BTreeMap::new();
    metadata.insert("points".into(), grid.len().to_string());
    metadata.insert("base_seed".into(), grid.base_seed.to_string());
    Ok(SweepResult { axes: grid.axes.clone(), records, metadata })
}

fn mirror_axis(axis: &Axis) -> Result<Axis> {
    if axis.values.first() != Some(&0.0) || axis.values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract(format!("axis '{}' must start at 0 and increase to be reflected", axis.name)));
    }
    let mut values: Vec<f64> = axis.values.iter().skip(1).rev().map(|v| -v).collect();
    values.extend_from_slice(&axis.values);
    Ok(Axis { name: axis.name.clone(), values })
}

/// Extends a first-quadrant 2-D sweep to the full plane by reflecting
/// about both axes. Quadrant-I records are kept bitwise.
pub fn reflect_quadrant(q: &SweepResult) -> Result<SweepResult> {
    let shape = q.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension("reflection needs a 2-D sweep".into()));
    }
    let (nx, ny) = (shape[0], shape[1]);
    let axes = vec![mirror_axis(&q.axes[0])?, mirror_axis(&q.axes[1])?];
    let (fx, fy) = (2 * nx - 1, 2 * ny - 1);
    let mut records = Vec::with_capacity(fx * fy);
    for i in 0..fx {
        for j in 0..fy {
            let src = &q.records[i.abs_diff(nx - 1) * ny + j.abs_diff(ny - 1)];
            let mut rec = src.clone();
            rec.index = i * fy + j;
            rec.coords = vec![axes[0].values[i], axes[1].values[j]];
            records.push(rec);
        }
    }
    let mut metadata = q.metadata.clone();
    metadata.insert("reflected".into(), "both axes".into());
    Ok(SweepResult { axes, records, metadata })
}

/// Flips a full-plane 2-D map about both axes (an involution).
pub fn mirror_both(full: &SweepResult) -> Result<SweepResult> {
    let shape = full.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension("mirror needs a 2-D sweep".into()));
    }
    let (nx, ny) = (shape[0], shape[1]);
    let mut out = full.clone();
    for i in 0..nx {
        for j in 0..ny {
            let src = &full.records[(nx - 1 - i) * ny + (ny - 1 - j)];
            out.records[i * ny + j].value = src.value;
        }
    }
    Ok(out)
}

/// N_D over (g, B_z). `g_values` are the per-component couplings
/// `g₁ = g₂` (rad/s), `bz_values` in tesla.
pub fn nd_vs_bz(base: &SingleModeSetup, g_values: &[f64], bz_values: &[f64], checkpoint: Option<&Path>) -> Result<SweepResult> {
    if !base.siv.is_longitudinal() {
        return Err(Error::Contract("N_D scans need a longitudinal field".into()));
    }
    let grid = GridSpec::new(vec![Axis::explicit("g", g_values.to_vec())?, Axis::explicit("B_z", bz_values.to_vec())?], 0)?;
    let mut r = run_sweep(&grid, checkpoint, |_, c, _| {
        let s = base.with_coupling(c[0], c[0]).with_field([0.0, 0.0, c[1]]);
        let run = trace_distance_run(&s)?;
        let mut o = PointOutcome::value(run.nd.value);
        o.extra.insert("final_distance".into(), *run.distance.last().unwrap_or(&f64::NAN));
        Ok(o)
    })?;
    r.metadata.insert("experiment".into(), "nd-bz".into());
    r.metadata.insert("config_hash".into(), config_hash(&(base, g_values, bz_values))?);
    Ok(r)
}

/// Maximum of each row of a (g, B_z) sweep: `(g, max N_D, B_z at max)`.
pub fn row_maxima(r: &SweepResult) -> Result<Vec<(f64, f64, f64)>> {
    let m = r.matrix()?;
    Ok((0..m.nrows())
        .map(|i| {
            let (j, v) = m.row(i).iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
            (r.axes[0].values[i], v, r.axes[1].values[j])
        })
        .collect())
}

/// BLP over the first quadrant of (B_x, B_z), reflected to the full plane.
pub fn blp_map(
    base: &SingleModeSetup,
    bx: &Axis,
    bz: &Axis,
    search: &BlpSearch,
    base_seed: u64,
    checkpoint: Option<&Path>,
) -> Result<(SweepResult, SweepResult)> {
    if bx.values.iter().chain(&bz.values).any(|v| *v < 0.0) {
        return Err(Error::Contract("BLP maps are computed on B_x, B_z >= 0 and reflected".into()));
    }
    let grid = GridSpec::new(vec![bx.clone(), bz.clone()], base_seed)?;
    let mut q = run_sweep(&grid, checkpoint, |_, c, seed| {
        let s = base.with_field([c[0], 0.0, c[1]]);
        let r = single_mode_blp(&s, search, seed)?;
        let mut o = PointOutcome { value: r.best_value, evaluations: r.evaluations, extra: BTreeMap::new() };
        o.extra.insert("converged".into(), if r.converged { 1.0 } else { 0.0 });
        Ok(o)
    })?;
    q.metadata.insert("experiment".into(), "blp-map".into());
    q.metadata.insert("config_hash".into(), config_hash(&(base, bx, bz, search, base_seed))?);
    let full = reflect_quadrant(&q)?;
    Ok((q, full))
}

/// Reorders eigenpairs inside degenerate clusters to follow `previous`.
fn continue_order(e: &mut [f64], v: &mut DMatrix<C64>, previous: &DMatrix<C64>, tol: f64) {
    let n = e.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && e[end] - e[end - 1] < tol {
            end += 1;
        }
        if end - start > 1 {
            let cols: Vec<usize> = (start..end).collect();
            let mut free = cols.clone();
            let mut assigned = vec![0usize; cols.len()];
            for (slot, &target) in cols.iter().enumerate() {
                let (k, _) = free
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| (k, previous.column(target).dotc(&v.column(c)).norm()))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                assigned[slot] = free.remove(k);
            }
            let snapshot = v.clone();
            let es: Vec<f64> = e.to_vec();
            for (slot, &src) in assigned.iter().enumerate() {
                v.set_column(start + slot, &snapshot.column(src));
                e[start + slot] = es[src];
            }
        }
        start = end;
    }
}

/// `ω_ph / |E_n − E_m|` over (B_x, B_z), traversed in serpentine order so
/// degenerate eigenpairs are continued from the neighbouring point.
pub fn spectrum_ratio_map(siv: &SivParams, mode: &PhononModeParams, bx: &Axis, bz: &Axis, levels: (usize, usize)) -> Result<SweepResult> {
    let (nx, ny) = (bx.len(), bz.len());
    let tol = 1e-9 * siv.delta();
    let mut records = vec![None; nx * ny];
    let mut previous: Option<DMatrix<C64>> = None;
    for i in 0..nx {
        for jj in 0..ny {
            let j = if i % 2 == 0 { jj } else { ny - 1 - jj };
            let start = Instant::now();
            let p = siv.clone().with_field([bx.values[i], 0.0, bz.values[j]]);
            let h = build_full_hamiltonian(&p, mode)?;
            let (mut e, mut v) = h.eigh()?;
            if let Some(prev) = &previous {
                continue_order(&mut e, &mut v, prev, tol);
            }
            let value = ratio_from_energies(&e, mode.omega_ph, siv.delta(), levels)?;
            previous = Some(v);
            let index = i * ny + j;
            records[index] = Some(PointRecord {
                index,
                coords: vec![bx.values[i], bz.values[j]],
                value,
                seed: 0,
                status: "ok".into(),
                evaluations: 1,
                wall_time: start.elapsed().as_secs_f64(),
                extra: BTreeMap::new(),
            });
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("experiment".into(), "spectrum-map".into());
    metadata.insert("levels".into(), format!("{},{}", levels.0, levels.1));
    metadata.insert("config_hash".into(), config_hash(&(siv, mode, bx, bz, levels))?);
    Ok(SweepResult {
        axes: vec![bx.clone(), bz.clone()],
        records: records.into_iter().map(|r| r.expect("every point visited")).collect(),
        metadata,
    })
}

/// Radii `|B|` at which a 2-D ratio map crosses 1 between neighbouring
/// grid points (linear interpolation along each grid line).
pub fn unit_ratio_crossings(map: &SweepResult) -> Result<Vec<f64>> {
    let m = map.matrix()?;
    let (bx, bz) = (&map.axes[0].values, &map.axes[1].values);
    let mut radii = Vec::new();
    let mut check = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        let (fa, fb) = (a.2 - 1.0, b.2 - 1.0);
        if fa.is_finite() && fb.is_finite() && fa * fb < 0.0 {
            let s = fa / (fa - fb);
            let x = a.0 + s * (b.0 - a.0);
            let z = a.1 + s * (b.1 - a.1);
            radii.push(x.hypot(z));
        }
    };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let here = (bx[i], bz[j], m[(i, j)]);
            if i + 1 < m.nrows() {
                check(here, (bx[i + 1], bz[j], m[(i + 1, j)]));
            }
            if j + 1 < m.ncols() {
                check(here, (bx[i], bz[j + 1], m[(i, j + 1)]));
            }
        }
    }
    Ok(radii)
}

#[derive(Clone, Debug)]
pub struct TemperatureScan {
    pub sweep: SweepResult,
    pub fit: std::result::Result<TanhFit, String>,
}

/// Structured-bath BLP per temperature with the `a·tanh(b/T) + c` fit.
pub fn blp_vs_temperature(
    base: &BathSetup,
    temperatures: &[f64],
    search: &BlpSearch,
    base_seed: u64,
    checkpoint: Option<&Path>,
) -> Result<TemperatureScan> {
    let grid = GridSpec::new(vec![Axis::explicit("T", temperatures.to_vec())?], base_seed)?;
    let mut sweep = run_sweep(&grid, checkpoint, |_, c, seed| {
        let r = bath_blp(&base.with_temperature(c[0]), search, seed)?;
        let mut o = PointOutcome { value: r.best_value, evaluations: r.evaluations, extra: BTreeMap::new() };
        o.extra.insert("converged".into(), if r.converged { 1.0 } else { 0.0 });
        Ok(o)
    })?;
    sweep.metadata.insert("experiment".into(), "blp-temp".into());
    sweep.metadata.insert("config_hash".into(), config_hash(&(base, temperatures, search, base_seed))?);
    let ok: Vec<&PointRecord> = sweep.records.iter().filter(|r| r.is_ok()).collect();
    let xs: Vec<f64> = ok.iter().map(|r| r.coords[0]).collect();
    let ys: Vec<f64> = ok.iter().map(|r| r.value).collect();
    let fit = fit_tanh(&xs, &ys).map_err(|e| e.to_string());
    Ok(TemperatureScan { sweep, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn grid() -> GridSpec {
        GridSpec::new(vec![Axis::linspace("x", 0.0, 1.0, 3).unwrap(), Axis::linspace("y", 0.0, 2.0, 4).unwrap()], 77).unwrap()
    }

    #[test]
    fn grid_indexing_and_seeds() {
        let g = grid();
        assert_eq!(g.len(), 12);
        assert_eq!(g.point(5), vec![0.5, 2.0 / 3.0]);
        assert_eq!(g.seed(5), 77 ^ 5);
        assert!(Axis::linspace("x", 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_records_failures() {
        let f = |i: usize, c: &[f64], s: u64| {
            if i == 3 {
                return Err(Error::Contract("boom".into()));
            }
            Ok(PointOutcome::value(c[0] * 10.0 + c[1] + (s % 7) as f64))
        };
        let a = run_sweep(&grid(), None, f).unwrap();
        let b = run_sweep(&grid(), None, f).unwrap();
        assert_eq!(a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.failures(), 1);
        assert!(a.records[3].value.is_nan());
        assert_eq!(a.matrix().unwrap().shape(), (3, 4));
    }

    #[test]
    fn resumed_sweep_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        let calls = AtomicUsize::new(0);
        let f = |_: usize, c: &[f64], s: u64| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(PointOutcome::value(c[0] - c[1] + s as f64 * 1e-3))
        };
        let full = run_sweep(&grid(), None, f).unwrap();
        // simulate an interruption: keep five records and a torn line
        let partial = run_sweep(&grid(), Some(&path), f).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().take(5).collect();
        std::fs::write(&path, format!("{}\n{{\"index\": 9, \"coo", kept.join("\n"))).unwrap();
        calls.store(0, Ordering::SeqCst);
        let resumed = run_sweep(&grid(), Some(&path), f).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 7);
        assert_eq!(resumed.values(), full.values());
        assert_eq!(partial.values(), full.values());
    }

    #[test]
    fn reflection_is_symmetric_and_preserves_quadrant() {
        let q = run_sweep(&grid(), None, |i, _, _| Ok(PointOutcome::value(i as f64 * 1.37))).unwrap();
        let full = reflect_quadrant(&q).unwrap();
        assert_eq!(full.shape(), vec![5, 7]);
        let m = full.matrix().unwrap();
        let qm = q.matrix().unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(m[(2 + i, 3 + j)].to_bits(), qm[(i, j)].to_bits());
            }
        }
        let twice = mirror_both(&mirror_both(&full).unwrap()).unwrap();
        assert_eq!(twice, full);
        assert_eq!(mirror_both(&full).unwrap().values(), full.values());
        let bad = SweepResult { axes: vec![Axis::linspace("x", 1.0, 2.0, 2).unwrap(), Axis::linspace("y", 0.0, 1.0, 2).unwrap()], ..q.clone() };
        assert!(reflect_quadrant(&bad).is_err());
    }

    #[test]
    fn checkpoint_values_round_trip_non_finite() {
        let rec = PointRecord {
            index: 0,
            coords: vec![1.0],
            value: f64::INFINITY,
            seed: 1,
            status: "ok".into(),
            evaluations: 1,
            wall_time: 0.0,
            extra: BTreeMap::new(),
        };
        let back: PointRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back.value, f64::INFINITY);
        let nan = PointRecord { value: f64::NAN, ..rec };
        let back: PointRecord = serde_json::from_str(&serde_json::to_string(&nan).unwrap()).unwrap();
        assert!(back.value.is_nan());
    }

    #[test]
    fn crossings_are_interpolated() {
        let g = GridSpec::new(vec![Axis::linspace("x", 0.0, 2.2, 7).unwrap(), Axis::linspace("z", 0.0, 2.2, 7).unwrap()], 0).unwrap();
        // ratio = 2 - |B| crosses 1 on the unit circle
        let r = run_sweep(&g, None, |_, c, _| Ok(PointOutcome::value(2.0 - c[0].hypot(c[1])))).unwrap();
        let radii = unit_ratio_crossings(&r).unwrap();
        assert!(!radii.is_empty());
        assert!(radii.iter().all(|r| (r - 1.0).abs() < 0.1), "{radii:?}");
    }
}
