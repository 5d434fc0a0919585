//! Timing of one composite barrier evaluation (value plus Lie derivatives)
//! against the number of obstacles, for the analytic and finite-difference
//! gradient paths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{chain_eval, ChainParams, ChainValues};
use crate::composite::{compose, compose_numeric, compose_parallel, CompositeParams};
use crate::obstacles::ObstacleMap;
use crate::vehicle::{RotationMatrix, Vec3, VehicleParams, VehicleState};
use crate::{Error, Result};

const BOX_SIDE: f64 = 20.0;
const SEED: u64 = 0x5eed;
/// Obstacles per work item when the reduction runs in parallel.
const PARALLEL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Analytic,
    Numeric,
    Both,
}

impl GradientMode {
    fn expand(self) -> &'static [GradientMode] {
        match self {
            GradientMode::Analytic => &[GradientMode::Analytic],
            GradientMode::Numeric => &[GradientMode::Numeric],
            GradientMode::Both => &[GradientMode::Analytic, GradientMode::Numeric],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Analytic => "analytic",
            GradientMode::Numeric => "numeric",
            GradientMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub obstacle_counts: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub mode: GradientMode,
    /// More than one engages the chunked parallel reduction.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            obstacle_counts: vec![10, 100, 1000, 10000],
            repetitions: 30,
            warmup: 3,
            mode: GradientMode::Both,
            threads: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obstacle_counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter(
                "obstacle counts must be positive".into(),
            ));
        }
        if self.repetitions < 10 {
            return Err(Error::InvalidParameter(format!(
                "at least 10 repetitions are needed, got {}",
                self.repetitions
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub count: usize,
    pub mode: GradientMode,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
    /// Raw timed samples in ms.
    #[serde(skip)]
    pub samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchResult {
    pub cells: Vec<BenchCell>,
}

impl BenchResult {
    pub fn cell(&self, count: usize, mode: GradientMode) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.count == count && c.mode == mode)
    }
}

/// The fixed mid-flight state every evaluation is timed at: pitched and rolled
/// a little, moving at 1.2 m/s, thrust above hover.
pub fn representative_state(vp: &VehicleParams) -> VehicleState {
    VehicleState {
        x: Vec3::new(0.3, -0.2, -1.5),
        v: Vec3::new(1.0, 0.5, -0.4),
        r: RotationMatrix::from_euler_angles(0.1, -0.15, 0.4),
        thrust: 1.1 * vp.hover_thrust(),
    }
}

/// `n` obstacles uniform in a 20 m box centered on the origin.
pub fn bench_obstacles(n: usize, epsilon: f64) -> ObstacleMap {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ n as u64);
    let h = 0.5 * BOX_SIDE;
    let points = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            )
        })
        .collect();
    ObstacleMap::new(points, epsilon)
}

struct Workload {
    map: ObstacleMap,
    state: VehicleState,
    chain: ChainParams,
    composite: CompositeParams,
    vehicle: VehicleParams,
}

impl Workload {
    fn analytic(&self, threads: usize) -> f64 {
        let chains: Vec<ChainValues> = self
            .map
            .points
            .iter()
            .map(|p| chain_eval(&self.state, p, &self.chain, &self.vehicle))
            .collect();
        let eval = if threads > 1 {
            compose_parallel(&chains, &self.map, &self.composite, PARALLEL_CHUNK)
        } else {
            compose(&chains, &self.map, &self.state, &self.composite)
        }
        .expect("bench maps are nonempty");
        eval.h1 + eval.lf_h1 + eval.lg_h1.sum()
    }

    fn numeric(&self) -> f64 {
        let (lf, lg) = compose_numeric(
            &self.map,
            &self.state,
            &self.composite,
            &self.chain,
            &self.vehicle,
        )
        .expect("bench maps are nonempty");
        lf + lg.sum()
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let chain = ChainParams::default();
    let vehicle = VehicleParams::default();
    let mut cells = Vec::new();
    for &count in &cfg.obstacle_counts {
        let work = Workload {
            map: bench_obstacles(count, chain.epsilon),
            state: representative_state(&vehicle),
            chain,
            composite: CompositeParams::default(),
            vehicle,
        };
        for &mode in cfg.mode.expand() {
            let once = || match mode {
                GradientMode::Numeric => work.numeric(),
                _ => work.analytic(cfg.threads),
            };
            let samples_ms = pool.install(|| {
                for _ in 0..cfg.warmup {
                    std::hint::black_box(once());
                }
                (0..cfg.repetitions)
                    .map(|_| {
                        let start = Instant::now();
                        std::hint::black_box(once());
                        start.elapsed().as_secs_f64() * 1e3
                    })
                    .collect::<Vec<f64>>()
            });
            let mut sorted = samples_ms.clone();
            sorted.sort_by(f64::total_cmp);
            cells.push(BenchCell {
                count,
                mode,
                median_ms: median(&sorted),
                p10_ms: percentile(&sorted, 10.0),
                p90_ms: percentile(&sorted, 90.0),
                samples_ms,
            });
        }
    }
    Ok(BenchResult { cells })
}

/// Least-squares slope of `log(median)` against `log(count)`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(c, _)| (*c as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, t)| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub const REPORT_HEADER: &str = "count,mode,median_ms,p10_ms,p90_ms";

pub fn report_csv(r: &BenchResult) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for c in &r.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.count,
            c.mode.name(),
            c.median_ms,
            c.p10_ms,
            c.p90_ms
        );
    }
    out
}

pub fn report(r: &BenchResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report_csv(r)).map_err(|e| Error::io(path, e))
}

pub fn parse_report(text: &str, path: &Path) -> Result<BenchResult> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut cells = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(i + 1, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(i + 1, format!("not a number: {s:?}")))
        };
        let mode = match f[1] {
            "analytic" => GradientMode::Analytic,
            "numeric" => GradientMode::Numeric,
            other => return Err(err(i + 1, format!("unknown mode {other:?}"))),
        };
        cells.push(BenchCell {
            count: f[0]
                .parse()
                .map_err(|_| err(i + 1, format!("bad count {:?}", f[0])))?,
            mode,
            median_ms: num(f[2])?,
            p10_ms: num(f[3])?,
            p90_ms: num(f[4])?,
            samples_ms: Vec::new(),
        });
    }
    Ok(BenchResult { cells })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<BenchResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text, path)
}
