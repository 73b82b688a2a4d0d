//! End-to-end commands: load inputs, subsample, compute, then write every
//! output file. Nothing is written until all inputs have loaded and all
//! results are computed, and each file is written atomically.
//!
//! Subsample counts are caps: a set with fewer rows than requested is used
//! whole. Reals are drawn with `seed`, fakes with `seed + 1`.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::Serialize;

use crate::analysis::{
    default_p_grid, histogram, nnd_ranking, rank_correlation_study, slices, union_compare, Bin,
    HistogramSpec, RankCorrelationStudy, RankedSample, TopPStudy, UnionComparison,
};
use crate::cache::{self, SubsampleSpec};
use crate::error::{Error, Result};
use crate::features::{load_features, subsample_indices, DatasetManifest, FeatureSet, Role};
use crate::knn::{knn_radii, DistanceConfig, ManifoldIndex};
use crate::metrics::{self, evaluate, MetricSummary, RarityReport, RealismReport};
use crate::report::{self, Format, JsonReal};
use crate::svg;

/// Number of ids in each top-N list.
pub const TOP_N: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub real_count: usize,
    pub fake_count: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: Format,
    pub distance: DistanceConfig,
    /// Worker threads; 0 uses every logical processor.
    pub workers: usize,
    pub realism_prune: f64,
    /// Read and write radii caches beside the real feature file.
    pub radii_cache: bool,
    pub histogram_bins: usize,
    /// compare-datasets: bin raw scores instead of max-normalized ones.
    pub raw_scores: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 3,
            real_count: 30_000,
            fake_count: 10_000,
            seed: 0,
            out_dir: PathBuf::from("."),
            format: Format::Csv,
            distance: DistanceConfig::default(),
            workers: 0,
            realism_prune: 0.0,
            radii_cache: false,
            histogram_bins: HistogramSpec::DEFAULT_BINS,
            raw_scores: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        for (name, count) in [("real", self.real_count), ("fake", self.fake_count)] {
            if count < self.k + 1 {
                return Err(Error::Argument(format!(
                    "{name} count {count} must be at least k + 1 = {}",
                    self.k + 1
                )));
            }
        }
        if self.histogram_bins == 0 {
            return Err(Error::Argument("histogram bin count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.realism_prune) {
            return Err(Error::Argument(format!(
                "realism prune fraction {} outside [0, 1)",
                self.realism_prune
            )));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }

    fn real_seed(&self) -> u64 {
        self.seed
    }

    fn fake_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

/// A loaded set, possibly subsampled, with the spec that produced it.
struct Input {
    path: PathBuf,
    set: Arc<FeatureSet>,
    subsample: Option<SubsampleSpec>,
}

fn load_capped(path: &Path, count: usize, seed: u64) -> Result<Input> {
    let full = load_features(path)?;
    let n = full.len();
    let (set, subsample) = if count < n {
        let idx = subsample_indices(n, count, seed)?;
        info!("{}: using {count} of {n} rows (seed {seed})", path.display());
        (full.select(&idx)?, Some(SubsampleSpec { count, seed }))
    } else {
        (full, None)
    };
    Ok(Input {
        path: path.to_owned(),
        set: Arc::new(set),
        subsample,
    })
}

fn check_same_dim(a: &FeatureSet, b: &FeatureSet, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {what} have {} and {} columns",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn real_index(input: &Input, cfg: &RunConfig, k: usize) -> Result<ManifoldIndex> {
    if cfg.radii_cache {
        let (index, outcome) =
            cache::cached_knn_radii(&input.path, input.set.clone(), k, input.subsample, &cfg.distance)?;
        info!("radii cache for {} at k = {k}: {outcome:?}", input.path.display());
        Ok(index)
    } else {
        knn_radii(input.set.clone(), k, &cfg.distance)
    }
}

/// Files staged in memory, written together once everything succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, dir: &Path, name: impl AsRef<Path>, content: impl Into<Vec<u8>>) {
        self.files.push((dir.join(name), content.into()));
    }

    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            report::write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn subsample_ids(out: &mut Outputs, dir: &Path, label: &str, input: &Input) {
    out.add(
        dir,
        format!("{label}.ids.txt"),
        report::id_lines(input.set.ids().iter().map(String::as_str)),
    );
}

fn rarity_text(report: &RarityReport, format: Format) -> Result<String> {
    match format {
        Format::Csv => report::rarity_csv(report),
        Format::Json => report::rarity_json(report),
    }
}

fn realism_text(report: &RealismReport, format: Format) -> Result<String> {
    match format {
        Format::Csv => report::realism_csv(report),
        Format::Json => report::realism_json(report),
    }
}

fn ranking_text(ranking: &[RankedSample], column: &str, format: Format) -> Result<String> {
    match format {
        Format::Csv => report::ranking_csv(ranking, column),
        Format::Json => report::to_json(ranking),
    }
}

/// The `TOP_N` highest-scoring samples of a report.
pub fn top_scored(report: &RarityReport, n: usize) -> Vec<RankedSample> {
    report
        .ranked()
        .into_iter()
        .filter_map(|r| Some((r, r.score?)))
        .take(n)
        .enumerate()
        .map(|(rank, (r, score))| RankedSample {
            rank,
            sample_id: r.sample_id.clone(),
            value: score,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealismSummary {
    pub prune_fraction: f64,
    /// Mean over finite values.
    pub mean: JsonReal,
    pub median: JsonReal,
    pub min: JsonReal,
    pub max: JsonReal,
    pub n_infinite: usize,
}

impl RealismSummary {
    fn new(values: &[f64], prune_fraction: f64) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let finite: Vec<f64> = sorted.iter().copied().filter(|v| v.is_finite()).collect();
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self {
            prune_fraction,
            mean: JsonReal(mean),
            median: JsonReal(median),
            min: JsonReal(sorted[0]),
            max: JsonReal(sorted[n - 1]),
            n_infinite: n - finite.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    #[serde(flatten)]
    pub metrics: MetricSummary,
    pub n_scored: usize,
    pub n_oom: usize,
    pub oom_fraction: f64,
    pub rarity_mean: Option<f64>,
    pub rarity_max: Option<f64>,
    pub realism: RealismSummary,
    pub seed: u64,
}

pub struct ScoreResult {
    pub summary: ScoreSummary,
    pub rarity: RarityReport,
    pub realism: RealismReport,
    pub files: Vec<PathBuf>,
}

/// Rarity, realism and set-level metrics of one fake set.
///
/// Writes `rarity.<fmt>`, `realism.<fmt>`, `summary.json`, and the ids of
/// the rows used in `real.ids.txt` / `fake.ids.txt`.
pub fn cmd_score(real_path: &Path, fake_path: &Path, cfg: &RunConfig) -> Result<ScoreResult> {
    cfg.validate()?;
    let real = load_capped(real_path, cfg.real_count, cfg.real_seed())?;
    let fake = load_capped(fake_path, cfg.fake_count, cfg.fake_seed())?;
    check_same_dim(&real.set, &fake.set, "real and fake features")?;
    if fake.set.len() <= cfg.k {
        return Err(Error::Argument(format!(
            "recall at k = {} needs more than {} fake samples",
            cfg.k,
            fake.set.len()
        )));
    }

    let (rarity, realism, summary) = cfg.pool()?.install(|| -> Result<_> {
        let real_ix = real_index(&real, cfg, cfg.k)?;
        let fake_ix = knn_radii(fake.set.clone(), cfg.k, &cfg.distance)?;
        let eval = evaluate(&real_ix, &fake.set, cfg.realism_prune)?;
        let recall = metrics::recall(&real.set, &fake_ix)?;
        let rarity = RarityReport::from_evaluation(&eval, &fake.set, &real.set);
        let realism = RealismReport::from_evaluation(&eval, &fake.set);
        let scores = rarity.scores();
        let summary = ScoreSummary {
            metrics: MetricSummary {
                k: cfg.k,
                n_real: real.set.len(),
                n_fake: fake.set.len(),
                precision: eval.precision(),
                recall,
                density: eval.density(),
                coverage: eval.coverage(),
            },
            n_scored: rarity.n_scored,
            n_oom: rarity.n_oom,
            oom_fraction: rarity.oom_fraction(),
            rarity_mean: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
            rarity_max: scores.iter().copied().reduce(f64::max),
            realism: RealismSummary::new(&realism.values(), cfg.realism_prune),
            seed: cfg.seed,
        };
        Ok((rarity, realism, summary))
    })?;

    let dir = &cfg.out_dir;
    let ext = cfg.format.extension();
    let mut out = Outputs::default();
    out.add(dir, format!("rarity.{ext}"), rarity_text(&rarity, cfg.format)?);
    out.add(dir, format!("realism.{ext}"), realism_text(&realism, cfg.format)?);
    out.add(dir, "summary.json", report::to_json(&summary)?);
    subsample_ids(&mut out, dir, "real", &real);
    subsample_ids(&mut out, dir, "fake", &fake);
    let files = out.commit(dir)?;
    Ok(ScoreResult {
        summary,
        rarity,
        realism,
        files,
    })
}

/// File-name-safe form of a model name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub struct CompareModelsResult {
    pub top_p: TopPStudy,
    pub reports: Vec<(String, RarityReport)>,
    pub files: Vec<PathBuf>,
}

/// Score every fake entry of a manifest against its single real entry.
///
/// Writes `top_p.<fmt>`, `rarity_<model>.<fmt>`, `top10_<model>.<fmt>`,
/// `histogram.csv` / `histogram.svg` (normalized densities over a shared
/// range), and the subsample id files.
pub fn cmd_compare_models(manifest_path: &Path, cfg: &RunConfig) -> Result<CompareModelsResult> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let reals: Vec<_> = manifest.with_role(Role::Real).collect();
    let [real_entry] = reals.as_slice() else {
        return Err(Error::Config(format!(
            "manifest must have exactly one real entry, found {}",
            reals.len()
        )));
    };
    let fakes: Vec<_> = manifest.with_role(Role::Fake).collect();
    if fakes.is_empty() {
        return Err(Error::Config("manifest has no fake entries".into()));
    }
    let mut stems = std::collections::BTreeSet::new();
    for f in &fakes {
        if !stems.insert(file_stem(&f.name)) {
            return Err(Error::Config(format!(
                "model names collide after sanitizing for file names: `{}`",
                f.name
            )));
        }
    }

    let real = load_capped(&real_entry.path, cfg.real_count, cfg.real_seed())?;
    let models = fakes
        .iter()
        .map(|e| {
            let input = load_capped(&e.path, cfg.fake_count, cfg.fake_seed())?;
            if input.set.dim() != real.set.dim() {
                return Err(Error::Config(format!(
                    "entry `{}` has dimension {}, real entry `{}` has {}",
                    e.name,
                    input.set.dim(),
                    real_entry.name,
                    real.set.dim()
                )));
            }
            Ok((e.name.clone(), input))
        })
        .collect::<Result<Vec<_>>>()?;

    let reports = cfg.pool()?.install(|| -> Result<Vec<_>> {
        let index = real_index(&real, cfg, cfg.k)?;
        models
            .iter()
            .map(|(name, input)| Ok((name.clone(), metrics::rarity(&index, &input.set)?)))
            .collect()
    })?;
    let top_p = TopPStudy::new(
        default_p_grid(),
        reports.iter().map(|(n, r)| (n.as_str(), r)),
    )?;

    let score_series: Vec<Vec<f64>> = reports.iter().map(|(_, r)| r.scores()).collect();
    let spec = HistogramSpec::covering(
        score_series.iter().map(Vec::as_slice),
        cfg.histogram_bins,
        true,
    )?;
    let bins = score_series
        .iter()
        .map(|s| histogram(s, &spec))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<(&str, &[Bin])> = reports
        .iter()
        .zip(&bins)
        .map(|((n, _), b)| (n.as_str(), b.as_slice()))
        .collect();

    let dir = &cfg.out_dir;
    let ext = cfg.format.extension();
    let mut out = Outputs::default();
    let top_p_text = match cfg.format {
        Format::Csv => report::top_p_csv(&top_p)?,
        Format::Json => report::to_json(&top_p)?,
    };
    out.add(dir, format!("top_p.{ext}"), top_p_text);
    for ((name, r), (_, input)) in reports.iter().zip(&models) {
        let stem = file_stem(name);
        out.add(dir, format!("rarity_{stem}.{ext}"), rarity_text(r, cfg.format)?);
        out.add(
            dir,
            format!("top{TOP_N}_{stem}.{ext}"),
            ranking_text(&top_scored(r, TOP_N), "score", cfg.format)?,
        );
        subsample_ids(&mut out, dir, &format!("fake_{stem}"), input);
    }
    out.add(dir, "histogram.csv", report::histogram_csv(&named)?);
    out.add(
        dir,
        "histogram.svg",
        svg::histogram_chart("Rarity score density", "rarity score", &named),
    );
    subsample_ids(&mut out, dir, "real", &real);
    let files = out.commit(dir)?;
    Ok(CompareModelsResult {
        top_p,
        reports,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct NormalizationDoc {
    k: usize,
    n_a: usize,
    n_b: usize,
    normalization: f64,
    histogram_mode: &'static str,
}

pub struct CompareDatasetsResult {
    pub comparison: UnionComparison,
    pub files: Vec<PathBuf>,
}

/// Rarity of two real datasets on the manifold of their union.
///
/// Both sets are capped at `real_count`. Writes `rarity_a.<fmt>`,
/// `rarity_b.<fmt>`, `normalization.json`, `histogram.csv` /
/// `histogram.svg` (max-normalized scores unless `raw_scores`), the top-10
/// lists and the subsample id files.
pub fn cmd_compare_datasets(path_a: &Path, path_b: &Path, cfg: &RunConfig) -> Result<CompareDatasetsResult> {
    cfg.validate()?;
    let a = load_capped(path_a, cfg.real_count, cfg.real_seed())?;
    let b = load_capped(path_b, cfg.real_count, cfg.fake_seed())?;
    let comparison = cfg
        .pool()?
        .install(|| union_compare(&a.set, &b.set, cfg.k, &cfg.distance))?;

    let (series_a, series_b) = if cfg.raw_scores {
        (comparison.report_a.scores(), comparison.report_b.scores())
    } else {
        comparison.normalized()?
    };
    let spec = HistogramSpec::covering([series_a.as_slice(), series_b.as_slice()], cfg.histogram_bins, true)?;
    let bins_a = histogram(&series_a, &spec)?;
    let bins_b = histogram(&series_b, &spec)?;
    let named: [(&str, &[Bin]); 2] = [("a", &bins_a), ("b", &bins_b)];
    let mode = if cfg.raw_scores { "raw" } else { "max_normalized" };

    let dir = &cfg.out_dir;
    let ext = cfg.format.extension();
    let mut out = Outputs::default();
    for (label, r) in [("a", &comparison.report_a), ("b", &comparison.report_b)] {
        out.add(dir, format!("rarity_{label}.{ext}"), rarity_text(r, cfg.format)?);
        out.add(
            dir,
            format!("top{TOP_N}_{label}.{ext}"),
            ranking_text(&top_scored(r, TOP_N), "score", cfg.format)?,
        );
    }
    out.add(
        dir,
        "normalization.json",
        report::to_json(&NormalizationDoc {
            k: cfg.k,
            n_a: a.set.len(),
            n_b: b.set.len(),
            normalization: comparison.normalization,
            histogram_mode: mode,
        })?,
    );
    out.add(dir, "histogram.csv", report::histogram_csv(&named)?);
    let x_label = if cfg.raw_scores { "rarity score" } else { "normalized rarity score" };
    out.add(dir, "histogram.svg", svg::histogram_chart("Union-manifold rarity", x_label, &named));
    subsample_ids(&mut out, dir, "a", &a);
    subsample_ids(&mut out, dir, "b", &b);
    let files = out.commit(dir)?;
    Ok(CompareDatasetsResult { comparison, files })
}

pub struct RankAnalysisResult {
    pub study: RankCorrelationStudy,
    pub files: Vec<PathBuf>,
}

/// Serialized study files, exactly as `cmd_rank_analysis` writes them.
pub fn study_files(study: &RankCorrelationStudy) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        ("rank_matrix.csv", report::study_matrix_csv(study)?),
        ("rank_mean_row.csv", report::study_mean_row_csv(study)?),
        ("rank_oom.csv", report::study_oom_csv(study)?),
        ("study.json", report::to_json(study)?),
        (
            "heatmap.svg",
            svg::heatmap(
                study,
                &format!("Rarity rank correlation, fakes in M_{}", study.restriction),
            ),
        ),
    ])
}

/// Rank-correlation study of rarity across `ks`.
pub fn cmd_rank_analysis(
    real_path: &Path,
    fake_path: &Path,
    ks: RangeInclusive<usize>,
    restriction: usize,
    cfg: &RunConfig,
) -> Result<RankAnalysisResult> {
    let (k_min, k_max) = (*ks.start(), *ks.end());
    if k_min == 0 || k_min > k_max {
        return Err(Error::Argument(format!("invalid k range {k_min}..={k_max}")));
    }
    if !ks.contains(&restriction) {
        return Err(Error::Argument(format!(
            "restriction {restriction} outside k range {k_min}..={k_max}"
        )));
    }
    let cfg_k = RunConfig {
        k: k_max,
        ..cfg.clone()
    };
    cfg_k.validate()?;
    let real = load_capped(real_path, cfg.real_count, cfg.real_seed())?;
    let fake = load_capped(fake_path, cfg.fake_count, cfg.fake_seed())?;
    check_same_dim(&real.set, &fake.set, "real and fake features")?;
    if k_max >= real.set.len() {
        return Err(Error::Argument(format!(
            "k = {k_max} needs at least {} real samples, got {}",
            k_max + 1,
            real.set.len()
        )));
    }
    let study = cfg.pool()?.install(|| {
        rank_correlation_study(real.set.clone(), &fake.set, ks, restriction, &cfg.distance)
    })?;

    let dir = &cfg.out_dir;
    let mut out = Outputs::default();
    for (name, text) in study_files(&study)? {
        out.add(dir, name, text);
    }
    subsample_ids(&mut out, dir, "real", &real);
    subsample_ids(&mut out, dir, "fake", &fake);
    let files = out.commit(dir)?;
    Ok(RankAnalysisResult { study, files })
}

pub struct NndResult {
    pub ranking: Vec<RankedSample>,
    pub files: Vec<PathBuf>,
}

/// NND ranking of a real set plus head, middle and tail slices of 10.
pub fn cmd_nnd(real_path: &Path, cfg: &RunConfig) -> Result<NndResult> {
    let real = load_capped(real_path, cfg.real_count, cfg.real_seed())?;
    if real.set.len() < 2 {
        return Err(Error::Argument("NND needs at least 2 samples".into()));
    }
    let ranking = cfg.pool()?.install(|| nnd_ranking(&real.set, &cfg.distance))?;
    let parts = slices(&ranking, TOP_N, cfg.seed);

    let dir = &cfg.out_dir;
    let ext = cfg.format.extension();
    let mut out = Outputs::default();
    out.add(dir, format!("nnd_ranking.{ext}"), ranking_text(&ranking, "nnd", cfg.format)?);
    for (name, part) in [("head", &parts.head), ("middle", &parts.middle), ("tail", &parts.tail)] {
        out.add(dir, format!("nnd_{name}.{ext}"), ranking_text(part, "nnd", cfg.format)?);
    }
    subsample_ids(&mut out, dir, "real", &real);
    let files = out.commit(dir)?;
    Ok(NndResult { ranking, files })
}
