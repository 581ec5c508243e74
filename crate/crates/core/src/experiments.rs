//! End-to-end pipelines: coherence scans over sampled separable states,
//! randomized connected correlators against their Haar averages, and the
//! entangled-state demonstration.
//!
//! Every pipeline is deterministic per seed. Work is spread over the rayon
//! pool but rows are always emitted in `(state_id, unitary_id)` order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::coherence::{mean_coherence, mean_coherence_gram};
use crate::correlators::CorrelatorTable;
use crate::error::{Error, Result};
use crate::haar::{haar_avg_connected, haar_monte_carlo, sample_haar_indexed, MAX_WEINGARTEN_ORDER};
use crate::sampling::{default_epsilon_grid, derive_seed, sweep_transition, Regime, SampledState};
use crate::states::{make_psi2, make_psi3, ModeSpaces, State, Statistics};

const STATISTICS: [Statistics; 2] = [Statistics::Fermion, Statistics::Boson];
const ORDER_TOLERANCE: f64 = 1e-9;
const CLOSED_FORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// States per statistics.
    pub n_states: usize,
    #[serde(rename = "N")]
    pub n_particles: usize,
    pub d_ext: usize,
    pub d_int: usize,
    /// Orders for the correlator pipeline; the coherence scan covers `2..=N`.
    pub k_list: Vec<usize>,
    pub n_unitaries: usize,
    /// Monte-Carlo samples used when no analytic Haar average is available.
    pub mc_samples: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Defaults to [`default_epsilon_grid`].
    #[serde(default)]
    pub epsilon_grid: Option<Vec<f64>>,
    /// Fermion states with `W^(2)` below this enter the power-law fit.
    #[serde(default = "default_fit_window")]
    pub fit_window: f64,
}

fn default_fit_window() -> f64 {
    0.05
}

impl RunConfig {
    pub fn fig1() -> Self {
        RunConfig {
            n_states: 1000,
            n_particles: 7,
            d_ext: 7,
            d_int: 7,
            k_list: Vec::new(),
            n_unitaries: 0,
            mc_samples: 0,
            seed: 2024,
            output_dir: None,
            epsilon_grid: None,
            fit_window: default_fit_window(),
        }
    }

    pub fn fig2() -> Self {
        RunConfig {
            n_states: 40,
            n_particles: 6,
            d_ext: 6,
            d_int: 6,
            k_list: vec![4, 5],
            n_unitaries: 5,
            mc_samples: 2000,
            seed: 2024,
            output_dir: None,
            epsilon_grid: None,
            fit_window: default_fit_window(),
        }
    }

    /// Overrides fields with the keys present in a JSON object.
    pub fn merged_with(&self, overrides: &serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(patch) = overrides else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(self)?;
        let obj = base.as_object_mut().expect("struct serializes to an object");
        for (key, value) in patch {
            obj.insert(key.clone(), value.clone());
        }
        Ok(serde_json::from_value(base)?)
    }

    pub fn epsilon_grid(&self) -> Vec<f64> {
        self.epsilon_grid.clone().unwrap_or_else(default_epsilon_grid)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_particles;
        if n < 2 {
            return Err(Error::Config(format!("need N >= 2, got {n}")));
        }
        if self.d_ext != n {
            return Err(Error::Config(format!("pipelines run at unit filling, got N = {n}, d_ext = {}", self.d_ext)));
        }
        if self.d_int < n {
            return Err(Error::Config(format!("need d_int >= N, got d_int = {} < {n}", self.d_int)));
        }
        if self.n_states == 0 {
            return Err(Error::Config("n_states must be positive".into()));
        }
        if let Some(&k) = self.k_list.iter().find(|&&k| k < 2 || k > n) {
            return Err(Error::Config(format!("k = {k} outside 2..={n}")));
        }
        let grid = self.epsilon_grid();
        if grid.is_empty() || grid.iter().any(|e| e.is_nan() || *e <= 0.0 || !e.is_finite()) {
            return Err(Error::Config("epsilon grid must be nonempty and positive".into()));
        }
        if self.fit_window.is_nan() || self.fit_window <= 0.0 {
            return Err(Error::Config("fit_window must be positive".into()));
        }
        Ok(())
    }

    fn sample(&self, statistics: Statistics, salt: u64) -> Result<Vec<SampledState>> {
        sweep_transition(
            self.n_states,
            self.n_particles,
            self.d_int,
            &self.epsilon_grid(),
            statistics,
            derive_seed(self.seed, salt),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Row {
    pub state_id: usize,
    pub statistics: Statistics,
    pub epsilon: f64,
    pub regime: Regime,
    /// `W^(k)` for `k = 2..=N`.
    pub w: Vec<f64>,
}

impl Fig1Row {
    pub fn w(&self, k: usize) -> f64 {
        self.w[k - 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCorrelation {
    pub statistics: Statistics,
    pub k: usize,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLaw {
    pub k: usize,
    /// Log-log fit of `W^(k)` against `W^(2)`; `None` with fewer than 3 points.
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Summary {
    pub n_particles: usize,
    pub rank_correlations: Vec<RankCorrelation>,
    pub fermion_power_laws: Vec<PowerLaw>,
    pub fit_window: f64,
    /// Rows breaking `W^(k) <= 1` for fermions or `W^(k) >= 1` for bosons.
    pub ordering_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Output {
    pub rows: Vec<Fig1Row>,
    pub summary: Fig1Summary,
}

pub fn run_fig1(config: &RunConfig) -> Result<Fig1Output> {
    config.validate()?;
    let n = config.n_particles;
    let mut rows = Vec::with_capacity(2 * config.n_states);
    for (salt, &statistics) in STATISTICS.iter().enumerate() {
        let sampled = config.sample(statistics, salt as u64)?;
        let offset = rows.len();
        let batch: Vec<Fig1Row> = sampled
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let w = (2..=n).map(|k| mean_coherence_gram(&s.state, k)).collect::<Result<Vec<_>>>()?;
                if !(-ORDER_TOLERANCE..=2.0 + ORDER_TOLERANCE).contains(&w[0]) {
                    return Err(Error::InvariantViolation(format!("W2 = {} outside [0, 2]", w[0])));
                }
                Ok(Fig1Row {
                    state_id: offset + i,
                    statistics,
                    epsilon: s.config.epsilon,
                    regime: s.config.regime,
                    w,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(batch);
    }
    let summary = summarize_fig1(&rows, n, config.fit_window);
    Ok(Fig1Output { rows, summary })
}

fn summarize_fig1(rows: &[Fig1Row], n: usize, window: f64) -> Fig1Summary {
    let mut rank_correlations = Vec::new();
    for statistics in STATISTICS {
        let subset: Vec<&Fig1Row> = rows.iter().filter(|r| r.statistics == statistics).collect();
        let w2: Vec<f64> = subset.iter().map(|r| r.w(2)).collect();
        for k in 3..=n {
            let wk: Vec<f64> = subset.iter().map(|r| r.w(k)).collect();
            rank_correlations.push(RankCorrelation { statistics, k, spearman: spearman(&w2, &wk) });
        }
    }
    let near: Vec<&Fig1Row> =
        rows.iter().filter(|r| r.statistics == Statistics::Fermion && r.w(2) > 0.0 && r.w(2) < window).collect();
    let fermion_power_laws = (3..=n)
        .map(|k| {
            let (x, y): (Vec<f64>, Vec<f64>) =
                near.iter().filter(|r| r.w(k) > 0.0).map(|r| (r.w(2).ln(), r.w(k).ln())).unzip();
            PowerLaw { k, fit: (x.len() >= 3).then(|| linear_fit(&x, &y)) }
        })
        .collect();
    let ordering_violations = rows
        .iter()
        .filter(|r| match r.statistics {
            Statistics::Fermion => r.w.iter().any(|&w| w > 1.0 + ORDER_TOLERANCE),
            Statistics::Boson => r.w.iter().any(|&w| w < 1.0 - ORDER_TOLERANCE),
        })
        .count();
    Fig1Summary { n_particles: n, rank_correlations, fermion_power_laws, fit_window: window, ordering_violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitaryId {
    Analytic,
    Index(usize),
}

impl std::fmt::Display for UnitaryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnitaryId::Analytic => f.write_str("analytic"),
            UnitaryId::Index(u) => write!(f, "{u}"),
        }
    }
}

impl Serialize for UnitaryId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub state_id: usize,
    pub statistics: Statistics,
    pub k: usize,
    pub wk: f64,
    pub unitary_id: UnitaryId,
    pub avg_connected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitaryFit {
    pub unitary_id: UnitaryId,
    pub fit: LinearFit,
    pub mean_abs_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Group {
    pub k: usize,
    pub analytic: UnitaryFit,
    pub unitaries: Vec<UnitaryFit>,
}

/// One-sided sign test over paired `(|r_u|, |r_analytic|)` residual
/// magnitudes, pooled over every order and unitary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub n_pairs: usize,
    pub n_larger: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Summary {
    pub n_particles: usize,
    pub groups: Vec<Fig2Group>,
    pub sign_test: SignTest,
    /// Largest deviation of analytic `k = 2, 3` rows from the closed forms.
    pub closed_form_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Output {
    pub rows: Vec<Fig2Row>,
    pub summary: Fig2Summary,
}

/// Closed forms of the Haar-averaged connected correlator at unit filling:
/// `-W2/(N+1)` for `k = 2` and `2 W3/((N+1)(N+2))` for `k = 3`.
pub fn closed_form_connected(k: usize, n: usize, wk: f64) -> Option<f64> {
    let n = n as f64;
    match k {
        2 => Some(-wk / (n + 1.0)),
        3 => Some(2.0 * wk / ((n + 1.0) * (n + 2.0))),
        _ => None,
    }
}

struct StateResult {
    wk: Vec<f64>,
    analytic: Vec<f64>,
    per_unitary: Vec<Vec<f64>>,
}

pub fn run_fig2(config: &RunConfig) -> Result<Fig2Output> {
    config.validate()?;
    if config.k_list.is_empty() || config.n_unitaries == 0 {
        return Err(Error::Config("fig2 needs a nonempty k_list and at least one unitary".into()));
    }
    let n = config.n_particles;
    let d = config.d_ext;
    let max_k = *config.k_list.iter().max().expect("nonempty");
    if max_k > MAX_WEINGARTEN_ORDER && config.mc_samples == 0 {
        return Err(Error::Config(format!("k = {max_k} needs mc_samples > 0")));
    }
    let unitaries: Vec<_> = (0..config.n_unitaries as u64).map(|u| sample_haar_indexed(d, config.seed, u)).collect();
    let ground: Vec<usize> = (0..d).collect();

    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut pairs = (0usize, 0usize);
    let mut closed_form_deviation: Option<f64> = None;
    let mut all_results = Vec::with_capacity(2 * config.n_states);
    for (salt, &statistics) in STATISTICS.iter().enumerate() {
        let sampled = config.sample(statistics, salt as u64)?;
        let offset = salt * config.n_states;
        let results: Vec<StateResult> = sampled
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let state = State::from(s.state.clone());
                let wk = config.k_list.iter().map(|&k| mean_coherence_gram(&s.state, k)).collect::<Result<_>>()?;
                let analytic = config
                    .k_list
                    .iter()
                    .map(|&k| {
                        if k <= MAX_WEINGARTEN_ORDER {
                            haar_avg_connected(&state, k)
                        } else {
                            let seed = derive_seed(config.seed, (offset + i) as u64);
                            Ok(haar_monte_carlo(&state, k, config.mc_samples, seed)?.connected(k).mean)
                        }
                    })
                    .collect::<Result<_>>()?;
                let per_unitary = unitaries
                    .iter()
                    .map(|u| {
                        let mut table = CorrelatorTable::new(&state, u, &ground, max_k)?;
                        Ok(config.k_list.iter().map(|&k| table.mean_connected(k).expect("tabulated")).collect())
                    })
                    .collect::<Result<_>>()?;
                Ok(StateResult { wk, analytic, per_unitary })
            })
            .collect::<Result<_>>()?;

        for (i, r) in results.iter().enumerate() {
            for (j, &k) in config.k_list.iter().enumerate() {
                let base = Fig2Row {
                    state_id: offset + i,
                    statistics,
                    k,
                    wk: r.wk[j],
                    unitary_id: UnitaryId::Analytic,
                    avg_connected: r.analytic[j],
                };
                if let Some(expected) = closed_form_connected(k, n, r.wk[j]) {
                    let dev = (expected - r.analytic[j]).abs();
                    if dev > CLOSED_FORM_TOLERANCE {
                        return Err(Error::InvariantViolation(format!(
                            "analytic k = {k} average deviates from its closed form by {dev:e}"
                        )));
                    }
                    closed_form_deviation = Some(closed_form_deviation.map_or(dev, |m| m.max(dev)));
                }
                for (u, values) in r.per_unitary.iter().enumerate() {
                    rows.push(Fig2Row { unitary_id: UnitaryId::Index(u), avg_connected: values[j], ..base.clone() });
                }
                rows.push(base);
            }
        }

        all_results.extend(results);
    }

    // Fits pool both statistics: one ensemble spans fermions through bosons.
    for (j, &k) in config.k_list.iter().enumerate() {
        let x: Vec<f64> = all_results.iter().map(|r| r.wk[j]).collect();
        let a: Vec<f64> = all_results.iter().map(|r| r.analytic[j]).collect();
        let (analytic, a_res) = fit_with_residuals(UnitaryId::Analytic, &x, &a);
        let mut fits = Vec::with_capacity(unitaries.len());
        for u in 0..unitaries.len() {
            let y: Vec<f64> = all_results.iter().map(|r| r.per_unitary[u][j]).collect();
            let (fit, res) = fit_with_residuals(UnitaryId::Index(u), &x, &y);
            for (ru, ra) in res.iter().zip(&a_res) {
                if ru.abs() != ra.abs() {
                    pairs.0 += 1;
                    pairs.1 += usize::from(ru.abs() > ra.abs());
                }
            }
            fits.push(fit);
        }
        groups.push(Fig2Group { k, analytic, unitaries: fits });
    }
    rows.sort_by_key(|r| (r.state_id, r.k, r.unitary_id));
    let sign_test = SignTest { n_pairs: pairs.0, n_larger: pairs.1, p_value: sign_test_p(pairs.1, pairs.0) };
    Ok(Fig2Output { rows, summary: Fig2Summary { n_particles: n, groups, sign_test, closed_form_deviation } })
}

fn fit_with_residuals(id: UnitaryId, x: &[f64], y: &[f64]) -> (UnitaryFit, Vec<f64>) {
    let fit = linear_fit(x, y);
    let residuals: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - fit.predict(xi)).collect();
    let mean_abs_residual = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64;
    (UnitaryFit { unitary_id: id, fit, mean_abs_residual }, residuals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub n_states: usize,
    pub w2_min: f64,
    pub w2_max: f64,
    pub w3_min: f64,
    pub w3_max: f64,
}

impl Envelope {
    /// Outside the band widened by its half-width on both sides.
    pub fn violated_by(&self, w3: f64) -> bool {
        let half = 0.5 * (self.w3_max - self.w3_min);
        w3 > self.w3_max + half || w3 < self.w3_min - half
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntangledEntry {
    pub state: String,
    pub statistics: Statistics,
    #[serde(rename = "W2")]
    pub w2: f64,
    #[serde(rename = "W3", skip_serializing_if = "Option::is_none")]
    pub w3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entanglement_flag: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntangledReport {
    pub entries: Vec<EntangledEntry>,
}

/// Sampled separable three-particle states used for the envelope.
pub const ENVELOPE_STATES: usize = 2000;
/// Separable states nearest in `W^(2)` that define the band.
pub const ENVELOPE_NEIGHBOURS: usize = 40;
const ENVELOPE_SEED: u64 = 7;

/// Band of `W^(3)` over the separable states whose `W^(2)` is closest to
/// `w2`.
pub fn separable_envelope(statistics: Statistics, w2: f64) -> Result<Envelope> {
    let sampled = sweep_transition(ENVELOPE_STATES, 3, 3, &default_epsilon_grid(), statistics, ENVELOPE_SEED)?;
    let mut points: Vec<(f64, f64)> = sampled
        .par_iter()
        .map(|s| Ok((mean_coherence_gram(&s.state, 2)?, mean_coherence_gram(&s.state, 3)?)))
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| (a.0 - w2).abs().total_cmp(&(b.0 - w2).abs()));
    let near = &points[..ENVELOPE_NEIGHBOURS.min(points.len())];
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| near.iter().map(pick).fold(init, f);
    Ok(Envelope {
        n_states: near.len(),
        w2_min: fold(f64::min, f64::INFINITY, |p| p.0),
        w2_max: fold(f64::max, f64::NEG_INFINITY, |p| p.0),
        w3_min: fold(f64::min, f64::INFINITY, |p| p.1),
        w3_max: fold(f64::max, f64::NEG_INFINITY, |p| p.1),
    })
}

pub fn run_entangled_demo() -> Result<EntangledReport> {
    let mut entries = Vec::new();
    for statistics in [Statistics::Boson, Statistics::Fermion] {
        let psi2 = State::from(make_psi2(statistics, ModeSpaces::new(2, 2)?)?);
        entries.push(EntangledEntry {
            state: "psi2".into(),
            statistics,
            w2: mean_coherence(&psi2, 2)?,
            w3: None,
            entanglement_flag: None,
            envelope: None,
        });
    }
    for statistics in [Statistics::Boson, Statistics::Fermion] {
        let psi3 = State::from(make_psi3(statistics, ModeSpaces::new(3, 3)?)?);
        let w2 = mean_coherence(&psi3, 2)?;
        let w3 = mean_coherence(&psi3, 3)?;
        let envelope = separable_envelope(statistics, w2)?;
        entries.push(EntangledEntry {
            state: "psi3".into(),
            statistics,
            w2,
            w3: Some(w3),
            entanglement_flag: Some(envelope.violated_by(w3)),
            envelope: Some(envelope),
        });
    }
    Ok(EntangledReport { entries })
}

/// Ranks with ties sharing their average rank (1-based).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinearFit { slope, intercept, r_squared, n_points: x.len() }
}

/// `P(X >= successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test_p(successes: usize, trials: usize) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials as u64).expect("valid binomial");
    b.sf(successes as u64 - 1)
}

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_fig1_csv<W: Write>(rows: &[Fig1Row], n_particles: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["state_id".to_string(), "statistics".into(), "epsilon".into(), "regime".into()];
    header.extend((2..=n_particles).map(|k| format!("W{k}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![r.state_id.to_string(), r.statistics.to_string(), format_float(r.epsilon), r.regime.to_string()];
        rec.extend(r.w.iter().map(|&v| format_float(v)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_id", "statistics", "k", "Wk", "unitary_id", "avg_connected"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.state_id.to_string(),
            r.statistics.to_string(),
            r.k.to_string(),
            format_float(r.wk),
            r.unitary_id.to_string(),
            format_float(r.avg_connected),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl Fig1Output {
    /// Writes `fig1.csv` and `fig1_summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_fig1_csv(&self.rows, self.summary.n_particles, fs::File::create(dir.join("fig1.csv"))?)?;
        fs::write(dir.join("fig1_summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

impl Fig2Output {
    /// Writes `fig2.csv` and `fig2_summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_fig2_csv(&self.rows, fs::File::create(dir.join("fig2.csv"))?)?;
        fs::write(dir.join("fig2_summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn least_squares_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sign_test_tail() {
        // P(X >= 9 | 10, 1/2) = 11/1024
        assert!((sign_test_p(9, 10) - 11.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test_p(0, 10), 1.0);
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn config_overrides_and_validation() {
        let c = RunConfig::fig1().merged_with(&serde_json::json!({"N": 5, "d_ext": 5, "n_states": 10})).unwrap();
        assert_eq!((c.n_particles, c.d_ext, c.n_states, c.d_int), (5, 5, 10, 7));
        assert!(c.validate().is_ok());
        assert!(RunConfig::fig1().merged_with(&serde_json::json!({"bogus": 1})).is_err());
        assert!(RunConfig { d_ext: 8, ..RunConfig::fig1() }.validate().is_err());
        assert!(RunConfig { k_list: vec![8], ..RunConfig::fig1() }.validate().is_err());
    }

    #[test]
    fn small_fig1_is_ordered_and_deterministic() {
        let c = RunConfig { n_states: 40, n_particles: 4, d_ext: 4, d_int: 4, ..RunConfig::fig1() };
        let a = run_fig1(&c).unwrap();
        assert_eq!(a.rows.len(), 80);
        assert_eq!(a.summary.ordering_violations, 0);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_fig1_csv(&a.rows, 4, &mut x).unwrap();
        write_fig1_csv(&run_fig1(&c).unwrap().rows, 4, &mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("state_id,statistics,epsilon,regime,W2,W3,W4\n"));
    }

    #[test]
    fn small_fig2_matches_closed_forms() {
        let c = RunConfig { n_states: 6, n_particles: 3, d_ext: 3, d_int: 3, k_list: vec![2, 3], n_unitaries: 2, ..RunConfig::fig2() };
        let out = run_fig2(&c).unwrap();
        assert_eq!(out.rows.len(), 2 * 6 * 2 * 3);
        assert!(out.summary.closed_form_deviation.unwrap() < 1e-10);
        assert_eq!(out.rows[0].unitary_id, UnitaryId::Analytic);
    }

    #[test]
    fn entangled_demo_flags_psi3() {
        let report = run_entangled_demo().unwrap();
        let w2: Vec<f64> = report.entries.iter().map(|e| e.w2).collect();
        assert!((w2[0] - 0.0).abs() < 1e-10 && (w2[1] - 2.0).abs() < 1e-10);
        for e in &report.entries[2..] {
            assert!((e.w2 - 1.0).abs() < 1e-10 && (e.w3.unwrap() - 3.0).abs() < 1e-10);
            assert_eq!(e.entanglement_flag, Some(true));
        }
    }
}
