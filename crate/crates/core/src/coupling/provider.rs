use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CouplingError;
use crate::kinetics::ReactionMechanism;
use crate::surrogate::SurrogateModel;
use crate::tga::{
    devolatilization_yields, label_point, Ambient, FeatureVector, FitOptions, FuelSpec, Proximate, TargetVector,
    TgaOptions, Ultimate,
};

/// Final-temperature window of the virtual TGA behind a query, K.
pub const T_QUERY_WINDOW: (f64, f64) = (900.0, 1800.0);
/// Heating-rate window of a query, K/s.
pub const BETA_QUERY_WINDOW: (f64, f64) = (0.1, 2000.0);

const BETA_BUCKET: f64 = 1.05;
const PARTIAL_BUCKET: f64 = 1.02;
/// Partial pressures below this share the zero bucket, Pa.
const PARTIAL_ZERO: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KineticsMode {
    Oracle,
    Surrogate,
}

impl KineticsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            KineticsMode::Oracle => "ORACLE",
            KineticsMode::Surrogate => "SURROGATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub mode: KineticsMode,
    /// Steps between forced re-queries of a particle's kinetics.
    pub refresh_every: u64,
    /// Relative feature change that triggers an early re-query.
    pub refresh_threshold: f64,
    /// Start temperature of the oracle's virtual TGA, K.
    pub t_start: f64,
    pub tga: TgaOptions,
    pub fit: FitOptions,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: KineticsMode::Oracle,
            refresh_every: 50,
            refresh_threshold: 0.02,
            t_start: 300.0,
            tga: TgaOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), CouplingError> {
        if self.refresh_every < 1 {
            return Err(CouplingError::Config("refresh_every must be >= 1".into()));
        }
        if !(self.refresh_threshold >= 0.0) {
            return Err(CouplingError::Config("refresh_threshold must be >= 0".into()));
        }
        if !(self.t_start > 0.0 && self.t_start < T_QUERY_WINDOW.0) {
            return Err(CouplingError::Config(format!("t_start must lie in (0, {}) K", T_QUERY_WINDOW.0)));
        }
        Ok(())
    }
}

/// Clamps the temperature and heating rate into the queryable window.
pub fn query_window(f: &FeatureVector) -> FeatureVector {
    let mut out = *f;
    out.temperature = f.temperature.clamp(T_QUERY_WINDOW.0, T_QUERY_WINDOW.1);
    out.beta = f.beta.clamp(BETA_QUERY_WINDOW.0, BETA_QUERY_WINDOW.1);
    out
}

/// Oracle memo key: 1 K, 5% heating rate and 2% partial-pressure buckets;
/// fuel composition and pressure enter bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryKey {
    fuel: [u64; 9],
    temperature: i64,
    beta: i64,
    partials: [Option<i64>; 3],
}

impl QueryKey {
    pub fn of(f: &FeatureVector) -> Self {
        let a = f.to_array();
        let bucket = |p: f64| (p >= PARTIAL_ZERO).then(|| (p.ln() / PARTIAL_BUCKET.ln()).round() as i64);
        Self {
            fuel: std::array::from_fn(|i| a[i].to_bits()),
            temperature: f.temperature.round() as i64,
            beta: (f.beta.ln() / BETA_BUCKET.ln()).round() as i64,
            partials: [bucket(f.p_h2o), bucket(f.p_o2), bucket(f.p_co2)],
        }
    }

    /// The bucket's representative conditions, which the oracle evaluates.
    pub fn representative(&self) -> (FuelSpec, f64, f64, Ambient) {
        let c: [f64; 9] = self.fuel.map(f64::from_bits);
        let fuel = FuelSpec {
            name: String::new(),
            proximate: Proximate { moisture: c[0], volatile: c[1], fixed_carbon: c[2], ash: c[3] },
            ultimate: Ultimate { c: c[4], h: c[5], o: c[6], n: c[7], s: c[8] },
            d_p: 5e-4,
        };
        let p = |k: Option<i64>| k.map_or(0.0, |k| PARTIAL_BUCKET.powi(k as i32));
        let ambient = Ambient { p_h2o: p(self.partials[0]), p_o2: p(self.partials[1]), p_co2: p(self.partials[2]) };
        (fuel, self.temperature as f64, BETA_BUCKET.powi(self.beta as i32), ambient)
    }
}

/// Query counters and timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub queries: u64,
    pub cache_hits: u64,
    /// Fresh oracle fits or surrogate predictions.
    pub evaluations: u64,
    pub clamps: u64,
    /// Wall time inside fresh evaluations, s.
    pub evaluation_seconds: f64,
    /// Wall time inside the provider including bookkeeping, s.
    pub query_seconds: f64,
}

impl QueryStats {
    /// Mean wall time per fresh evaluation, s.
    pub fn cost_per_evaluation(&self) -> Option<f64> {
        (self.evaluations > 0).then(|| self.evaluation_seconds / self.evaluations as f64)
    }
}

/// Source of devolatilization kinetics for the particle phase.
#[derive(Debug, Clone)]
pub struct KineticsProvider {
    pub config: ProviderConfig,
    oracle: Arc<ReactionMechanism>,
    surrogate: Option<Arc<SurrogateModel>>,
    /// Per key: the first windowed features that produced it and the answer.
    cache: HashMap<QueryKey, (FeatureVector, TargetVector)>,
    pub stats: QueryStats,
}

impl KineticsProvider {
    pub fn new(
        config: ProviderConfig,
        oracle: Arc<ReactionMechanism>,
        surrogate: Option<Arc<SurrogateModel>>,
    ) -> Result<Self, CouplingError> {
        config.validate()?;
        if config.mode == KineticsMode::Surrogate && surrogate.is_none() {
            return Err(CouplingError::Config("SURROGATE mode needs a trained model".into()));
        }
        oracle.roles()?;
        Ok(Self { config, oracle, surrogate, cache: HashMap::new(), stats: QueryStats::default() })
    }

    pub fn mode(&self) -> KineticsMode {
        self.config.mode
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Every oracle answer so far with the features that first asked for
    /// it, in key order.
    pub fn memorized(&self) -> Vec<(FeatureVector, TargetVector)> {
        let sorted: BTreeMap<&QueryKey, &(FeatureVector, TargetVector)> = self.cache.iter().collect();
        sorted.into_values().cloned().collect()
    }

    pub fn query(&mut self, f: &FeatureVector) -> Result<TargetVector, CouplingError> {
        Ok(self.query_batch(std::slice::from_ref(f))?.remove(0))
    }

    /// Answers several queries at once. Distinct oracle keys are evaluated
    /// in parallel; results depend only on the keys, not on query order.
    pub fn query_batch(&mut self, features: &[FeatureVector]) -> Result<Vec<TargetVector>, CouplingError> {
        let start = Instant::now();
        let windowed: Vec<FeatureVector> = features.iter().map(query_window).collect();
        self.stats.queries += features.len() as u64;
        let out = match self.config.mode {
            KineticsMode::Surrogate => self.predict(&windowed),
            KineticsMode::Oracle => self.oracle_batch(&windowed),
        };
        self.stats.query_seconds += start.elapsed().as_secs_f64();
        out
    }

    fn predict(&mut self, features: &[FeatureVector]) -> Result<Vec<TargetVector>, CouplingError> {
        let model = self.surrogate.as_ref().expect("checked at construction");
        let start = Instant::now();
        let mut out = Vec::with_capacity(features.len());
        for f in features {
            let p = model.predict(f)?;
            if p.clamped {
                self.stats.clamps += 1;
            }
            out.push(p.targets);
        }
        self.stats.evaluation_seconds += start.elapsed().as_secs_f64();
        self.stats.evaluations += features.len() as u64;
        Ok(out)
    }

    fn oracle_batch(&mut self, features: &[FeatureVector]) -> Result<Vec<TargetVector>, CouplingError> {
        let keys: Vec<QueryKey> = features.iter().map(QueryKey::of).collect();
        let mut first: BTreeMap<QueryKey, FeatureVector> = BTreeMap::new();
        for (k, f) in keys.iter().zip(features) {
            if !self.cache.contains_key(k) {
                first.entry(*k).or_insert(*f);
            }
        }
        let missing: Vec<(QueryKey, FeatureVector)> = first.into_iter().collect();
        self.stats.cache_hits += (keys.len() - missing.len()) as u64;
        if !missing.is_empty() {
            let start = Instant::now();
            let mech = &self.oracle;
            let cfg = &self.config;
            let fresh: Vec<Result<(QueryKey, (FeatureVector, TargetVector)), CouplingError>> = missing
                .par_iter()
                .map(|(k, f)| {
                    let (fuel, t_end, beta, ambient) = k.representative();
                    let (mut target, _) =
                        label_point(mech, &fuel, beta, (cfg.t_start, t_end), &ambient, &cfg.tga, &cfg.fit)?;
                    target.yields = devolatilization_yields(mech)?;
                    Ok((*k, (*f, target)))
                })
                .collect();
            let fresh: BTreeMap<QueryKey, (FeatureVector, TargetVector)> =
                fresh.into_iter().collect::<Result<_, _>>()?;
            self.stats.evaluation_seconds += start.elapsed().as_secs_f64();
            self.stats.evaluations += fresh.len() as u64;
            self.cache.extend(fresh);
        }
        Ok(keys.iter().map(|k| self.cache[k].1).collect())
    }
}
