//! Run configuration: a sectioned TOML file where every key has a default
//! and unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flatvol_core::backtest::{CostModel, PortfolioSpec, Selection, Weighting};
use flatvol_core::factors::{Category, Direction, FactorDef, ScoringOptions};
use flatvol_core::filter::{FilterSpec, DEFAULT_CUTOFF, DEFAULT_ORDER};
use flatvol_core::market::{
    EligibilityRules, DEFAULT_LIQUIDITY_THRESHOLD, DEFAULT_LIQUIDITY_WINDOW, DEFAULT_MIN_LISTING_DAYS,
};
use flatvol_core::metrics::Periodicity;
use flatvol_core::pipeline::VolSettings;
use flatvol_core::state_space::{Truncation, WeightMode};
use flatvol_core::synth::{SynthConfig, SIGNAL};
use flatvol_core::vol::{
    Demean, VolMethod, VolOptions, DEFAULT_EWMA_LAMBDA, DEFAULT_EWMA_SEED_WINDOW, DEFAULT_MIN_HISTORY,
    DEFAULT_PWMA_ALPHA, DEFAULT_PWMA_LAGS, SIGMA_FLOOR,
};
use flatvol_core::Date;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterConfig,
    pub vol: VolConfig,
    pub factors: FactorConfig,
    pub universe: UniverseConfig,
    pub synthetic: SynthConfig,
    pub backtest: BacktestConfig,
    pub quantile: QuantileConfig,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub order: usize,
    /// Cycles per trading day.
    pub cutoff: f64,
    pub weight_mode: WeightMode,
    pub max_lags: usize,
    /// Keep the shortest prefix holding this share of total |weight|.
    pub mass_fraction: f64,
    /// Lags over which the total |weight| is measured.
    pub horizon: usize,
    /// Rows of the frequency-response table.
    pub response_points: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let t = Truncation::default();
        Self {
            order: DEFAULT_ORDER,
            cutoff: DEFAULT_CUTOFF,
            weight_mode: WeightMode::Clip,
            max_lags: t.max_lags,
            mass_fraction: t.mass_fraction,
            horizon: t.horizon,
            response_points: 501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolConfig {
    pub method: VolMethod,
    pub ewma_lambda: f64,
    pub ewma_seed_window: usize,
    pub pwma_alpha: f64,
    pub pwma_lags: usize,
    pub min_history: usize,
    pub sigma_floor: f64,
    pub demean: Demean,
}

impl Default for VolConfig {
    fn default() -> Self {
        Self {
            method: VolMethod::Maxflat,
            ewma_lambda: DEFAULT_EWMA_LAMBDA,
            ewma_seed_window: DEFAULT_EWMA_SEED_WINDOW,
            pwma_alpha: DEFAULT_PWMA_ALPHA,
            pwma_lags: DEFAULT_PWMA_LAGS,
            min_history: DEFAULT_MIN_HISTORY,
            sigma_floor: SIGMA_FLOOR,
            demean: Demean::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub winsorize: bool,
    pub mad_multiplier: f64,
    /// Factor name to +1 or −1; overrides the built-in directions.
    pub directions: BTreeMap<String, i64>,
    /// Factor name to value / quality / growth / tech, for factors outside
    /// the built-in set.
    pub categories: BTreeMap<String, String>,
}

impl Default for FactorConfig {
    fn default() -> Self {
        let s = ScoringOptions::default();
        Self {
            winsorize: s.winsorize,
            mad_multiplier: s.mad_multiplier,
            directions: BTreeMap::new(),
            categories: BTreeMap::new(),
        }
    }
}

impl FactorConfig {
    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            winsorize: self.winsorize,
            mad_multiplier: self.mad_multiplier,
        }
    }

    /// Definition for a factor seen in the data.
    pub fn def_for(&self, name: &str) -> Result<FactorDef> {
        let builtin = FactorDef::standard_set()
            .into_iter()
            .chain([FactorDef::new(SIGNAL, Direction::Positive, Category::Tech)])
            .find(|d| d.name == name);
        let direction = match self.directions.get(name) {
            Some(sign) => Direction::from_sign(*sign)
                .ok_or_else(|| AppError::Config(format!("direction for {name} must be 1 or -1, got {sign}")))?,
            None => builtin
                .as_ref()
                .map(|d| d.direction)
                .ok_or_else(|| AppError::Config(format!("factor {name} has no direction; set [factors.directions]")))?,
        };
        let category = match self.categories.get(name) {
            Some(c) => Category::parse(c)
                .ok_or_else(|| AppError::Config(format!("unknown category {c:?} for factor {name}")))?,
            None => builtin
                .as_ref()
                .map(|d| d.category)
                .ok_or_else(|| AppError::Config(format!("factor {name} has no category; set [factors.categories]")))?,
        };
        Ok(FactorDef::new(name, direction, category))
    }
}

/// Input files. Without `prices` the run uses the `[synthetic]` panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseConfig {
    pub prices: Option<PathBuf>,
    pub universe: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub liquidity_threshold: f64,
    pub liquidity_window: usize,
    pub min_listing_days: i64,
}

impl Default for UniverseConfig {
    fn default() -> Self {
        Self {
            prices: None,
            universe: None,
            benchmark: None,
            factors: None,
            liquidity_threshold: DEFAULT_LIQUIDITY_THRESHOLD,
            liquidity_window: DEFAULT_LIQUIDITY_WINDOW,
            min_listing_days: DEFAULT_MIN_LISTING_DAYS,
        }
    }
}

impl UniverseConfig {
    pub fn eligibility(&self) -> EligibilityRules {
        EligibilityRules {
            min_listing_days: self.min_listing_days,
            liquidity_threshold: self.liquidity_threshold,
            liquidity_window: self.liquidity_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub top_n: usize,
    pub weighting: Weighting,
    pub buy_commission_bps: f64,
    pub sell_commission_bps: f64,
    /// Yuan per share.
    pub slippage_per_share: f64,
    pub lot_size: u64,
    pub capital: f64,
    pub start: Option<Date>,
    pub end: Option<Date>,
    /// Start every method on the first date all of them have a forecast.
    pub common_start: bool,
    pub periodicity: Periodicity,
    /// Methods run by `compare`.
    pub methods: Vec<VolMethod>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        let spec = PortfolioSpec::default();
        Self {
            top_n: 50,
            weighting: Weighting::Equal,
            buy_commission_bps: spec.costs.buy_commission_bps,
            sell_commission_bps: spec.costs.sell_commission_bps,
            slippage_per_share: spec.costs.slippage_per_share,
            lot_size: spec.lot_size,
            capital: spec.initial_capital,
            start: None,
            end: None,
            common_start: true,
            periodicity: Periodicity::Daily,
            methods: VolMethod::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantileConfig {
    /// Rank cut points, starting at 0.
    pub boundaries: Vec<usize>,
    /// Defaults to `[vol] method`.
    pub method: Option<VolMethod>,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            boundaries: vec![0, 50, 100, 200],
            method: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict_weights: bool,
}

/// A configuration plus the input digests it must match, if it was read
/// from a manifest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub expected_inputs: Option<BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a TOML config or a `manifest.json` from an earlier run. Relative
    /// paths in a TOML file are taken relative to the file.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let parse_err = |message: String| AppError::ConfigParse {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            return Ok(LoadedConfig {
                config: manifest.config,
                expected_inputs: Some(manifest.inputs),
            });
        }
        let mut config = Self::from_toml(&text).map_err(|e| parse_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(LoadedConfig {
            config,
            expected_inputs: None,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let u = &mut self.universe;
        for p in [&mut u.prices, &mut u.universe, &mut u.benchmark, &mut u.factors]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.report.out_dir.is_relative() {
            self.report.out_dir = base.join(&self.report.out_dir);
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.out {
            self.report.out_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            self.synthetic.seed = seed;
        }
        if overrides.strict_weights {
            self.filter.weight_mode = WeightMode::Strict;
        }
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        Ok(FilterSpec::new(self.filter.order, self.filter.cutoff)?)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            max_lags: self.filter.max_lags,
            mass_fraction: self.filter.mass_fraction,
            horizon: self.filter.horizon,
        }
    }

    pub fn vol_settings(&self) -> Result<VolSettings> {
        Ok(VolSettings {
            filter: self.filter_spec()?,
            weight_mode: self.filter.weight_mode,
            truncation: self.truncation(),
            ewma_lambda: self.vol.ewma_lambda,
            ewma_seed_window: self.vol.ewma_seed_window,
            pwma_alpha: self.vol.pwma_alpha,
            pwma_lags: self.vol.pwma_lags,
            options: VolOptions {
                min_history: self.vol.min_history,
                floor: self.vol.sigma_floor,
            },
            demean: self.vol.demean,
        })
    }

    /// Portfolio rules with the given selection; dates come from `[backtest]`.
    pub fn portfolio(&self, selection: Selection) -> PortfolioSpec {
        let b = &self.backtest;
        PortfolioSpec {
            selection,
            weighting: b.weighting,
            costs: CostModel {
                buy_commission_bps: b.buy_commission_bps,
                sell_commission_bps: b.sell_commission_bps,
                slippage_per_share: b.slippage_per_share,
            },
            lot_size: b.lot_size,
            initial_capital: b.capital,
            start: b.start,
            end: b.end,
            eligibility: self.universe.eligibility(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.filter.order, 2);
        assert_eq!(c.filter.cutoff, 0.002);
        assert_eq!(c.backtest.methods.len(), 6);
        assert_eq!(c.quantile.boundaries, vec![0, 50, 100, 200]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[filter]\nordr = 3\n").is_err());
        assert!(RunConfig::from_toml("[filtr]\norder = 3\n").is_err());
        assert!(RunConfig::from_toml("[synthetic]\nseeed = 3\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            r#"
            [filter]
            order = 3
            weight_mode = "strict"
            [vol]
            method = "none"
            demean = "expanding"
            [factors.directions]
            MyFactor = -1
            [factors.categories]
            MyFactor = "quality"
            [backtest]
            weighting = "rank_proportional"
            start = "2016-01-04"
            periodicity = "monthly"
            methods = ["ewma", "maxflat"]
            "#,
        )
        .unwrap();
        assert_eq!(c.filter.order, 3);
        assert_eq!(c.filter.weight_mode, WeightMode::Strict);
        assert_eq!(c.vol.method, VolMethod::NoVol);
        assert_eq!(c.vol.demean, Demean::Expanding);
        assert_eq!(c.backtest.weighting, Weighting::RankProportional);
        assert_eq!(c.backtest.start, Some("2016-01-04".parse().unwrap()));
        assert_eq!(c.backtest.methods, vec![VolMethod::Ewma, VolMethod::Maxflat]);
        let def = c.factors.def_for("MyFactor").unwrap();
        assert_eq!(def.direction, Direction::Negative);
        assert_eq!(def.category, Category::Quality);
    }

    #[test]
    fn factor_definitions() {
        let f = FactorConfig::default();
        assert_eq!(f.def_for("VOL20").unwrap().direction, Direction::Negative);
        assert_eq!(f.def_for("ROE").unwrap().direction, Direction::Positive);
        assert_eq!(f.def_for(SIGNAL).unwrap().direction, Direction::Positive);
        assert!(matches!(f.def_for("Mystery"), Err(AppError::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            out: Some("elsewhere".into()),
            seed: Some(99),
            strict_weights: true,
        });
        assert_eq!(c.report.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.synthetic.seed, 99);
        assert_eq!(c.filter.weight_mode, WeightMode::Strict);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.backtest.end = Some("2019-12-31".parse().unwrap());
        c.universe.prices = Some("/data/prices.csv".into());
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
