//! Run configuration, orchestration of the experiment commands, and
//! deterministic JSON reports.
//!
//! Reports are schema-versioned and deterministic for a fixed
//! `(config, seed)`: timing never enters the report (the CLI writes it to a
//! sidecar file).  Exit codes follow the command contract: `balance` maps
//! convergence / degeneration / iteration-cap to 0 / 2 / 3, config errors
//! are 1 everywhere, and `asymptotics` exits 4 when an asserted slope or
//! bound check fails.

use crate::balanced::{
    BalancedContext, IterationControls, KempfNessBase, Verdict, iterate, kempf_ness,
    subsheaf_kn_direction,
};
use crate::bergman::{
    BundleMetric, SlopeReport, balanced_to_hitchin_check, bergman_expansion_check,
    expansion_convergence_check, hormander_check,
};
use crate::geometry::{QuadratureScheme, build_quadrature};
use crate::git::{OneParamJson, parse_one_param, total_weight};
use crate::model::{Diagnostics, HiggsInstance, InstanceJson, Witness, validate};
use crate::quantization::{WeaklyGeometricReport, weakly_geometric_report};
use crate::{Error, Result};
use num_rational::Rational64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

/// Rational parameter accepted as `"a/b"`, an integer, or a decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioParam(pub Rational64);

impl RatioParam {
    pub fn value(&self) -> Rational64 {
        self.0
    }
}

pub fn parse_ratio(s: &str) -> Result<Rational64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let num: i64 =
            a.trim().parse().map_err(|_| Error::Config(format!("bad rational {s}")))?;
        let den: i64 =
            b.trim().parse().map_err(|_| Error::Config(format!("bad rational {s}")))?;
        if den == 0 {
            return Err(Error::Config("rational with zero denominator".into()));
        }
        return Ok(Rational64::new(num, den));
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Rational64::new(n, 1));
    }
    // decimal with a short fraction part
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() <= 9 && !frac.is_empty() {
            let negative = int.starts_with('-');
            let int_part: i64 =
                int.parse().map_err(|_| Error::Config(format!("bad number {s}")))?;
            let num: i64 =
                frac.parse().map_err(|_| Error::Config(format!("bad number {s}")))?;
            let den = 10i64.pow(frac.len() as u32);
            let frac_part = Rational64::new(if negative { -num } else { num }, den);
            return Ok(Rational64::new(int_part, 1) + frac_part);
        }
    }
    Err(Error::Config(format!("cannot parse rational parameter {s}")))
}

impl Serialize for RatioParam {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            s.serialize_str(&format!("{}", self.0.numer()))
        } else {
            s.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
        }
    }
}

impl<'de> Deserialize<'de> for RatioParam {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let r = match Raw::deserialize(d)? {
            Raw::Text(t) => parse_ratio(&t).map_err(serde::de::Error::custom)?,
            Raw::Int(n) => Rational64::new(n, 1),
            Raw::Float(f) => {
                parse_ratio(&format!("{f}")).map_err(serde::de::Error::custom)?
            }
        };
        Ok(RatioParam(r))
    }
}

fn default_ell() -> RatioParam {
    RatioParam(Rational64::new(1, 1))
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    2000
}

fn default_degen() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: InstanceJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_range: Option<(i64, i64)>,
    #[serde(default = "default_ell")]
    pub ell: RatioParam,
    /// `(n_polar, n_azimuthal)`; when absent, derived from the largest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<(usize, usize)>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_degen")]
    pub degen_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_param: Option<OneParamJson>,
}

impl RunConfig {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn instance(&self) -> Result<HiggsInstance> {
        self.instance.clone().try_into()
    }

    pub fn level(&self) -> Result<i64> {
        self.k.ok_or_else(|| Error::Config("config needs \"k\"".into()))
    }

    pub fn levels(&self) -> Result<Vec<i64>> {
        match self.k_range {
            Some((a, b)) if a <= b => Ok((a..=b).collect()),
            Some((a, b)) => Err(Error::Config(format!("empty k_range {a}:{b}"))),
            None => Err(Error::Config("config needs \"k_range\"".into())),
        }
    }

    pub fn scheme_for(&self, k_max: i64) -> Result<QuadratureScheme> {
        let (np, na) = self.quad.unwrap_or_else(|| default_quad_orders(k_max));
        build_quadrature(np, na)
    }

    pub fn controls(&self) -> IterationControls {
        IterationControls {
            tol: self.tol,
            max_iter: self.max_iter,
            degen_threshold: self.degen_threshold,
            ..Default::default()
        }
    }
}

/// Polar order comfortably above the exactness threshold for the Gram
/// integrands at level `k`, azimuthal twice that.
pub fn default_quad_orders(k_max: i64) -> (usize, usize) {
    let np = usize::max(32, (2 * k_max + 12) as usize);
    (np, 2 * np)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub verdict: Verdict,
    pub steps: usize,
    pub final_residual: f64,
    pub final_kn_value: f64,
    pub final_min_eig: f64,
    pub final_max_eig: f64,
    pub final_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResult {
    pub diagnostics: Diagnostics,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsResult {
    pub weakly_geometric: Option<WeaklyGeometricReport>,
    pub expansion_order0: SlopeReport,
    pub expansion_order1: SlopeReport,
    pub bergman_expansion: SlopeReport,
    pub hitchin_trend: Option<crate::bergman::HitchinTrendReport>,
    pub hitchin_trend_skipped: Option<String>,
    pub hormander: Vec<crate::bergman::HormanderReport>,
    pub kempf_ness_slope: Option<f64>,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ReportResult {
    Balance(BalanceResult),
    Weight(crate::git::WeightReport),
    Asymptotics(AsymptoticsResult),
    Validate(ValidateResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub result: ReportResult,
}

impl RunReport {
    fn new(command: &str, config: &RunConfig, result: ReportResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

pub struct CommandOutput {
    pub report: RunReport,
    /// CSV payload (per-step for balance, long-form series for asymptotics).
    pub csv: Option<String>,
    pub exit_code: i32,
}

/// Run the balanced iteration and report verdict and final diagnostics.
pub fn run_balance(config: &RunConfig) -> Result<CommandOutput> {
    let inst = config.instance()?;
    let k = config.level()?;
    let ctx = BalancedContext::new(&inst, k, config.ell.value(), config.scheme_for(k)?)?;
    let report = iterate(&ctx, &config.controls())?;
    let last = report
        .records
        .last()
        .ok_or_else(|| Error::Config("iteration produced no records".into()))?;
    let result = BalanceResult {
        verdict: report.verdict,
        steps: report.records.len(),
        final_residual: report.final_residual,
        final_kn_value: last.kn_value,
        final_min_eig: last.min_eig,
        final_max_eig: last.max_eig,
        final_epsilon: last.epsilon,
    };
    let exit_code = match report.verdict {
        Verdict::Converged => 0,
        Verdict::Degenerate => 2,
        Verdict::MaxIter => 3,
    };
    Ok(CommandOutput {
        report: RunReport::new("balance", config, ReportResult::Balance(result)),
        csv: Some(report.to_csv()),
        exit_code,
    })
}

/// Evaluate the Hilbert-Mumford weight of the configured subgroup.
pub fn run_weight(config: &RunConfig) -> Result<CommandOutput> {
    let inst = config.instance()?;
    let k = config.level()?;
    let one_param = config
        .one_param
        .as_ref()
        .ok_or_else(|| Error::Config("weight command needs \"one_param\"".into()))?;
    let (lps, subsheaf) = parse_one_param(one_param, &inst, k)?;
    let report = total_weight(
        &lps,
        &inst,
        k,
        config.ell.value(),
        subsheaf.as_deref(),
        config.seed,
    )?;
    Ok(CommandOutput {
        report: RunReport::new("weight", config, ReportResult::Weight(report)),
        csv: None,
        exit_code: 0,
    })
}

/// Validate the instance and look for a destabilizing witness.
pub fn run_validate(config: &RunConfig) -> Result<CommandOutput> {
    let inst: std::result::Result<HiggsInstance, Error> = config.instance.clone().try_into();
    match inst {
        Ok(inst) => {
            let diagnostics = validate(&inst);
            let witness = match config.k {
                Some(k) => crate::model::destabilizing_witness(&inst, k)?,
                None => None,
            };
            let valid = diagnostics.is_valid();
            Ok(CommandOutput {
                report: RunReport::new(
                    "validate",
                    config,
                    ReportResult::Validate(ValidateResult { diagnostics, witness }),
                ),
                csv: None,
                exit_code: if valid { 0 } else { 1 },
            })
        }
        Err(e) => Err(e),
    }
}

/// Slope, trend, and bound sweeps across the configured level range.
pub fn run_asymptotics(config: &RunConfig) -> Result<CommandOutput> {
    let inst = config.instance()?;
    let ks = config.levels()?;
    if ks.len() < 4 {
        return Err(Error::Config(format!(
            "k_range must contain at least 4 levels, got {}",
            ks.len()
        )));
    }
    let k_max = *ks.last().unwrap();
    let scheme = config.scheme_for(k_max)?;
    let ell = config.ell.value();
    let mut checks = Vec::new();
    let mut csv = String::from("series,k,value\n");

    // weakly geometric data (needs a Higgs field)
    let weakly = if inst.phi.is_zero() {
        None
    } else {
        let rep = weakly_geometric_report(&inst, &ks)?;
        for row in &rep.rows {
            csv.push_str(&format!("frobenius_scaled,{},{:.12e}\n", row.k, row.frobenius_scaled));
            csv.push_str(&format!("operator_norm,{},{:.12e}\n", row.k, row.operator_norm));
        }
        checks.push(CheckOutcome {
            name: "weakly_geometric_bounds".into(),
            passed: !rep.lower_bound_violated && !rep.upper_bound_violated,
            detail: format!("c' = {:.6}", rep.c_prime),
        });
        Some(rep)
    };

    // operator expansion orders 0 and 1
    let (exp0, _) = expansion_convergence_check(&inst, &ks, 0, ell)?;
    let (exp1, rows1) = expansion_convergence_check(&inst, &ks, 1, ell)?;
    for r in &rows1 {
        csv.push_str(&format!("expansion_residual_n1,{},{:.12e}\n", r.k, r.residual));
    }
    for (k, v) in &exp0.points {
        csv.push_str(&format!("expansion_residual_n0,{k},{v:.12e}\n"));
    }
    checks.push(CheckOutcome {
        name: "expansion_order0_slope".into(),
        passed: exp0.order_at_most(-0.7),
        detail: format!("slope {:?} exact {}", exp0.slope, exp0.exact),
    });
    checks.push(CheckOutcome {
        name: "expansion_order1_slope".into(),
        passed: exp1.order_at_most(-1.7),
        detail: format!("slope {:?} exact {}", exp1.slope, exp1.exact),
    });

    // Bergman expansion of the reference metric family
    let h_ref = BundleMetric::SummandFs { degrees: inst.bundle.degrees().to_vec() };
    let bergman = bergman_expansion_check(&inst.bundle, &h_ref, &ks, &scheme, 2e-3)?;
    for (k, v) in &bergman.points {
        csv.push_str(&format!("bergman_remainder,{k},{v:.12e}\n"));
    }
    checks.push(CheckOutcome {
        name: "bergman_expansion_slope".into(),
        passed: bergman.order_at_most(-1.7),
        detail: format!("slope {:?} exact {}", bergman.slope, bergman.exact),
    });

    // balanced-to-Hitchin trend, when the instance balances
    let controls = config.controls();
    let (hitchin_trend, hitchin_trend_skipped) =
        match balanced_to_hitchin_check(&inst, &ks, ell, &controls, &scheme) {
            Ok(rep) => {
                for row in &rep.rows {
                    csv.push_str(&format!("epsilon,{},{:.12e}\n", row.k, row.epsilon));
                    csv.push_str(&format!("t_norm,{},{:.12e}\n", row.k, row.t_norm));
                    csv.push_str(&format!("defect_norm,{},{:.12e}\n", row.k, row.defect_norm));
                }
                checks.push(CheckOutcome {
                    name: "hitchin_defect_trend".into(),
                    passed: rep.defect_nonincreasing,
                    detail: "L2 defect nonincreasing (noise-floored)".into(),
                });
                // the coupling-constant series only means something with a
                // Higgs field; for phi = 0 it is k/(1+0) by definition
                if !inst.phi.is_zero() {
                    checks.push(CheckOutcome {
                        name: "epsilon_increments_decreasing".into(),
                        passed: rep.increments_decreasing,
                        detail: format!("epsilon limit {:.6}", rep.epsilon_limit),
                    });
                    checks.push(CheckOutcome {
                        name: "hitchin_constant_bounds".into(),
                        passed: rep.bounds_contained,
                        detail: format!(
                            "{:.6} in [{:.6}, {:.6}] with 10% slack",
                            rep.epsilon_limit, rep.bound_low, rep.bound_high
                        ),
                    });
                }
                (Some(rep), None)
            }
            Err(e) => (None, Some(format!("no balanced family: {e}"))),
        };

    // Hörmander inequality sweep at the reference metrics
    let mut hormander = Vec::new();
    if !inst.phi.is_zero() {
        for &k in &ks {
            let ctx = BalancedContext::new(&inst, k, ell, scheme.clone())?;
            let state = ctx.reference_state()?;
            let rep = hormander_check(&ctx, &state, 1e-4)?;
            csv.push_str(&format!("hormander_ratio,{},{:.12e}\n", k, rep.max_ratio));
            hormander.push(rep);
        }
        let meaningful: Vec<f64> = hormander
            .iter()
            .filter(|r| r.max_lhs > 1e-10)
            .map(|r| r.max_ratio)
            .collect();
        let passed = if meaningful.is_empty() {
            true // projection defect at noise floor: nothing to bound
        } else {
            let lo = meaningful.iter().cloned().fold(f64::MAX, f64::min);
            let hi = meaningful.iter().cloned().fold(0.0, f64::max);
            hi / lo <= 5.0
        };
        checks.push(CheckOutcome {
            name: "hormander_ratio_bounded".into(),
            passed,
            detail: format!("{} meaningful levels", meaningful.len()),
        });
    }

    // Kempf-Ness slope along the leading destabilizing direction, when the
    // model module finds a summand witness
    let kempf_ness_slope = match crate::model::destabilizing_witness(&inst, k_max)? {
        Some(w) => match &w.kind {
            crate::model::WitnessKind::SummandSet(s) => {
                let ctx = BalancedContext::new(&inst, k_max, ell, scheme.clone())?;
                let state0 = ctx.reference_state()?;
                let base = KempfNessBase::new(&ctx, &state0)?;
                let zeta = subsheaf_kn_direction(&ctx.basis, s)?;
                let l4 = kempf_ness(&ctx, &base, &zeta, 4.0)?;
                let l5 = kempf_ness(&ctx, &base, &zeta, 5.0)?;
                Some(l5 - l4)
            }
            _ => None,
        },
        None => None,
    };

    let all_passed = checks.iter().all(|c| c.passed);
    let result = AsymptoticsResult {
        weakly_geometric: weakly,
        expansion_order0: exp0,
        expansion_order1: exp1,
        bergman_expansion: bergman,
        hitchin_trend,
        hitchin_trend_skipped,
        hormander,
        kempf_ness_slope,
        checks,
    };
    Ok(CommandOutput {
        report: RunReport::new("asymptotics", config, ReportResult::Asymptotics(result)),
        csv: Some(csv),
        exit_code: if all_passed { 0 } else { 4 },
    })
}
