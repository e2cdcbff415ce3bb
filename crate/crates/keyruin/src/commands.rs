//! The four experiment commands. Each returns its output text together with
//! any internal-tolerance violations found while computing.

use std::fmt::Write as _;

use keyruin_core::bounds;
use keyruin_core::channel::{self, RateKind};
use keyruin_core::finite_time::{self, GridSpec};
use keyruin_core::latency;
use keyruin_core::net_usage::{self, build_net_usage};
use keyruin_core::ultimate_ruin::{self, solve_ultimate_ruin};
use keyruin_core::SchemeSpec;

use crate::config::{Command, LoadedConfig};
use crate::error::CliError;
use crate::parallel;

pub const OUTAGE_HEADER: &str = "t,b0,psi_solver,psi_mc,psi_mc_se";
pub const BUDGET_HEADER: &str = "epsilon,tau,b0_required,mean_latency_slots";
pub const ULTIMATE_HEADER: &str = "b0,p,psi_nystrom,psi_mc_150,lundberg_bound";

/// Largest clamp tolerated in the survival recursion.
pub const SURVIVAL_CLAMP_TOL: f64 = 1e-9;
/// Largest clamp tolerated in the Nyström solution.
pub const NYSTROM_CLAMP_TOL: f64 = 1e-6;

/// Output of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub output: String,
    /// Internal tolerance violations; empty on full success.
    pub diagnostics: Vec<String>,
}

/// Outage probability by slot and initial budget: solver and Monte Carlo.
pub fn cmd_outage(cfg: &LoadedConfig) -> Result<Report, CliError> {
    cfg.validate(Command::Outage)?;
    let c = &cfg.config;
    let link = cfg.link()?;
    let scheme = cfg.schemes()?[0];
    let dist = build_net_usage(&link, scheme, cfg.net_usage_grid())?;
    let grid = GridSpec::new(c.grid.b_min, c.grid.b_max, c.grid.step, c.grid.t_max)?;
    let surface = finite_time::solve_survival(&dist, &grid)?;
    let budgets = &c.targets.budgets;
    let mc = parallel::simulate_outage_many(&link, scheme, budgets, grid.t_max, &cfg.mc_options())?;

    let mut diagnostics = Vec::new();
    if surface.max_clamp() > SURVIVAL_CLAMP_TOL {
        diagnostics.push(format!(
            "survival recursion clamped by {:.3e} (tolerance {SURVIVAL_CLAMP_TOL:e})",
            surface.max_clamp()
        ));
    }
    let times: Vec<usize> = c.targets.times.clone().unwrap_or_else(|| (1..=grid.t_max).collect());
    let mut out = format!("{OUTAGE_HEADER}\n");
    for &t in &times {
        for (b0, stats) in budgets.iter().zip(&mc) {
            let solver = finite_time::outage_at(&surface, t, *b0)?;
            let (p, se) = stats.outage_by_t[t];
            writeln!(out, "{t},{b0},{solver},{p},{se}").expect("write to string");
        }
    }
    Ok(Report {
        output: out,
        diagnostics,
    })
}

/// Required budget for each `(tau, epsilon)` and its mean recharge latency.
pub fn cmd_budget(cfg: &LoadedConfig) -> Result<Report, CliError> {
    cfg.validate(Command::Budget)?;
    let c = &cfg.config;
    let link = cfg.link()?;
    let dist = build_net_usage(&link, SchemeSpec::Deterministic, cfg.net_usage_grid())?;
    let t_max = c.targets.taus.iter().copied().max().unwrap_or(1);
    let grid = GridSpec::new(c.grid.b_min, c.grid.b_max, c.grid.step, t_max)?;
    let surface = finite_time::solve_survival(&dist, &grid)?;

    let mut diagnostics = Vec::new();
    if surface.max_clamp() > SURVIVAL_CLAMP_TOL {
        diagnostics.push(format!(
            "survival recursion clamped by {:.3e} (tolerance {SURVIVAL_CLAMP_TOL:e})",
            surface.max_clamp()
        ));
    }
    let mut out = format!("{BUDGET_HEADER}\n");
    for &tau in &c.targets.taus {
        let mut by_eps = Vec::new();
        for &eps in &c.targets.epsilons {
            let r = latency::latency_report(&surface, &link, tau, eps)?;
            writeln!(out, "{eps},{tau},{},{}", r.required_budget, r.mean_latency_slots).expect("write to string");
            by_eps.push((eps, r.required_budget));
        }
        by_eps.sort_by(|a, b| a.0.total_cmp(&b.0));
        if by_eps.windows(2).any(|w| w[1].1 > w[0].1 + 1e-9) {
            diagnostics.push(format!(
                "required budget increases with the outage target at tau = {tau}"
            ));
        }
    }
    Ok(Report {
        output: out,
        diagnostics,
    })
}

/// Ultimate ruin by Nyström, Monte Carlo at the configured horizon, and the
/// Lundberg bound, for every transmission probability and budget.
pub fn cmd_ultimate(cfg: &LoadedConfig) -> Result<Report, CliError> {
    cfg.validate(Command::Ultimate)?;
    let c = &cfg.config;
    let link = cfg.link()?;
    let budgets = &c.targets.budgets;
    let horizon = c.ultimate.horizon;
    let mut diagnostics = Vec::new();
    let mut out = format!("{ULTIMATE_HEADER}\n");
    for scheme in cfg.schemes()? {
        let p = scheme.tx_prob().expect("validated random scheme");
        let dist = build_net_usage(&link, scheme, cfg.net_usage_grid())?;
        let mc = parallel::simulate_outage_many(&link, scheme, budgets, horizon, &cfg.mc_options())?;
        let (psi, bound): (Vec<f64>, Vec<f64>) = if dist.mean() >= 0.0 {
            // Nonnegative drift: ruin is certain and no adjustment coefficient exists.
            (vec![1.0; budgets.len()], vec![1.0; budgets.len()])
        } else {
            let coef = bounds::adjustment_coefficient(&dist)?;
            let s_max = ultimate_ruin::default_s_max(&dist);
            let nodes = ultimate_ruin::nodes_for_spacing(s_max, c.ultimate.node_spacing);
            let curve = solve_ultimate_ruin(&dist, nodes, s_max)?;
            if curve.max_clamp() > NYSTROM_CLAMP_TOL {
                diagnostics.push(format!(
                    "p = {p}: Nyström solution clamped by {:.3e} (tolerance {NYSTROM_CLAMP_TOL:e})",
                    curve.max_clamp()
                ));
            }
            budgets
                .iter()
                .map(|&b| (curve.eval(b), bounds::lundberg_bound(&coef, b)))
                .unzip()
        };
        for (i, &b0) in budgets.iter().enumerate() {
            if bound[i] < psi[i] - 1e-12 {
                diagnostics.push(format!(
                    "p = {p}, b0 = {b0}: Lundberg bound {} below the ruin probability {}",
                    bound[i], psi[i]
                ));
            }
            let (mc_psi, _) = mc[i].outage_by_t[horizon];
            writeln!(out, "{b0},{p},{},{mc_psi},{}", psi[i], bound[i]).expect("write to string");
        }
    }
    Ok(Report {
        output: out,
        diagnostics,
    })
}

/// Rate and net-usage moments, critical probability and adjustment coefficient.
pub fn cmd_moments(cfg: &LoadedConfig) -> Result<Report, CliError> {
    cfg.validate(Command::Moments)?;
    let link = cfg.link()?;
    let theta = channel::rate_moment(RateKind::Skg, &link, 1)?.value;
    let xi = channel::rate_moment(RateKind::Tx, &link, 1)?.value;
    let p_crit = net_usage::critical_tx_prob(&link)?;
    let mut rows = vec![
        ("E[theta] (bit)".to_owned(), format!("{theta:.6}")),
        ("E[xi] (bit)".to_owned(), format!("{xi:.6}")),
        ("p_crit".to_owned(), format!("{p_crit:.6}")),
    ];
    for scheme in cfg.schemes()? {
        let label = match scheme {
            SchemeSpec::Deterministic => String::from("deterministic"),
            SchemeSpec::RandomTx { tx_prob } => format!("random_tx p={tx_prob}"),
        };
        let dist = build_net_usage(&link, scheme, cfg.net_usage_grid())?;
        rows.push((format!("E[Z] (bit), {label}"), format!("{:.6}", dist.mean())));
        rows.push((format!("Var(Z) (bit^2), {label}"), format!("{:.6}", dist.variance())));
        let r = match bounds::adjustment_coefficient(&dist) {
            Ok(c) => format!("{:.6}", c.r_star),
            Err(_) => String::from("none (mean net usage >= 0, ruin is certain)"),
        };
        rows.push((format!("r_star (1/bit), {label}"), r));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        writeln!(out, "{k:<width$}  {v}").expect("write to string");
    }
    Ok(Report {
        output: out,
        diagnostics: Vec::new(),
    })
}

pub fn run(command: Command, cfg: &LoadedConfig) -> Result<Report, CliError> {
    match command {
        Command::Outage => cmd_outage(cfg),
        Command::Budget => cmd_budget(cfg),
        Command::Ultimate => cmd_ultimate(cfg),
        Command::Moments => cmd_moments(cfg),
    }
}
