//! One function per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use crdsa::channel::{convert_p0_sa, Channel, ChannelConfig, Scheme, ThroughputMode};
use crdsa::fet::{self, BoundaryRule, FetPoint};
use crdsa::markov::{DriftProfile, TransitionMatrix};
use crdsa::mc_validate::{self, RunTrace};
use crdsa::optimize::{self, LocusSweep, OptimizationResult, Scenario};
use crdsa::stability::{self, Classification, LocalStability};
use crdsa::success_model::{estimate_success_table, TableSpec, DEFAULT_TRIALS_PER_TAU};
use crdsa::SuccessTable;

use crate::config::{FileConfig, Grid};
use crate::output::{sig4, Output, Report};
use crate::{AnalysisArg, ChannelArgs, CliError, Command, ModeArg, RuleArg, SchemeArg};

const DEFAULT_SEED: u64 = 2011;
const DEFAULT_TABLE: &str = "q-table.txt";

pub fn dispatch(command: Command, file: &FileConfig, out_dir: PathBuf) -> Result<(), CliError> {
    let ctx = Ctx {
        file,
        out: Output::new(out_dir)?,
    };
    match command {
        Command::BuildQ {
            degree,
            slots,
            iterations,
            tau_max,
            trials,
            seed,
            output,
            table,
        } => ctx.build_q(degree, slots, iterations, tau_max, trials, seed, output.or(table)),
        Command::Drift(ch) => ctx.drift(&ch),
        Command::Equilibria(ch) => ctx.equilibria(&ch),
        Command::Delay(ch) => ctx.delay(&ch),
        Command::OptimizePr { channel, pr_grid } => ctx.optimize_pr(&channel, pr_grid),
        Command::MaxM {
            channel,
            target,
            m_min,
            m_max,
            pr_grid,
            locus,
        } => ctx.max_m(&channel, target, m_min, m_max, pr_grid, locus),
        Command::MaxP0 {
            channel,
            target,
            p0_grid,
            pr_grid,
            locus,
        } => ctx.max_p0(&channel, target, p0_grid, pr_grid, locus),
        Command::Fet {
            channel,
            boundary,
            rule,
        } => ctx.fet(&channel, boundary, rule),
        Command::FetCurve {
            channel,
            pr_grid,
            rule,
        } => ctx.fet_curve(&channel, pr_grid, rule),
        Command::Validate {
            channel,
            runs,
            epochs,
            seed,
            boundary,
        } => ctx.validate(&channel, runs, epochs, seed, boundary),
        Command::Compare {
            channel,
            analysis,
            pr_grid,
        } => ctx.compare(&channel, analysis, pr_grid),
    }
}

/// A fully resolved channel and the table it needs.
struct Setup {
    config: ChannelConfig,
    mode: ThroughputMode,
    table: Option<SuccessTable>,
    table_path: Option<PathBuf>,
}

impl Setup {
    fn scenario(&self) -> Scenario<'_> {
        Scenario::new(self.config, self.table.as_ref(), self.mode)
    }

    fn model(&self) -> Result<Channel<'_>, CliError> {
        Ok(Channel::new(self.config, self.table.as_ref(), self.mode)?)
    }

    fn describe(&self, r: &mut Report) {
        let c = &self.config;
        match c.scheme {
            Scheme::Crdsa {
                degree,
                num_slots,
                max_iterations,
            } => {
                r.kv("scheme", "crdsa");
                r.kv("degree", degree);
                r.kv("slots", num_slots);
                r.kv("iterations", max_iterations);
                r.kv(
                    "mode",
                    match self.mode {
                        ThroughputMode::Exact => "exact",
                        ThroughputMode::Approximate => "approximate",
                    },
                );
            }
            Scheme::SlottedAloha => r.kv("scheme", "sa"),
        }
        if let Some(p) = &self.table_path {
            r.kv("table", p.display());
        }
        r.kv("population", c.population);
        r.kv("p0", c.p0);
        r.kv("pr", c.pr);
    }
}

struct Ctx<'a> {
    file: &'a FileConfig,
    out: Output,
}

fn load_table(path: &Path) -> Result<SuccessTable, CliError> {
    if !path.exists() {
        return Err(CliError::TableMissing(path.to_path_buf()));
    }
    Ok(SuccessTable::load_from_path(path)?)
}

fn rule_of(r: RuleArg) -> BoundaryRule {
    match r {
        RuleArg::Critical => BoundaryRule::Critical,
        RuleArg::Saturation => BoundaryRule::Saturation,
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl Ctx<'_> {
    fn table_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        Ok(self
            .file
            .pick(flag, "table")?
            .unwrap_or_else(|| self.out.dir().join(DEFAULT_TABLE)))
    }

    /// Resolves channel flags against the config file. `need_pr` is false for
    /// commands that sweep pr themselves.
    fn setup(&self, ch: &ChannelArgs, need_pr: bool) -> Result<Setup, CliError> {
        let f = self.file;
        let scheme = f.pick_choice(ch.scheme, "scheme")?.unwrap_or(SchemeArg::Crdsa);
        let population = f.require(ch.population, "population")?;
        let p0 = f.require(ch.p0, "p0")?;
        let pr = if need_pr {
            f.require(ch.pr, "pr")?
        } else {
            f.pick(ch.pr, "pr")?.unwrap_or(1.0)
        };
        let mode = match f.pick_choice(ch.mode, "mode")?.unwrap_or(ModeArg::Exact) {
            ModeArg::Exact => ThroughputMode::Exact,
            ModeArg::Approximate => ThroughputMode::Approximate,
        };
        let setup = match scheme {
            SchemeArg::Sa => Setup {
                config: ChannelConfig::slotted_aloha(population, p0, pr),
                mode: ThroughputMode::Exact,
                table: None,
                table_path: None,
            },
            SchemeArg::Crdsa => {
                let path = self.table_path(ch.table.clone())?;
                let table = load_table(&path)?;
                let config = ChannelConfig::crdsa(
                    population,
                    p0,
                    pr,
                    f.pick(ch.degree, "degree")?.unwrap_or(table.degree),
                    f.pick(ch.slots, "slots")?.unwrap_or(table.num_slots),
                    f.pick(ch.iterations, "iterations")?.unwrap_or(table.max_iterations),
                );
                Setup {
                    config,
                    mode,
                    table: Some(table),
                    table_path: Some(path),
                }
            }
        };
        // Surfaces parameter and table mismatches before any compute.
        setup.model()?;
        Ok(setup)
    }

    fn pr_grid(&self, flag: Option<Grid>) -> Result<Vec<f64>, CliError> {
        Ok(self
            .file
            .pick(flag, "pr-grid")?
            .map_or_else(optimize::default_pr_grid, |g| g.0))
    }

    fn finish(&self, r: &Report, summary: &str) -> Result<(), CliError> {
        let path = self.out.report(r)?;
        // A closed stdout (e.g. piped into `head`) is not an analysis failure.
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{summary}\nreport: {}", path.display());
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn build_q(
        &self,
        degree: Option<usize>,
        slots: Option<usize>,
        iterations: Option<usize>,
        tau_max: Option<usize>,
        trials: Option<u64>,
        seed: Option<u64>,
        output: Option<PathBuf>,
    ) -> Result<(), CliError> {
        let f = self.file;
        let reference = TableSpec::reference(f.pick(seed, "seed")?.unwrap_or(DEFAULT_SEED));
        let spec = TableSpec {
            degree: f.pick(degree, "degree")?.unwrap_or(reference.degree),
            num_slots: f.pick(slots, "slots")?.unwrap_or(reference.num_slots),
            max_iterations: f.pick(iterations, "iterations")?.unwrap_or(reference.max_iterations),
            tau_max: f.pick(tau_max, "tau-max")?.unwrap_or(reference.tau_max),
            trials_per_tau: f.pick(trials, "trials")?.unwrap_or(DEFAULT_TRIALS_PER_TAU),
            master_seed: reference.master_seed,
        };
        let path = self.table_path(output)?;
        let table = estimate_success_table(spec)?;
        table.save_to_path(&path)?;

        let curve = table.throughput_curve();
        self.out.csv("build-q", |w| {
            writeln!(w, "load,throughput")?;
            for (g, s) in &curve.points {
                writeln!(w, "{g},{s}")?;
            }
            Ok(())
        })?;
        let mut r = Report::new("build-q");
        r.kv("table", path.display());
        r.kv("degree", spec.degree);
        r.kv("slots", spec.num_slots);
        r.kv("iterations", spec.max_iterations);
        r.kv("tau_max", spec.tau_max);
        r.kv("trials_per_tau", spec.trials_per_tau);
        r.kv("seed", spec.master_seed);
        let peak = curve.peak();
        r.opt("peak_load", peak.map(|p| p.0));
        r.opt("peak_throughput", peak.map(|p| p.1));
        self.finish(
            &r,
            &format!(
                "wrote {} (peak throughput {} pkt/slot)",
                path.display(),
                peak.map_or("n/a".into(), |p| sig4(p.1))
            ),
        )
    }

    fn drift(&self, ch: &ChannelArgs) -> Result<(), CliError> {
        let s = self.setup(ch, true)?;
        let profile = DriftProfile::compute(&s.model()?);
        self.out.csv("drift", |w| Ok(profile.write_csv(w)?))?;
        let report = stability::classify_profile(profile)?;
        let mut r = Report::new("drift");
        s.describe(&mut r);
        report.write_report(r.sink())?;
        self.finish(&r, &format!("{} channel", report.classification))
    }

    fn equilibria(&self, ch: &ChannelArgs) -> Result<(), CliError> {
        let s = self.setup(ch, true)?;
        let report = stability::classify(&s.model()?)?;
        self.out.csv("equilibria", |w| {
            writeln!(w, "backlog,stability,throughput")?;
            for p in &report.points {
                let st = match p.local_stability {
                    LocalStability::Stable => "stable",
                    LocalStability::Unstable => "unstable",
                };
                writeln!(w, "{},{st},{}", p.backlog, p.throughput_at_point)?;
            }
            Ok(())
        })?;
        let mut r = Report::new("equilibria");
        s.describe(&mut r);
        report.write_report(r.sink())?;
        let pts: Vec<String> = report.points.iter().map(|p| sig4(p.backlog)).collect();
        self.finish(
            &r,
            &format!("{} channel, equilibria at [{}]", report.classification, pts.join(", ")),
        )
    }

    fn delay(&self, ch: &ChannelArgs) -> Result<(), CliError> {
        let s = self.setup(ch, true)?;
        let report = stability::classify(&s.model()?)?;
        let mut r = Report::new("delay");
        s.describe(&mut r);
        report.write_report(r.sink())?;
        match stability::delay_from_report(&report, &s.config) {
            Ok(d) => {
                d.write_report(r.sink())?;
                self.finish(
                    &r,
                    &format!("n0 = {}, S0 = {} pkt/slot, D = {} slots", sig4(d.n0), sig4(d.s0), sig4(d.delay_slots)),
                )
            }
            Err(e) => {
                r.kv("status", "not-applicable");
                self.out.report(&r)?;
                Err(e.into())
            }
        }
    }

    /// `lead` names the optimised quantity: "M*", "p0*" or "pr*".
    fn optimization_summary(&self, r: &mut Report, o: &OptimizationResult, lead: &str) -> Result<String, CliError> {
        o.write_report(r.sink())?;
        if !o.feasible {
            self.out.report(r)?;
            return Err(CliError::Infeasible(match o.target_slots {
                Some(t) => format!("no configuration meets the {t}-slot delay target"),
                None => "no stable configuration on the grid".into(),
            }));
        }
        let mut parts = Vec::new();
        match (lead, o.population, o.p0) {
            ("M*", Some(m), _) => parts.push(format!("M* = {m}")),
            ("p0*", _, Some(p0)) => parts.push(format!("p0* = {}", sig4(p0))),
            _ => {}
        }
        parts.push(format!("pr* = {}", o.pr.map_or("n/a".into(), sig4)));
        parts.push(format!("D = {} slots", o.delay_slots.map_or("n/a".into(), sig4)));
        Ok(parts.join(", "))
    }

    fn optimize_pr(&self, ch: &ChannelArgs, grid: Option<Grid>) -> Result<(), CliError> {
        let s = self.setup(ch, false)?;
        let grid = self.pr_grid(grid)?;
        let sc = s.scenario();
        let o = optimize::optimize_pr(&sc, &grid)?;
        self.out.csv("optimize-pr", |w| {
            writeln!(w, "pr,delay_slots")?;
            for &pr in &grid {
                writeln!(w, "{pr},{}", opt_str(sc.delay_at(s.config.with_pr(pr))?))?;
            }
            Ok(())
        })?;
        let mut r = Report::new("optimize-pr");
        s.describe(&mut r);
        let summary = self.optimization_summary(&mut r, &o, "pr*")?;
        self.finish(&r, &summary)
    }

    fn write_locus(
        &self,
        name: &str,
        sc: &Scenario<'_>,
        target: f64,
        sweep: LocusSweep,
        values: &[f64],
        grid: &[f64],
    ) -> Result<(), CliError> {
        let pts = optimize::delay_locus(sc, target, sweep, values, grid)?;
        self.out.csv(name, |w| Ok(optimize::write_locus_csv(&pts, w)?))?;
        Ok(())
    }

    fn max_m(
        &self,
        ch: &ChannelArgs,
        target: Option<f64>,
        m_min: Option<usize>,
        m_max: Option<usize>,
        grid: Option<Grid>,
        locus: bool,
    ) -> Result<(), CliError> {
        let f = self.file;
        let mut ch = ch.clone();
        let lo = f.pick(m_min, "m-min")?.unwrap_or(1);
        ch.population = Some(f.pick(ch.population, "population")?.unwrap_or(lo));
        let s = self.setup(&ch, false)?;
        let hi = match (f.pick(m_max, "m-max")?, &s.table) {
            (Some(m), _) => m,
            (None, Some(t)) => t.tau_max,
            (None, None) => 500,
        };
        let target = f.require(target, "target")?;
        let grid = self.pr_grid(grid)?;
        let sc = s.scenario();
        let o = optimize::max_population(&sc, target, lo..=hi, &grid)?;
        if locus {
            let values: Vec<f64> = (lo..=hi).step_by(10).map(|m| m as f64).collect();
            self.write_locus("max-m.locus", &sc, target, LocusSweep::Population, &values, &grid)?;
        }
        let mut r = Report::new("max-m");
        s.describe(&mut r);
        r.kv("m_min", lo);
        r.kv("m_max", hi);
        let summary = self.optimization_summary(&mut r, &o, "M*")?;
        self.finish(&r, &summary)
    }

    fn max_p0(
        &self,
        ch: &ChannelArgs,
        target: Option<f64>,
        p0_grid: Option<Grid>,
        grid: Option<Grid>,
        locus: bool,
    ) -> Result<(), CliError> {
        let mut ch = ch.clone();
        ch.p0 = Some(self.file.pick(ch.p0, "p0")?.unwrap_or(0.0));
        let s = self.setup(&ch, false)?;
        let target = self.file.require(target, "target")?;
        let p0s = self
            .file
            .pick(p0_grid, "p0-grid")?
            .map_or_else(|| optimize::default_p0_grid(s.config.scheme, s.config.population), |g| g.0);
        let grid = self.pr_grid(grid)?;
        let sc = s.scenario();
        let o = optimize::max_traffic(&sc, target, &p0s, &grid)?;
        if locus {
            self.write_locus("max-p0.locus", &sc, target, LocusSweep::TrafficProbability, &p0s, &grid)?;
        }
        let mut r = Report::new("max-p0");
        s.describe(&mut r);
        let summary = self.optimization_summary(&mut r, &o, "p0*")?;
        self.finish(&r, &summary)
    }

    fn fet(&self, ch: &ChannelArgs, boundary: Option<usize>, rule: Option<RuleArg>) -> Result<(), CliError> {
        let s = self.setup(ch, true)?;
        let model = s.model()?;
        let mut r = Report::new("fet");
        s.describe(&mut r);
        let boundary = match self.file.pick(boundary, "boundary")? {
            Some(b) => b,
            None => {
                let rule = rule_of(self.file.pick_choice(rule, "rule")?.unwrap_or(RuleArg::Critical));
                let p = fet::fet_point(&model, rule)?;
                r.kv("classification", p.classification);
                r.kv("rule", p.rule.name());
                match p.boundary {
                    Some(b) if b < s.config.population => b,
                    _ => {
                        self.out.report(&r)?;
                        return Err(CliError::Infeasible(format!(
                            "a {} channel has no {} boundary",
                            p.classification,
                            p.rule.name()
                        )));
                    }
                }
            }
        };
        let res = fet::solve_fet(&model, boundary)?;
        self.out.csv("fet", |w| {
            writeln!(w, "state,fet_epochs,fet_slots")?;
            for (x, t) in res.times.iter().enumerate() {
                writeln!(w, "{x},{t},{}", t * res.epoch_slots as f64)?;
            }
            Ok(())
        })?;
        r.kv("boundary", res.boundary_state);
        r.kv("fet_epochs", res.headline);
        r.kv("fet_slots", res.headline_slots());
        r.kv("residual", res.residual);
        self.finish(
            &r,
            &format!(
                "FET above state {boundary}: {} epochs = {} slots",
                sig4(res.headline),
                sig4(res.headline_slots())
            ),
        )
    }

    fn curve(&self, s: &Setup, prs: &[f64], rule: BoundaryRule) -> Result<Vec<FetPoint>, CliError> {
        let (table, mode) = (s.table.as_ref(), s.mode);
        Ok(fet::fet_curve(s.config, prs, rule, |c| Channel::new(c, table, mode))?)
    }

    fn fet_curve(&self, ch: &ChannelArgs, grid: Option<Grid>, rule: Option<RuleArg>) -> Result<(), CliError> {
        let s = self.setup(ch, false)?;
        let prs = self.pr_grid(grid)?;
        let rule = rule_of(self.file.pick_choice(rule, "rule")?.unwrap_or(RuleArg::Critical));
        let pts = self.curve(&s, &prs, rule)?;
        self.out.csv("fet-curve", |w| Ok(fet::write_curve_csv(&pts, w)?))?;
        let mut r = Report::new("fet-curve");
        s.describe(&mut r);
        r.kv("rule", rule.name());
        r.kv("points", pts.len());
        let defined = pts.iter().filter(|p| p.result.is_some()).count();
        r.kv("points_defined", defined);
        let best = pts
            .iter()
            .filter_map(|p| Some((p.pr, p.headline_slots()?)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        r.opt("max_fet_pr", best.map(|b| b.0));
        r.opt("max_fet_slots", best.map(|b| b.1));
        self.finish(
            &r,
            &match best {
                Some((pr, t)) => format!("{defined}/{} points defined; longest FET {} slots at pr = {}", pts.len(), sig4(t), sig4(pr)),
                None => format!("no pr on the grid has a {} boundary", rule.name()),
            },
        )
    }

    fn validate(
        &self,
        ch: &ChannelArgs,
        runs: Option<usize>,
        epochs: Option<u64>,
        seed: Option<u64>,
        boundary: Option<usize>,
    ) -> Result<(), CliError> {
        let f = self.file;
        let s = self.setup(ch, true)?;
        let runs = f.pick(runs, "runs")?.unwrap_or(1);
        let epochs = f.pick(epochs, "epochs")?.unwrap_or(100_000);
        let seed = f.pick(seed, "seed")?.unwrap_or(DEFAULT_SEED);
        let boundary = f.pick(boundary, "boundary")?;
        if runs == 0 {
            return Err(CliError::Usage("--runs must be at least 1".into()));
        }
        if boundary.is_some_and(|b| b >= s.config.population) {
            return Err(CliError::Usage("--boundary must lie below the population".into()));
        }
        let traces: Vec<RunTrace> =
            mc_validate::run_many(&s.config, runs, epochs, boundary.map(|b| b + 1), seed)?;
        self.out.csv("validate", |w| Ok(mc_validate::write_summary_csv(&traces, w)?))?;

        let mut r = Report::new("validate");
        s.describe(&mut r);
        r.kv("runs", runs);
        r.kv("epochs_per_run", epochs);
        r.kv("seed", seed);
        let model = s.model()?;
        let mut lines = Vec::new();

        let d = mc_validate::empirical_delay(&traces);
        r.kv("packets", d.packets);
        r.opt("sim_delay_slots", d.mean_slots);
        r.opt("sim_latency_slots", d.latency_slots);
        if let Some(l) = mc_validate::little_check(&traces[0]) {
            r.kv("little_delay_slots", l.little_delay_slots);
            r.kv("little_gap", l.relative_gap());
        }
        match stability::expected_delay(&model) {
            Ok(c) => {
                r.kv("computed_delay_slots", c.delay_slots);
                if let Some(m) = d.mean_slots {
                    let gap = (m - c.delay_slots).abs() / c.delay_slots;
                    r.kv("delay_gap", gap);
                    lines.push(format!(
                        "delay: simulated {} vs computed {} slots ({}%)",
                        sig4(m),
                        sig4(c.delay_slots),
                        sig4(gap * 100.0)
                    ));
                }
            }
            Err(crdsa::Error::NotApplicable(c)) => r.kv("computed_delay_slots", format!("none ({c})")),
            Err(e) => return Err(e.into()),
        }

        if let Some(b) = boundary {
            let est = mc_validate::empirical_fet(&traces, b);
            r.kv("boundary", b);
            r.opt("sim_fet_epochs", est.mean_epochs);
            r.opt("sim_fet_std_error", est.std_error);
            r.kv("sim_fet_runs_used", est.runs_used);
            r.kv("sim_fet_runs_excluded", est.runs_excluded);
            let comp = fet::solve_fet(&model, b)?;
            r.kv("computed_fet_epochs", comp.headline);
            if let Some(m) = est.mean_epochs {
                lines.push(format!(
                    "FET above {b}: simulated {} vs computed {} epochs",
                    sig4(m),
                    sig4(comp.headline)
                ));
            }

            let emp = mc_validate::empirical_transition_matrix(&traces, b);
            let ana = TransitionMatrix::build(&model, b)?;
            let max_dev = (0..=b)
                .flat_map(|i| (0..=b).map(move |j| (i, j)))
                .filter(|&(i, _)| emp.visits.as_ref().is_some_and(|v| v[i] > 0))
                .map(|(i, j)| (emp.get(i, j) - ana.get(i, j)).abs())
                .fold(0.0, f64::max);
            r.kv("matrix_max_abs_deviation", max_dev);
            self.out.csv("validate.matrix", |w| {
                writeln!(w, "from,to,simulated,computed,visits")?;
                let visits = emp.visits.clone().unwrap_or_default();
                for i in 0..=b {
                    for j in 0..=b {
                        writeln!(w, "{i},{j},{},{},{}", emp.get(i, j), ana.get(i, j), visits.get(i).copied().unwrap_or(0))?;
                    }
                }
                Ok(())
            })?;
        }
        if lines.is_empty() {
            lines.push(format!("{} packets delivered", d.packets));
        }
        self.finish(&r, &lines.join("\n"))
    }

    fn compare(&self, ch: &ChannelArgs, analysis: Option<AnalysisArg>, grid: Option<Grid>) -> Result<(), CliError> {
        let mut ch = ch.clone();
        ch.scheme = Some(SchemeArg::Crdsa);
        let analysis = self.file.pick_choice(analysis, "analysis")?.unwrap_or(AnalysisArg::MinDelay);
        let c = self.setup(&ch, false)?;
        let slots = c.config.epoch_slots();
        let sa = Setup {
            config: ChannelConfig::slotted_aloha(
                c.config.population,
                convert_p0_sa(c.config.p0, slots),
                c.config.pr,
            ),
            mode: ThroughputMode::Exact,
            table: None,
            table_path: None,
        };
        let prs = self.pr_grid(grid)?;
        let mut r = Report::new("compare");
        c.describe(&mut r);
        r.kv("sa_p0", sa.config.p0);

        match analysis {
            AnalysisArg::MinDelay => {
                r.kv("analysis", "min-delay");
                let oc = optimize::optimize_pr(&c.scenario(), &prs)?;
                let os = optimize::optimize_pr(&sa.scenario(), &prs)?;
                let (Some(dc), Some(ds)) = (oc.delay_slots, os.delay_slots) else {
                    r.kv("crdsa_feasible", oc.feasible);
                    r.kv("sa_feasible", os.feasible);
                    self.out.report(&r)?;
                    return Err(CliError::Infeasible("one scheme has no stable pr on the grid".into()));
                };
                r.opt("crdsa_pr", oc.pr);
                r.kv("crdsa_delay_slots", dc);
                r.opt("sa_pr", os.pr);
                r.kv("sa_delay_slots", ds);
                let saving = 1.0 - dc / ds;
                r.kv("delay_saving", saving);
                self.finish(
                    &r,
                    &format!(
                        "CRDSA {} slots (pr = {}) vs SA {} slots (pr = {}): CRDSA saves {}% of the delay",
                        sig4(dc),
                        oc.pr.map_or("n/a".into(), sig4),
                        sig4(ds),
                        os.pr.map_or("n/a".into(), sig4),
                        sig4(saving * 100.0)
                    ),
                )
            }
            AnalysisArg::FetCurve => {
                r.kv("analysis", "fet-curve");
                // Both schemes share the pr axis; overloaded SA falls back to
                // the saturation boundary.
                let cc = self.curve(&c, &prs, BoundaryRule::Critical)?;
                let sc = self.curve(&sa, &prs, BoundaryRule::Critical)?;
                let ratio = |a: &FetPoint, b: &FetPoint| Some(a.headline_slots()? / b.headline_slots()?);
                self.out.csv("compare", |w| {
                    writeln!(w, "pr,crdsa_fet_slots,sa_fet_slots,ratio,crdsa_class,sa_class")?;
                    for (a, b) in cc.iter().zip(&sc) {
                        writeln!(
                            w,
                            "{},{},{},{},{},{}",
                            a.pr,
                            opt_str(a.headline_slots()),
                            opt_str(b.headline_slots()),
                            opt_str(ratio(a, b)),
                            a.classification,
                            b.classification
                        )?;
                    }
                    Ok(())
                })?;
                let best = cc
                    .iter()
                    .zip(&sc)
                    .filter_map(|(a, b)| Some((a.pr, ratio(a, b)?)))
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                r.opt("max_ratio_pr", best.map(|b| b.0));
                r.opt("max_ratio", best.map(|b| b.1));
                let stable = cc.iter().filter(|p| p.classification == Classification::Stable).count();
                r.kv("crdsa_stable_points", stable);
                match best {
                    Some((pr, x)) => self.finish(
                        &r,
                        &format!("CRDSA FET up to {}x the SA FET (pr = {})", sig4(x), sig4(pr)),
                    ),
                    None => {
                        self.out.report(&r)?;
                        Err(CliError::Infeasible("no pr has a defined FET for both schemes".into()))
                    }
                }
            }
        }
    }
}
