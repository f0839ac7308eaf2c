//! Command dispatch. Every number in a report comes from a library call.

use serde::Serialize;
use serde_json::{json, Value};

use prodnet::economy::{self, EconomySpec, Partial, ProductionNetwork};
use prodnet::game::{self, TiePolicy};
use prodnet::partition::all_partitions;
use prodnet::policy;
use prodnet::replicate::{self, ReplicateGame, ScanOptions};
use prodnet::risk::{self, ExactOptions, RiskModel};
use prodnet::verify::{self, VerifyOptions};
use prodnet::ModelError;

use crate::report::{Cell, Table};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Welfare,
    Nash,
    Dynamics,
    ReplicateScan,
    Poa,
    Risk,
    PolicyFilter,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Welfare => "welfare",
            Command::Nash => "nash",
            Command::Dynamics => "dynamics",
            Command::ReplicateScan => "replicate-scan",
            Command::Poa => "poa",
            Command::Risk => "risk",
            Command::PolicyFilter => "policy-filter",
            Command::Verify => "verify",
        }
    }
}

/// Effective options after command-line overrides, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub tol: f64,
    pub epsilon: Option<f64>,
    pub tie_policy: TiePolicy,
    pub seed: u64,
    pub n_cap: usize,
}

#[derive(Debug)]
pub enum CommandError {
    Usage(String),
    Model(ModelError),
}

impl From<ModelError> for CommandError {
    fn from(e: ModelError) -> Self {
        CommandError::Model(e)
    }
}

pub struct Outcome {
    pub result: Value,
    pub tables: Vec<Table>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    pub verification_failed: bool,
}

impl Outcome {
    fn new(result: Value, tables: Vec<Table>, summary: Vec<String>) -> Self {
        Self {
            result,
            tables,
            summary,
            verification_failed: false,
        }
    }
}

type Run = Result<Outcome, CommandError>;

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Value {
    to_value(&m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

fn partial_cell(p: Partial) -> Cell {
    match p {
        Partial::Finite(x) => x.into(),
        Partial::NegInfinite => f64::NEG_INFINITY.into(),
        Partial::PosInfinite => f64::INFINITY.into(),
    }
}

fn replicate_of(s: &Scenario, command: Command) -> Result<&ReplicateGame, CommandError> {
    s.replicate.as_ref().ok_or_else(|| {
        CommandError::Usage(format!("`{}` needs a scenario with a replicate block", command.name()))
    })
}

fn check_n_cap(rep: &ReplicateGame, o: &RunOptions) -> Result<(), CommandError> {
    if rep.n() > o.n_cap {
        return Err(ModelError::CapExceeded {
            cap: "n_cap",
            value: rep.n(),
            limit: o.n_cap,
        }
        .into());
    }
    Ok(())
}

/// The economy and network faced by the firms in game commands.
fn game_economy(s: &Scenario, o: &RunOptions) -> Result<(EconomySpec, ProductionNetwork), CommandError> {
    Ok(match o.epsilon {
        Some(eps) => {
            let econ = s.economy.with_profit_share(eps)?;
            let net = s.network.rescaled(&s.economy, &econ)?;
            (econ, net)
        }
        None => (s.economy.clone(), s.network.clone()),
    })
}

pub fn run(command: Command, scenario: Option<&Scenario>, o: &RunOptions) -> Run {
    if command == Command::Verify {
        return verify_all(o);
    }
    let s = scenario.ok_or_else(|| CommandError::Usage(format!("`{}` needs --scenario", command.name())))?;
    match command {
        Command::Solve => solve(s),
        Command::Welfare => welfare(s),
        Command::Nash => nash(s, o),
        Command::Dynamics => dynamics(s, o),
        Command::ReplicateScan => replicate_scan(s, o),
        Command::Poa => poa(s, o),
        Command::Risk => risk_scan(s, o),
        Command::PolicyFilter => policy_filter(s, o),
        Command::Verify => unreachable!("handled above"),
    }
}

fn firm_labels(s: &Scenario, i: usize) -> (Cell, Cell, Cell) {
    let category = s.economy.categories().category(i);
    let country = match &s.replicate {
        Some(rep) => Cell::from(rep.country_of(i) + 1),
        None => Cell::from(""),
    };
    ((i + 1).into(), category.into(), country)
}

fn solve(s: &Scenario) -> Run {
    let assumptions = economy::validate_assumptions(&s.economy, &s.network)?;
    let eq = economy::solve_equilibrium(&s.economy, &s.network)?;
    let mut firms = Table::new(
        "firms",
        &["firm", "category", "country", "revenue", "price", "output", "profit"],
    );
    for i in 0..s.economy.num_firms() {
        let (f, c, k) = firm_labels(s, i);
        firms.push(vec![
            f,
            c,
            k,
            eq.revenues[i].into(),
            eq.prices[i].into(),
            eq.outputs[i].into(),
            eq.profits[i].into(),
        ]);
    }
    let mut summary = Table::new("summary", &["quantity", "value"]);
    for (name, value) in [
        ("household_revenue", eq.household_revenue),
        ("log_welfare", eq.log_welfare),
        ("welfare", eq.welfare),
        ("balance_residual", eq.residuals.balance),
        ("labor_residual", eq.residuals.labor),
        ("market_clearing_residual", eq.residuals.market_clearing),
    ] {
        summary.push(vec![name.into(), value.into()]);
    }
    let lines = vec![
        format!("revenues: {:?}", eq.revenues),
        format!("welfare W = {}", eq.welfare),
    ];
    let result = json!({
        "assumptions": to_value(&assumptions),
        "equilibrium": to_value(&eq),
        "network": to_value(&s.network),
    });
    Ok(Outcome::new(result, vec![firms, summary], lines))
}

fn welfare(s: &Scenario) -> Run {
    let eq = economy::solve_equilibrium(&s.economy, &s.network)?;
    let report = economy::compute_welfare(&s.economy, &s.network, &eq)?;
    let gradient = economy::welfare_first_order(&s.economy, &s.network)?;
    let mut firms = Table::new(
        "firms",
        &["firm", "category", "country", "entropy_corrected_productivity", "gateway_weight", "returns_diagonal"],
    );
    for i in 0..s.economy.num_firms() {
        let (f, c, k) = firm_labels(s, i);
        firms.push(vec![
            f,
            c,
            k,
            report.entropy_corrected[i].into(),
            report.gateway[i].into(),
            report.returns_diagonal[i].into(),
        ]);
    }
    let mut links = Table::new(
        "links",
        &["firm", "supplier", "category", "share", "resolvent_partial", "walk_partial"],
    );
    for l in &gradient.links {
        links.push(vec![
            (l.firm + 1).into(),
            (l.supplier + 1).into(),
            l.category.into(),
            l.share.into(),
            partial_cell(l.resolvent_form),
            partial_cell(l.walk_form),
        ]);
    }
    let lines = vec![
        format!("welfare W = {}", report.welfare),
        format!("log welfare V = {} (direct {})", report.log_welfare, report.log_welfare_direct),
    ];
    let result = json!({
        "welfare": to_value(&report),
        "gradient": to_value(&gradient),
    });
    Ok(Outcome::new(result, vec![firms, links], lines))
}

fn nash(s: &Scenario, o: &RunOptions) -> Run {
    let (econ, net) = game_economy(s, o)?;
    let report = game::is_nash(&econ, &net, o.tol)?;
    let mut responses = Vec::new();
    let mut firms = Table::new("firms", &["firm", "category", "country", "profit", "best_profit", "gain"]);
    for i in 0..econ.num_firms() {
        let br = game::best_response(&econ, &net, i, o.tie_policy)?;
        let (f, c, k) = firm_labels(s, i);
        firms.push(vec![f, c, k, br.incumbent_profit.into(), br.profit.into(), br.gain().into()]);
        responses.push(br);
    }
    let lines = vec![format!(
        "nash: {} (largest gain {:e}, tolerance {:e})",
        report.is_nash, report.max_gain, report.tolerance
    )];
    let result = json!({
        "nash": to_value(&report),
        "best_responses": to_value(&responses),
    });
    Ok(Outcome::new(result, vec![firms], lines))
}

fn dynamics(s: &Scenario, o: &RunOptions) -> Run {
    let (econ, net) = game_economy(s, o)?;
    let schedule = s.solver.schedule(o.seed);
    let run = game::best_response_dynamics(&econ, &net, schedule, s.solver.max_rounds, o.tol)?;
    let nash = game::is_nash(&econ, &run.terminal, o.tol)?;
    let mut rounds = Table::new("rounds", &["round", "changed_rows", "max_change", "potential"]);
    for (k, r) in run.rounds.iter().enumerate() {
        rounds.push(vec![(k + 1).into(), r.changed_rows.into(), r.max_change.into(), r.potential.into()]);
    }
    let lines = vec![format!(
        "converged: {} after {} rounds; terminal network nash: {}; potential monotone: {}",
        run.converged,
        run.rounds.len(),
        nash.is_nash,
        run.potential_monotone
    )];
    let result = json!({
        "dynamics": to_value(&run),
        "terminal_nash": to_value(&nash),
    });
    Ok(Outcome::new(result, vec![rounds], lines))
}

fn replicate_scan(s: &Scenario, o: &RunOptions) -> Run {
    let rep = replicate_of(s, Command::ReplicateScan)?;
    check_n_cap(rep, o)?;
    let eps = o.epsilon.unwrap_or(game::MIN_PROFIT_SHARE);
    let mut entries = Vec::new();
    let mut table = Table::new(
        "partitions",
        &["partition", "blocks", "welfare", "nash", "max_gain", "closed_form_gap", "recovered_gap"],
    );
    let exact = rep.with_profit_share(0.0)?;
    for q in all_partitions(rep.n()) {
        let scan = replicate::verify_cluster_nash(rep, &q, &[eps], o.tol)?;
        let inverse = replicate::cluster_inverse_table(rep, &q)?;
        let net = replicate::build_clustered_network(&exact, &q)?.network;
        let w = economy::simplified_welfare(exact.economy(), &net, None)?;
        let report = &scan.entries[0].report;
        table.push(vec![
            q.to_string().into(),
            q.num_blocks().into(),
            w.into(),
            report.is_nash.into(),
            report.max_gain.into(),
            inverse.closed_form_gap.into(),
            inverse.recovered_gap.into(),
        ]);
        entries.push(json!({
            "partition": to_value(&q),
            "welfare": w,
            "nash": to_value(&scan),
            "inverse": to_value(&inverse),
        }));
    }
    let all_nash = table.rows.iter().all(|r| r[3] == Cell::Bool(true));
    let lines = vec![format!(
        "{} clustered networks at profit share {eps:e}; all Nash: {all_nash}",
        entries.len()
    )];
    let result = json!({
        "n": rep.n(),
        "epsilon": eps,
        "category_inverse": rows(&replicate::category_inverse(rep)?),
        "partitions": Value::Array(entries),
    });
    Ok(Outcome::new(result, vec![table], lines))
}

fn poa(s: &Scenario, o: &RunOptions) -> Run {
    let rep = replicate_of(s, Command::Poa)?;
    let options = ScanOptions {
        partition_cap: o.n_cap,
        nash_epsilon: o.epsilon.unwrap_or(game::MIN_PROFIT_SHARE),
        nash_tol: o.tol,
        random_starts: s.solver.random_starts,
        seed: o.seed,
        max_rounds: s.solver.max_rounds,
    };
    let report = replicate::partition_welfare_scan(rep, &options)?;
    let mut partitions = Table::new("partitions", &["partition", "blocks", "welfare", "nash"]);
    for p in &report.partitions {
        partitions.push(vec![
            p.partition.to_string().into(),
            p.partition.num_blocks().into(),
            p.welfare.into(),
            p.nash.into(),
        ]);
    }
    let mut summary = Table::new("summary", &["quantity", "value"]);
    for (name, value) in [
        ("islands_welfare", report.islands_welfare),
        ("full_welfare", report.full_welfare),
        ("welfare_gap", report.welfare_gap),
        ("welfare_gap_exp", report.welfare_gap_exp),
        ("anarchy_constant", report.anarchy_constant),
        ("anarchy_constant_log_n", report.anarchy_constant_log_n),
        ("max_equilibrium_welfare", report.max_equilibrium_welfare),
        ("min_equilibrium_welfare", report.min_equilibrium_welfare),
    ] {
        summary.push(vec![name.into(), value.into()]);
    }
    let lines = vec![
        format!("islands W = {}, full W = {}", report.islands_welfare, report.full_welfare),
        format!(
            "equilibrium welfare gap {} ; K = {} ; K log n = {}",
            report.welfare_gap, report.anarchy_constant, report.anarchy_constant_log_n
        ),
    ];
    Ok(Outcome::new(to_value(&report), vec![partitions, summary], lines))
}

fn risk_scan(s: &Scenario, o: &RunOptions) -> Run {
    let rep = replicate_of(s, Command::Risk)?;
    let spec = s
        .risk
        .ok_or_else(|| CommandError::Usage("`risk` needs a scenario with a risk block".into()))?;
    let spatial = spec.spatial();
    let scan = risk::risk_partition_scan(rep, spatial, spec.rho, spec.disruption, o.n_cap, o.tol)?;
    let rates = risk::build_risk_matrix(rep, spatial)?;
    let mut entries = Vec::new();
    let mut table = Table::new(
        "partitions",
        &["partition", "baseline_welfare", "expected_welfare", "exact_expected_welfare", "scenarios"],
    );
    for q in all_partitions(rep.n()) {
        let closed = risk::expected_welfare_clustered(rep, &q, &rates, spec.rho, spec.disruption)?;
        let exact = if spec.exact {
            let net = replicate::build_clustered_network(rep, &q)?.network;
            let model = RiskModel::new(rates.clone(), spec.rho, spec.disruption)?;
            let options = ExactOptions {
                link_cap: s.solver.risk_link_cap,
                ..ExactOptions::default()
            };
            Some(risk::expected_welfare_exact(rep.economy(), &net, &model, &options)?)
        } else {
            None
        };
        table.push(vec![
            q.to_string().into(),
            closed.baseline_welfare.into(),
            closed.expected_welfare.into(),
            exact.as_ref().map_or(Cell::from(""), |e| e.expected_welfare.into()),
            exact.as_ref().map_or(Cell::from(""), |e| Cell::Int(e.scenarios)),
        ]);
        entries.push(json!({
            "closed_form": to_value(&closed),
            "exact": to_value(&exact),
        }));
    }
    let lines = vec![format!(
        "best {} ; worst {} ; predicted {:?} ; ordering holds: {}",
        scan.argmax, scan.argmin, scan.expected, scan.ordering_holds
    )];
    let result = json!({
        "scan": to_value(&scan),
        "partitions": Value::Array(entries),
    });
    Ok(Outcome::new(result, vec![table], lines))
}

fn policy_filter(s: &Scenario, o: &RunOptions) -> Run {
    let rep = replicate_of(s, Command::PolicyFilter)?;
    let p = s
        .policy
        .as_ref()
        .ok_or_else(|| CommandError::Usage("`policy-filter` needs a scenario with a policy block".into()))?;
    let c = policy::compatible_partitions(rep, p, o.n_cap)?;
    let mut table = Table::new("partitions", &["partition", "blocks"]);
    for q in &c.partitions {
        table.push(vec![q.to_string().into(), q.num_blocks().into()]);
    }
    let mut lines: Vec<String> = c.partitions.iter().map(|q| format!("compatible: {q}")).collect();
    if let Some(cert) = &c.certificate {
        lines.push(format!("infeasible: {cert:?}"));
    }
    let result = json!({
        "policy": to_value(p),
        "compatibility": to_value(&c),
    });
    Ok(Outcome::new(result, vec![table], lines))
}

fn verify_all(o: &RunOptions) -> Run {
    let options = VerifyOptions {
        seed: o.seed,
        ..VerifyOptions::default()
    };
    let outcomes = verify::run_all(&options);
    let mut table = Table::new("checks", &["criterion", "check", "gating", "passed", "detail"]);
    for c in &outcomes {
        for k in &c.checks {
            table.push(vec![
                c.id.into(),
                k.name.as_str().into(),
                k.gating.into(),
                k.passed.into(),
                k.detail.as_str().into(),
            ]);
        }
    }
    let lines = outcomes.iter().map(|c| c.to_string()).collect();
    let failed = outcomes.iter().any(|c| !c.passed);
    let result = json!({
        "options": to_value(&options),
        "passed": !failed,
        "criteria": to_value(&outcomes),
    });
    Ok(Outcome {
        result,
        tables: vec![table],
        summary: lines,
        verification_failed: failed,
    })
}
