use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use wflow::fields::{total_dissipativity_check, CheckMode, DEFAULT_SAMPLES};
use wflow::flows::{
    contraction_check, empirical_sampler, evi_residual, evolve, implicit_error_study, jko_objective, jko_step,
    mean_field_study, sticky_diagnostics, Driver, FlowConfig,
};
use wflow::measures::{expand, Coupling, DiscreteMeasure, Point, FLOW_MERGE_EPS};
use wflow::operators::{minimal_selection_estimate, SolverConfig};
use wflow::transport::{
    geodesic_decompose, perturb_for_injectivity, s_family_injective, w2_bruteforce, w2_exact, w_infinity,
    DEFAULT_GEODESIC_TOL,
};

use crate::scenario::{read_json, Scenario};
use crate::{Cli, Command};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

struct Ctx<'a> {
    out: &'a Path,
    seed: Option<u64>,
    tol: Option<f64>,
}

impl Ctx<'_> {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn seed(&self, sc: &Scenario) -> u64 {
        self.seed.or(sc.seed).unwrap_or(0)
    }

    fn solver(&self) -> SolverConfig {
        match self.tol {
            Some(t) => SolverConfig::default().with_tol(t),
            None => SolverConfig::default(),
        }
    }

    fn flow(&self, merge_eps: Option<f64>) -> FlowConfig {
        FlowConfig::default()
            .with_merge_eps(merge_eps.unwrap_or(FLOW_MERGE_EPS))
            .with_solver(self.solver())
    }
}

pub fn dispatch(cli: &Cli) -> Result<Verdict> {
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            bail!("--tol must be a positive real, got {t}");
        }
    }
    let ctx = Ctx {
        out: &cli.out,
        seed: cli.seed,
        tol: cli.tol,
    };
    match &cli.command {
        Command::W2 { a, b, bruteforce } => w2_cmd(&ctx, a, b, *bruteforce),
        Command::WInf { a, b } => winf_cmd(a, b),
        Command::Decompose { coupling } => decompose_cmd(&ctx, coupling),
        Command::Simulate { scenario } => run_named(&ctx, scenario, Some("simulate")),
        Command::Jko { scenario } => run_named(&ctx, scenario, Some("jko")),
        Command::Yosida { scenario } => run_named(&ctx, scenario, Some("yosida")),
        Command::Verify { scenario } => run_named(&ctx, scenario, Some("verify")),
        Command::Evi { scenario } => run_named(&ctx, scenario, Some("evi")),
        Command::Contraction { scenario } => run_named(&ctx, scenario, Some("contraction")),
        Command::EulerStudy { scenario } => run_named(&ctx, scenario, Some("euler-study")),
        Command::Meanfield { scenario } => run_named(&ctx, scenario, Some("meanfield")),
        Command::Perturb { scenario } => run_named(&ctx, scenario, Some("perturb")),
        Command::Run { scenario } => run_named(&ctx, scenario, None),
    }
}

fn run_named(ctx: &Ctx, path: &Path, expected: Option<&str>) -> Result<Verdict> {
    let sc = Scenario::load(path)?;
    let name = match (expected, sc.experiment.as_deref()) {
        (Some(e), Some(found)) if e != found => {
            bail!("scenario is for experiment `{found}`, not `{e}`")
        }
        (Some(e), _) => e.to_string(),
        (None, Some(found)) => found.to_string(),
        (None, None) => bail!("`run` needs the scenario's `experiment` field"),
    };
    match name.as_str() {
        "simulate" => simulate(ctx, &sc),
        "jko" => jko(ctx, &sc),
        "yosida" => yosida_cmd(ctx, &sc),
        "verify" => verify(ctx, &sc),
        "evi" => evi(ctx, &sc),
        "contraction" => contraction(ctx, &sc),
        "euler-study" => euler_study(ctx, &sc),
        "meanfield" => meanfield(ctx, &sc),
        "perturb" => perturb(ctx, &sc),
        other => Err(anyhow!("unknown experiment `{other}`")),
    }
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| format!(",{v}")).collect()
}

fn header(prefix: &str, d: usize) -> String {
    (1..=d).map(|i| format!(",{prefix}_{i}")).collect()
}

fn w2_cmd(ctx: &Ctx, a: &Path, b: &Path, bruteforce: bool) -> Result<Verdict> {
    let mu: DiscreteMeasure = read_json(a)?;
    let nu: DiscreteMeasure = read_json(b)?;
    let r = w2_exact(&mu, &nu)?;
    println!("W2 = {}", r.distance);
    println!("cost = {}", r.cost);
    let plan = &r.plan;
    let d = mu.dim();
    let mut csv = format!("source_index,target_index,mass,denominator{}{}\n", header("x", d), header("y", d));
    for (i, j, m) in plan.support() {
        let _ = writeln!(
            csv,
            "{i},{j},{m},{}{}{}",
            plan.denominator(),
            coords(&plan.source().atoms()[i].x),
            coords(&plan.target().atoms()[j].x)
        );
    }
    ctx.write("plan.csv", &csv)?;
    if bruteforce {
        let brute = w2_bruteforce(&mu, &nu)?;
        let agree = (brute - r.distance).abs() <= 1e-12 * brute.max(1.0);
        println!("bruteforce = {brute} ({})", if agree { "agrees" } else { "MISMATCH" });
        return Ok(Verdict::from_pass(agree));
    }
    Ok(Verdict::Pass)
}

fn winf_cmd(a: &Path, b: &Path) -> Result<Verdict> {
    let mu: DiscreteMeasure = read_json(a)?;
    let nu: DiscreteMeasure = read_json(b)?;
    println!("W_inf = {}", w_infinity(&mu, &nu)?);
    Ok(Verdict::Pass)
}

fn decompose_cmd(ctx: &Ctx, path: &Path) -> Result<Verdict> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let gamma = Coupling::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dec = geodesic_decompose(&gamma, ctx.tol.unwrap_or(DEFAULT_GEODESIC_TOL))?;
    println!("segments = {}", dec.segments());
    println!("breakpoints = {:?}", dec.breakpoints);
    println!("plan cost = {}", dec.cost);
    let mut csv = String::from("segment,t_start,t_end,speed\n");
    for (k, (w, v)) in dec.breakpoints.windows(2).zip(&dec.segment_speeds).enumerate() {
        let _ = writeln!(csv, "{k},{},{},{v}", w[0], w[1]);
    }
    ctx.write("decomposition.csv", &csv)?;
    Ok(Verdict::Pass)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    t: f64,
    merge_eps: Option<f64>,
    /// λ for the sticky diagnostics; defaults to the driver's.
    lambda: Option<f64>,
}

fn simulate(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: SimulateParams = sc.params()?;
    let driver = sc.driver()?;
    let mu0 = sc.measure(0, "initial measure")?;
    let flow = evolve(&driver, mu0, sc.scheme()?, p.t, &ctx.flow(p.merge_eps))?;
    ctx.write("trajectory.csv", &flow.to_csv())?;
    ctx.write("diagnostics.json", &flow.diagnostics_json())?;
    ctx.write("final_measure.json", &flow.last().to_json_string())?;

    let cards: Vec<usize> = flow.diagnostics.iter().map(|d| d.support_cardinality).collect();
    println!("steps = {}", flow.len() - 1);
    println!("support cardinality: {} -> {}", cards[0], cards[cards.len() - 1]);
    for k in 1..cards.len() {
        if cards[k] < cards[k - 1] {
            println!("  drop {} -> {} at t = {}", cards[k - 1], cards[k], flow.times[k]);
        }
    }
    let report = sticky_diagnostics(&flow, p.lambda.unwrap_or(driver.lambda()));
    println!(
        "cardinality nonincreasing: {}, diameter bound: {}, moment bound: {}",
        report.cardinality_nonincreasing, report.diameter_bound_ok, report.moment_bound_ok
    );
    Ok(Verdict::from_pass(report.all()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JkoParams {
    tau: f64,
    #[serde(default = "one")]
    steps: usize,
    /// Random measures per step that the step output must beat on the JKO objective.
    #[serde(default)]
    competitors: usize,
}

fn one() -> usize {
    1
}

fn jko(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: JkoParams = sc.params()?;
    let Driver::Functional(phi) = sc.driver()? else {
        bail!("jko needs a `pw` functional");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(sc));
    let mut cur = sc.measure(0, "initial measure")?.clone();
    let mut steps = vec![cur.clone()];
    let mut pass = true;
    for k in 1..=p.steps {
        let next = jko_step(&phi, &cur, p.tau, &ctx.solver())?;
        let best = jko_objective(&phi, &cur, &next, p.tau)?;
        println!("step {k}: objective = {best}, energy = {}", phi.value(&next));
        let mut margin = f64::INFINITY;
        for _ in 0..p.competitors {
            let comp = if rng.gen_bool(0.5) {
                next.pushforward(|x| x.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect())?
            } else {
                random_measure(&mut rng, cur.dim(), 6, 2.0)?
            };
            margin = margin.min(jko_objective(&phi, &cur, &comp, p.tau)? - best);
        }
        if p.competitors > 0 {
            println!("  smallest margin over {} competitors = {margin}", p.competitors);
            pass &= margin >= -1e-12;
        }
        steps.push(next.clone());
        cur = next;
    }
    ctx.write("jko.json", &serde_json::to_string_pretty(&steps)?)?;
    Ok(Verdict::from_pass(pass))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct YosidaParams {
    #[serde(default = "halving")]
    taus: Vec<f64>,
    #[serde(default = "mono_slack")]
    slack: f64,
    /// When set, `|B_τ X|` at the last step must be this close to `|f[X]|`.
    limit_tol: Option<f64>,
}

fn halving() -> Vec<f64> {
    (1..=6).map(|k| 0.5f64.powi(k)).collect()
}
fn mono_slack() -> f64 {
    1e-8
}

fn yosida_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: YosidaParams = sc.params()?;
    let op = sc.driver()?.operator();
    let mu = sc.measure(0, "base point")?;
    let x = expand(mu, mu.denominator())?;
    let est = minimal_selection_estimate(&op, &x, &p.taus, &ctx.solver())?;
    let mut csv = String::from("tau,norm\n");
    for (t, n) in est.taus.iter().zip(&est.norms) {
        let _ = writeln!(csv, "{t},{n}");
        println!("tau = {t:<10} (1 - lambda tau)|B_tau X| = {n}");
    }
    ctx.write("yosida.csv", &csv)?;
    let monotone = est.norms.windows(2).all(|w| w[1] >= w[0] - p.slack);
    println!("nondecreasing: {monotone}");
    let mut pass = monotone;
    if let Some(tol) = p.limit_tol {
        let b0 = op.apply(&x)?.norm();
        let gap = (est.norms[est.norms.len() - 1] - b0).abs();
        println!("|f[X]| = {b0}, gap = {gap}");
        pass &= gap <= tol;
    }
    Ok(Verdict::from_pass(pass))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    #[serde(default)]
    lambda: f64,
    #[serde(default = "exhaustive")]
    mode: String,
    samples: Option<usize>,
}

fn exhaustive() -> String {
    "exhaustive".into()
}

fn verify(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: VerifyParams = sc.params()?;
    let f = sc.driver()?.field();
    let mode = match p.mode.as_str() {
        "exhaustive" => CheckMode::Exhaustive,
        "assignment" => CheckMode::Assignment,
        "sampled" => CheckMode::Sampled {
            k: p.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: ctx.seed(sc),
        },
        other => bail!("params.mode: unknown mode `{other}` (exhaustive, assignment, sampled)"),
    };
    let r = total_dissipativity_check(&f, sc.measure(0, "first measure")?, sc.measure(1, "second measure")?, p.lambda, mode)?;
    println!("pass = {}", r.pass);
    println!("worst gap = {}", r.worst_gap);
    println!("couplings checked = {}", r.couplings_checked);
    let doc = json!({"pass": r.pass, "worst_gap": r.worst_gap, "couplings_checked": r.couplings_checked, "lambda": p.lambda});
    ctx.write("verify.json", &serde_json::to_string_pretty(&doc)?)?;
    if let Some(w) = &r.witness {
        ctx.write("witness.json", &w.to_json_string())?;
        println!("witness coupling written to witness.json");
    }
    Ok(Verdict::from_pass(r.pass))
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, max_atoms: usize, scale: f64) -> Result<DiscreteMeasure> {
    let n = rng.gen_range(1..=max_atoms.max(1));
    let pts = (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiscreteMeasure::uniform(pts)?)
}

fn second_moment(mu: &DiscreteMeasure) -> f64 {
    mu.weighted().map(|(x, w)| w * x.iter().map(|v| v * v).sum::<f64>()).sum()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EviParams {
    t: f64,
    /// Spacing of the difference stencil; a multiple of the scheme step.
    dt: Option<f64>,
    lambda: Option<f64>,
    #[serde(default)]
    random: usize,
    #[serde(default = "five")]
    max_atoms: usize,
    #[serde(default = "two")]
    scale: f64,
    /// Residuals must stay below `factor·(h + Δt²)·(1 + m₂²(ν) + m₂²(μ₀))`.
    #[serde(default = "five_f")]
    factor: f64,
}

fn five() -> usize {
    5
}
fn two() -> f64 {
    2.0
}
fn five_f() -> f64 {
    5.0
}

fn evi(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: EviParams = sc.params()?;
    let driver = sc.driver()?;
    let mu0 = sc.measure(0, "initial measure")?;
    let flow = evolve(&driver, mu0, sc.scheme()?, p.t, &ctx.flow(None))?;
    let h = flow.times.get(1).copied().ok_or_else(|| anyhow!("flow has no steps; use t > 0"))?;
    let stride = p.dt.map_or(1, |dt| (dt / h).round().max(1.0) as usize);
    let coarse = flow.subsample(stride);
    let dt = h * stride as f64;
    let lambda = p.lambda.unwrap_or(driver.lambda());

    let mut nus: Vec<DiscreteMeasure> = sc.measures[1..].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(sc));
    for _ in 0..p.random {
        nus.push(random_measure(&mut rng, mu0.dim(), p.max_atoms, p.scale)?);
    }
    if nus.is_empty() {
        bail!("evi needs comparison measures: `measures[1..]` or `params.random`");
    }
    let field = driver.field();
    let mut csv = String::from("nu,t,derivative,pairing,w2_squared,residual,bound,tie\n");
    let (mut violations, mut ties, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
    for (k, nu) in nus.iter().enumerate() {
        let bound = p.factor * (h + dt * dt) * (1.0 + second_moment(nu) + second_moment(mu0));
        for row in evi_residual(&coarse, &field, lambda, nu)? {
            let _ = writeln!(
                csv,
                "{k},{},{},{},{},{},{bound},{}",
                row.t, row.derivative, row.pairing, row.w2_squared, row.residual, row.tie
            );
            worst = worst.max(row.residual / bound);
            if row.residual > bound {
                if row.tie {
                    ties += 1;
                } else {
                    violations += 1;
                }
            }
        }
    }
    ctx.write("evi.csv", &csv)?;
    println!("comparison measures = {}, stencil dt = {dt}", nus.len());
    println!("max residual / bound = {worst}");
    if ties > 0 {
        println!("warning: {ties} rows over the bound have tied optimal plans");
    }
    println!("violations = {violations}");
    Ok(Verdict::from_pass(violations == 0))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionParams {
    times: Vec<f64>,
    lambda: Option<f64>,
    #[serde(default = "ratio_slack")]
    slack: f64,
    #[serde(default)]
    random_pairs: usize,
    #[serde(default = "five")]
    max_atoms: usize,
    #[serde(default = "two")]
    scale: f64,
}

fn ratio_slack() -> f64 {
    1e-3
}

fn contraction(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: ContractionParams = sc.params()?;
    let driver = sc.driver()?;
    let scheme = sc.scheme()?;
    let lambda = p.lambda.unwrap_or(driver.lambda());
    let mut pairs = Vec::new();
    if sc.measures.len() >= 2 {
        pairs.push((sc.measures[0].clone(), sc.measures[1].clone()));
    }
    let dim = sc.measures.first().map_or(1, |m| m.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(sc));
    for _ in 0..p.random_pairs {
        let a = random_measure(&mut rng, dim, p.max_atoms, p.scale)?;
        let b = random_measure(&mut rng, dim, p.max_atoms, p.scale)?;
        pairs.push((a, b));
    }
    if pairs.is_empty() {
        bail!("contraction needs `measures[0..2]` or `params.random_pairs`");
    }
    let mut csv = String::from("pair,t,ratio,guarded\n");
    let (mut pass, mut worst) = (true, 0f64);
    for (k, (a, b)) in pairs.iter().enumerate() {
        let r = contraction_check(&driver, a, b, lambda, &p.times, scheme, p.slack, &ctx.flow(None))?;
        for (t, ratio) in r.times.iter().zip(&r.ratios) {
            let _ = writeln!(csv, "{k},{t},{ratio},{}", r.guarded);
            worst = worst.max(*ratio);
        }
        pass &= r.pass;
    }
    ctx.write("contraction.csv", &csv)?;
    println!("pairs = {}, max ratio = {worst} (limit {})", pairs.len(), 1.0 + p.slack);
    Ok(Verdict::from_pass(pass))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EulerParams {
    t: f64,
    n_list: Vec<usize>,
    reference: Option<DiscreteMeasure>,
}

fn euler_study(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: EulerParams = sc.params()?;
    let rows = implicit_error_study(&sc.driver()?, sc.measure(0, "initial measure")?, p.t, &p.n_list, p.reference.as_ref(), &ctx.flow(None))?;
    let mut csv = String::from("n,error,bound,pass\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.n, r.error, r.bound, r.pass);
        println!("n = {:>5}  error = {:.6e}  bound = {:.6e}  {}", r.n, r.error, r.bound, if r.pass { "ok" } else { "FAIL" });
    }
    ctx.write("euler_study.csv", &csv)?;
    Ok(Verdict::from_pass(rows.iter().all(|r| r.pass)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanFieldParams {
    t: f64,
    n_list: Vec<usize>,
    lambda: Option<f64>,
    #[serde(default = "jitter")]
    jitter: f64,
    #[serde(default = "one")]
    seeds: usize,
    #[serde(default = "mf_slack")]
    slack: f64,
}

fn jitter() -> f64 {
    0.1
}
fn mf_slack() -> f64 {
    1e-6
}

fn meanfield(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: MeanFieldParams = sc.params()?;
    let driver = sc.driver()?;
    let mu0 = sc.measure(0, "reference measure")?;
    let lambda = p.lambda.unwrap_or(driver.lambda());
    let base = ctx.seed(sc);
    let mut csv = String::from("seed,n,initial,final_error,bound,pass\n");
    let mut pass = true;
    for s in 0..p.seeds as u64 {
        let seed = base.wrapping_add(s);
        let rows = mean_field_study(&driver, mu0, empirical_sampler(mu0, p.jitter, seed), &p.n_list, p.t, lambda, sc.scheme()?, p.slack, &ctx.flow(None))?;
        for r in rows {
            let _ = writeln!(csv, "{seed},{},{},{},{},{}", r.n, r.initial, r.final_error, r.bound, r.pass);
            pass &= r.pass;
        }
    }
    ctx.write("meanfield.csv", &csv)?;
    println!("seeds = {}, sizes = {:?}, all within bound: {pass}", p.seeds, p.n_list);
    Ok(Verdict::from_pass(pass))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbParams {
    a: Vec<Point>,
    b: Vec<Point>,
    radius: f64,
}

fn perturb(ctx: &Ctx, sc: &Scenario) -> Result<Verdict> {
    let p: PerturbParams = sc.params()?;
    let moved = perturb_for_injectivity(&p.a, &p.b, p.radius, ctx.seed(sc))?;
    let ok = s_family_injective(&p.a, &p.b, &moved)?;
    let shift = p
        .b
        .iter()
        .zip(&moved)
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    println!("max displacement = {shift} (radius {})", p.radius);
    println!("s-family injective = {ok}");
    ctx.write("perturbed.json", &serde_json::to_string_pretty(&json!({ "b": moved }))?)?;
    Ok(Verdict::from_pass(ok && shift < p.radius))
}
