//! Instance generators: the worst-case constructions, seeded random budget-capped
//! instances, and CSV ingestion.
//!
//! Random instances use ChaCha8 seeded from a `u64` and draw, in this order, every
//! value (row-major), then one uniform per entry for the sparsity mask (entry kept
//! when the draw is `>= sparsity`), then one budget per agent from `Uniform(0, T)`,
//! redrawing exact zeros.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Instance, LinearRelation, Relation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueDist {
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub n: usize,
    pub m: usize,
    pub budget_cap: f64,
    pub seed: u64,
    pub dist: ValueDist,
    pub sparsity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForgeRecipe {
    /// Two agents, `v = [[alpha, 0], [0, beta]]`; agent 0 equalizes both items.
    Thm1 { alpha: f64, beta: f64 },
    /// `v = [[1, 0], [1, 1]]`; agent 1 requires `eps * x_10 = x_11`.
    Thm3 { eps: f64 },
    /// Agent 0 values item 0; agents `1..=k` value item 0 and their own item `i`
    /// and require `eps * x_i0 = x_ii`.
    Cor3 { k: usize, eps: f64 },
    /// `n + 1` agents, `2n + 1` items, `c = beta * n`; agent 0 equalizes items `0..=n`.
    /// Without `beta`, the smallest `beta` with `beta^(1-gamma) (1+beta)^gamma >= 1`.
    Thm4 { n: usize, gamma: f64, beta: Option<f64> },
    Random(RandomSpec),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadParams(msg.into())
}

/// Smallest `beta > 0` with `beta^(1-gamma) * (1+beta)^gamma >= 1`, for `gamma < 1`.
pub fn thm4_min_beta(gamma: f64) -> Result<f64> {
    if !(gamma < 1.0) {
        return Err(bad(format!("no smallest beta for gamma = {gamma}; pass beta explicitly")));
    }
    let h = |b: f64| (1.0 - gamma) * b.ln() + gamma * b.ln_1p();
    let (mut lo, mut hi) = (1e-12, 1.0);
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl ForgeRecipe {
    /// The value matrix and the constraint sets of the construction.
    pub fn build(&self) -> Result<(Instance, Vec<ConstraintSet>)> {
        match *self {
            ForgeRecipe::Random(spec) => Ok((random_budget_instance(&spec)?, Vec::new())),
            _ => paper_instance(self),
        }
    }

    /// Replaces the seed of a random recipe; other recipes are unchanged.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            ForgeRecipe::Random(spec) => ForgeRecipe::Random(RandomSpec { seed, ..spec }),
            other => other,
        }
    }
}

fn equality(agent: usize, m: usize, terms: &[(usize, f64)]) -> LinearRelation {
    let mut coeffs = vec![0.0; m];
    for &(j, a) in terms {
        coeffs[j] += a;
    }
    LinearRelation { agent, coeffs, relation: Relation::Eq, rhs: 0.0 }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive, got {x}")))
    }
}

fn unit_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(bad(format!("eps must lie in (0, 1], got {eps}")))
    }
}

/// Builds one of the worst-case constructions.
pub fn paper_instance(recipe: &ForgeRecipe) -> Result<(Instance, Vec<ConstraintSet>)> {
    match *recipe {
        ForgeRecipe::Thm1 { alpha, beta } => {
            positive("alpha", alpha)?;
            positive("beta", beta)?;
            let inst = Instance::new(vec![vec![alpha, 0.0], vec![0.0, beta]], None)?;
            let set = ConstraintSet::new(0, vec![equality(0, 2, &[(0, 1.0), (1, -1.0)])])?;
            Ok((inst, vec![set]))
        }
        ForgeRecipe::Thm3 { eps } => {
            unit_eps(eps)?;
            let inst = Instance::new(vec![vec![1.0, 0.0], vec![1.0, 1.0]], None)?;
            let set = ConstraintSet::new(1, vec![equality(1, 2, &[(0, eps), (1, -1.0)])])?;
            Ok((inst, vec![set]))
        }
        ForgeRecipe::Cor3 { k, eps } => {
            if k == 0 {
                return Err(bad("k must be at least 1"));
            }
            unit_eps(eps)?;
            let m = k + 1;
            let mut values = vec![vec![0.0; m]; k + 1];
            values[0][0] = 1.0;
            let mut sets = Vec::with_capacity(k);
            for i in 1..=k {
                values[i][0] = 1.0;
                values[i][i] = 1.0;
                sets.push(ConstraintSet::new(i, vec![equality(i, m, &[(0, eps), (i, -1.0)])])?);
            }
            Ok((Instance::new(values, None)?, sets))
        }
        ForgeRecipe::Thm4 { n, gamma, beta } => {
            if n < 2 {
                return Err(bad("n must be at least 2"));
            }
            if !(gamma <= 1.0) {
                return Err(bad(format!("gamma must be at most 1, got {gamma}")));
            }
            let beta = match beta {
                Some(b) => b,
                None => thm4_min_beta(gamma)?,
            };
            positive("beta", beta)?;
            let c = beta * n as f64;
            if c < 1.0 {
                return Err(bad(format!("beta * n = {c} must be at least 1")));
            }
            let m = 2 * n + 1;
            let mut values = vec![vec![0.0; m]; n + 1];
            values[0][0] = c;
            for i in 1..=n {
                values[0][i] = 1.0;
                values[i][i] = 1.0;
                values[i][i + n] = c - 1.0;
            }
            let relations = (1..=n).map(|k| equality(0, m, &[(0, 1.0), (k, -1.0)])).collect();
            Ok((Instance::new(values, None)?, vec![ConstraintSet::new(0, relations)?]))
        }
        ForgeRecipe::Random(_) => Err(bad("random recipes have no fixed construction")),
    }
}

fn draw_budgets(rng: &mut ChaCha8Rng, n: usize, budget_cap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let b = rng.gen_range(0.0..budget_cap);
            if b > 0.0 {
                break b;
            }
        })
        .collect()
}

/// Seeded random instance with budgets drawn from `Uniform(0, T)`.
pub fn random_budget_instance(spec: &RandomSpec) -> Result<Instance> {
    let RandomSpec { n, m, budget_cap, seed, dist, sparsity } = *spec;
    if n == 0 || m == 0 {
        return Err(bad("n and m must be at least 1"));
    }
    positive("T", budget_cap)?;
    if !(0.0..1.0).contains(&sparsity) {
        return Err(bad(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = match dist {
        ValueDist::Uniform { lo, hi } => {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(bad(format!("uniform bounds need 0 <= lo < hi, got ({lo}, {hi})")));
            }
            (0..n * m).map(|_| rng.gen_range(lo..hi)).collect()
        }
        ValueDist::LogNormal { mu, sigma } => {
            let d = LogNormal::new(mu, sigma).map_err(|e| bad(format!("lognormal: {e}")))?;
            (0..n * m).map(|_| d.sample(&mut rng)).collect()
        }
    };
    for v in values.iter_mut() {
        let u: f64 = rng.gen();
        if u < sparsity {
            *v = 0.0;
        }
    }
    let budgets = draw_budgets(&mut rng, n, budget_cap);
    Instance::new(values.chunks(m).map(<[f64]>::to_vec).collect(), Some(budgets))
}

/// Same values with fresh `Uniform(0, T)` budgets drawn from `seed`.
pub fn with_random_budgets(instance: &Instance, budget_cap: f64, seed: u64) -> Result<Instance> {
    positive("T", budget_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budgets = draw_budgets(&mut rng, instance.n_agents(), budget_cap);
    let out = Instance::new(instance.rows(), Some(budgets))?;
    match (&instance.agent_labels, &instance.item_labels) {
        (Some(a), Some(i)) => out.with_labels(a.clone(), i.clone()),
        _ => Ok(out),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| bad(format!("{key}: {s:?} is not a number")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| bad(format!("{key}: {s:?} is not a nonnegative integer")))
}

impl FromStr for ForgeRecipe {
    type Err = Error;

    /// `kind:key=value,...`, e.g. `thm4:n=200,gamma=0.5,beta=0.62` or
    /// `random:n=6,m=20,T=10,dist=lognormal,mu=0,sigma=1,sparsity=0.3,seed=42`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: BTreeMap<String, String> = BTreeMap::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let allowed: &[&str] = match kind.trim().to_ascii_lowercase().as_str() {
            "thm1" => &["alpha", "beta"],
            "thm3" => &["eps"],
            "cor3" => &["k", "eps"],
            "thm4" => &["n", "gamma", "beta"],
            "random" => &["n", "m", "T", "dist", "mu", "sigma", "lo", "hi", "sparsity", "seed"],
            other => return Err(bad(format!("unknown recipe kind {other:?}"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(bad(format!("unknown parameter {k:?} for {kind}")));
        }
        let num = |k: &str, default: f64| params.get(k).map_or(Ok(default), |v| parse_f64(k, v));
        let int = |k: &str, default: usize| params.get(k).map_or(Ok(default), |v| parse_usize(k, v));
        Ok(match kind.trim().to_ascii_lowercase().as_str() {
            "thm1" => ForgeRecipe::Thm1 { alpha: num("alpha", 2.0)?, beta: num("beta", 1.0)? },
            "thm3" => ForgeRecipe::Thm3 { eps: num("eps", 1.0)? },
            "cor3" => ForgeRecipe::Cor3 { k: int("k", 2)?, eps: num("eps", 0.01)? },
            "thm4" => ForgeRecipe::Thm4 {
                n: int("n", 100)?,
                gamma: num("gamma", 0.5)?,
                beta: params.get("beta").map(|v| parse_f64("beta", v)).transpose()?,
            },
            _ => {
                let dist = match params.get("dist").map_or("lognormal", String::as_str) {
                    "lognormal" => ValueDist::LogNormal { mu: num("mu", 0.0)?, sigma: num("sigma", 1.0)? },
                    "uniform" => ValueDist::Uniform { lo: num("lo", 0.0)?, hi: num("hi", 1.0)? },
                    other => return Err(bad(format!("unknown value distribution {other:?}"))),
                };
                let seed = params
                    .get("seed")
                    .map(|v| v.parse::<u64>().map_err(|_| bad(format!("seed: {v:?}"))))
                    .transpose()?
                    .unwrap_or(0);
                ForgeRecipe::Random(RandomSpec {
                    n: int("n", 6)?,
                    m: int("m", 20)?,
                    budget_cap: num("T", 10.0)?,
                    seed,
                    dist,
                    sparsity: num("sparsity", 0.3)?,
                })
            }
        })
    }
}

impl fmt::Display for ForgeRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ForgeRecipe::Thm1 { alpha, beta } => write!(f, "thm1:alpha={alpha},beta={beta}"),
            ForgeRecipe::Thm3 { eps } => write!(f, "thm3:eps={eps}"),
            ForgeRecipe::Cor3 { k, eps } => write!(f, "cor3:k={k},eps={eps}"),
            ForgeRecipe::Thm4 { n, gamma, beta: Some(b) } => write!(f, "thm4:n={n},gamma={gamma},beta={b}"),
            ForgeRecipe::Thm4 { n, gamma, beta: None } => write!(f, "thm4:n={n},gamma={gamma}"),
            ForgeRecipe::Random(s) => {
                write!(f, "random:n={},m={},T={},", s.n, s.m, s.budget_cap)?;
                match s.dist {
                    ValueDist::LogNormal { mu, sigma } => write!(f, "dist=lognormal,mu={mu},sigma={sigma}")?,
                    ValueDist::Uniform { lo, hi } => write!(f, "dist=uniform,lo={lo},hi={hi}")?,
                }
                write!(f, ",sparsity={},seed={}", s.sparsity, s.seed)
            }
        }
    }
}

fn csv_records(text: &str, header: [&str; 3]) -> Result<Vec<(String, String, f64)>> {
    let mut reader = csv::ReaderBuilder::new().quoting(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| Error::MalformedCsv(e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::MalformedCsv(format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::MalformedCsv(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let x: f64 = rec[2]
            .parse()
            .ok()
            .filter(|x: &f64| !x.is_nan())
            .ok_or_else(|| Error::MalformedCsv(format!("row {}: {:?} is not a number", line + 1, &rec[2])))?;
        out.push((rec[0].to_string(), rec[1].to_string(), x));
    }
    if out.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    Ok(out)
}

/// Index of each distinct label, in order of first appearance.
fn first_seen<'a>(labels: impl Iterator<Item = &'a str>) -> (Vec<String>, HashMap<String, usize>) {
    let mut order = Vec::new();
    let mut index = HashMap::new();
    for l in labels {
        if !index.contains_key(l) {
            index.insert(l.to_string(), order.len());
            order.push(l.to_string());
        }
    }
    (order, index)
}

/// `agent,item,count` rows; `v_ij = value_scale * count`, duplicate pairs summed.
pub fn ingest_category_counts(csv_text: &str, value_scale: f64) -> Result<Instance> {
    positive("value_scale", value_scale)?;
    let rows = csv_records(csv_text, ["agent", "item", "count"])?;
    for (a, i, c) in &rows {
        if *c < 0.0 || !c.is_finite() {
            return Err(Error::NegativeCount { agent: a.clone(), item: i.clone(), count: *c });
        }
    }
    let (agents, ai) = first_seen(rows.iter().map(|r| r.0.as_str()));
    let (items, ii) = first_seen(rows.iter().map(|r| r.1.as_str()));
    let mut values = vec![vec![0.0; items.len()]; agents.len()];
    for (a, i, c) in &rows {
        values[ai[a]][ii[i]] += c;
    }
    for row in values.iter_mut() {
        row.iter_mut().for_each(|v| *v *= value_scale);
    }
    Instance::new(values, None)?.with_labels(agents, items)
}

/// `advertiser,ad,bid` rows. Keeps the first `max_items` distinct ads and the
/// `max_agents` advertisers with positive bids on the most of them (ties by first
/// appearance, selected advertisers kept in first-appearance order). The last
/// bid on a pair wins; missing pairs are 0.
pub fn ingest_bid_log(csv_text: &str, max_items: usize, max_agents: usize) -> Result<Instance> {
    if max_items == 0 || max_agents == 0 {
        return Err(bad("max_items and max_agents must be at least 1"));
    }
    let rows = csv_records(csv_text, ["advertiser", "ad", "bid"])?;
    for (a, d, b) in &rows {
        if *b < 0.0 || !b.is_finite() {
            return Err(Error::NegativeBid { advertiser: a.clone(), ad: d.clone(), bid: *b });
        }
    }
    let (mut ads, _) = first_seen(rows.iter().map(|r| r.1.as_str()));
    ads.truncate(max_items);
    let ad_index: HashMap<&str, usize> = ads.iter().enumerate().map(|(k, a)| (a.as_str(), k)).collect();
    let (advertisers, adv_index) = first_seen(rows.iter().map(|r| r.0.as_str()));
    let mut bids = vec![vec![0.0; ads.len()]; advertisers.len()];
    for (a, d, b) in &rows {
        if let Some(&j) = ad_index.get(d.as_str()) {
            bids[adv_index[a]][j] = *b;
        }
    }
    let mut ranked: Vec<usize> = (0..advertisers.len()).collect();
    let coverage = |i: usize| bids[i].iter().filter(|&&b| b > 0.0).count();
    ranked.sort_by(|&a, &b| coverage(b).cmp(&coverage(a)).then(a.cmp(&b)));
    ranked.truncate(max_agents);
    ranked.sort_unstable();
    let values = ranked.iter().map(|&i| bids[i].clone()).collect();
    let labels = ranked.iter().map(|&i| advertisers[i].clone()).collect();
    Instance::new(values, None)?.with_labels(labels, ads)
}
