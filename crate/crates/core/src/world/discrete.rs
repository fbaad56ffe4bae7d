use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};

/// Largest joint state space the enumeration accepts.
pub const MAX_STATES: usize = 1_000_000;

const TABLE_TOL: f64 = 1e-12;

/// A finite world over `items` items with features in `0..alphabet_size`.
///
/// Joint feature tables are indexed base `alphabet_size` with item 0 as the
/// least significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    pub name: String,
    pub alphabet_size: usize,
    pub items: usize,
    pub queries: Vec<QueryTables>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTables {
    /// `P(x⃗ | q)`.
    pub marginal: Vec<f64>,
    /// One entry per item: `P(E_j | q)` and `P(x⃗ | E_j, q)`.
    pub events: Vec<EventTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub prior: f64,
    pub conditional: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub world: String,
    pub max_deviation: f64,
    pub worst_query: usize,
    pub worst_item: usize,
    pub states_checked: usize,
}

fn product_table(alphabet: usize, per_item: &[Vec<f64>]) -> Vec<f64> {
    let states = alphabet.pow(per_item.len() as u32);
    (0..states)
        .map(|s| {
            let mut rest = s;
            let mut p = 1.0;
            for m in per_item {
                p *= m[rest % alphabet];
                rest /= alphabet;
            }
            p
        })
        .collect()
}

impl DiscreteWorld {
    pub fn states(&self) -> Result<usize> {
        let states = self
            .alphabet_size
            .checked_pow(self.items as u32)
            .filter(|&s| s <= MAX_STATES)
            .ok_or_else(|| {
                LtcsError::Resource(format!(
                    "{}^{} joint states exceeds the enumeration limit of {MAX_STATES}",
                    self.alphabet_size, self.items
                ))
            })?;
        Ok(states)
    }

    /// World whose marginal and event-conditional tables are products of
    /// per-item distributions, i.e. items are independent given the query and
    /// given each booking event.
    ///
    /// `queries[i] = (marginals, events)` where `marginals[l]` is item `l`'s
    /// distribution and `events[j] = (prior, per-item conditionals)`.
    pub fn product(
        name: &str,
        alphabet_size: usize,
        queries: &[(Vec<Vec<f64>>, Vec<(f64, Vec<Vec<f64>>)>)],
    ) -> Result<Self> {
        let items = queries.first().map(|q| q.0.len()).unwrap_or(0);
        let mut world = DiscreteWorld { name: name.to_string(), alphabet_size, items, queries: Vec::new() };
        world.states()?;
        for (marginals, events) in queries {
            if marginals.len() != items || marginals.iter().any(|m| m.len() != alphabet_size) {
                return Err(LtcsError::InvalidArgument(format!("{name}: per-item marginal tables have the wrong shape")));
            }
            let events = events
                .iter()
                .map(|(prior, cond)| {
                    if cond.len() != items || cond.iter().any(|m| m.len() != alphabet_size) {
                        return Err(LtcsError::InvalidArgument(format!(
                            "{name}: per-item conditional tables have the wrong shape"
                        )));
                    }
                    Ok(EventTable { prior: *prior, conditional: product_table(alphabet_size, cond) })
                })
                .collect::<Result<Vec<_>>>()?;
            world.queries.push(QueryTables { marginal: product_table(alphabet_size, marginals), events });
        }
        world.validate()?;
        Ok(world)
    }

    /// Checks table shapes, normalization, and that the booking events are
    /// mutually exclusive sub-events of the marginal:
    /// `Σ_j P(E_j) P(x⃗|E_j) <= P(x⃗)` for every `x⃗`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LtcsError::InvalidArgument(format!("{}: {m}", self.name)));
        if self.alphabet_size < 1 || self.items < 1 {
            return bad("alphabet_size and items must be >= 1".into());
        }
        if self.queries.is_empty() {
            return bad("world has no queries".into());
        }
        let states = self.states()?;
        let normalized = |t: &[f64]| {
            t.len() == states
                && t.iter().all(|p| p.is_finite() && *p >= 0.0)
                && (t.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        for (qi, q) in self.queries.iter().enumerate() {
            if !normalized(&q.marginal) {
                return bad(format!("query {qi}: marginal table is not a distribution over {states} states"));
            }
            if q.events.len() != self.items {
                return bad(format!("query {qi}: expected {} event tables, got {}", self.items, q.events.len()));
            }
            for (j, e) in q.events.iter().enumerate() {
                if !(e.prior > 0.0 && e.prior <= 1.0) {
                    return bad(format!("query {qi}, item {j}: prior {} is not in (0, 1]", e.prior));
                }
                if !normalized(&e.conditional) {
                    return bad(format!("query {qi}, item {j}: conditional table is not a distribution"));
                }
            }
            for s in 0..states {
                let booked: f64 = q.events.iter().map(|e| e.prior * e.conditional[s]).sum();
                if booked > q.marginal[s] * (1.0 + 1e-9) + TABLE_TOL {
                    return bad(format!("query {qi}, state {s}: booking mass {booked} exceeds the marginal"));
                }
            }
        }
        Ok(())
    }
}

/// Largest `|ratio - 1|` over queries, focal items and feature states, where
///
/// `ratio = P(E_j | x_j, C_j) · P(E_j) / (P(E_j | x_j) · P(E_j | C_j))`
///
/// and `C_j` is the features of the other items. Every probability is
/// computed by summing the joint tables.
pub fn bayes_factorization_check(world: &DiscreteWorld) -> Result<FactorizationReport> {
    world.validate()?;
    let a = world.alphabet_size;
    let states = world.states()?;
    let mut report = FactorizationReport {
        world: world.name.clone(),
        max_deviation: 0.0,
        worst_query: 0,
        worst_item: 0,
        states_checked: 0,
    };
    for (qi, q) in world.queries.iter().enumerate() {
        for (j, ev) in q.events.iter().enumerate() {
            let stride = a.pow(j as u32);
            let digit = |s: usize| (s / stride) % a;
            let context = |s: usize| s - digit(s) * stride;

            // Sums of P(x⃗) and P(x⃗, E_j) grouped by the focal item's feature
            // and by the context.
            let mut own = vec![(0.0, 0.0); a];
            let mut ctx = vec![(0.0, 0.0); states];
            for s in 0..states {
                let joint_e = ev.prior * ev.conditional[s];
                let d = digit(s);
                own[d].0 += q.marginal[s];
                own[d].1 += joint_e;
                let c = context(s);
                ctx[c].0 += q.marginal[s];
                ctx[c].1 += joint_e;
            }
            for s in 0..states {
                if q.marginal[s] <= 0.0 {
                    continue;
                }
                let (om, oe) = own[digit(s)];
                let (cm, ce) = ctx[context(s)];
                let p_own = oe / om;
                let p_ctx = ce / cm;
                if p_own <= 0.0 || p_ctx <= 0.0 {
                    continue;
                }
                let p_full = ev.prior * ev.conditional[s] / q.marginal[s];
                let ratio = p_full * ev.prior / (p_own * p_ctx);
                let dev = (ratio - 1.0).abs();
                report.states_checked += 1;
                if dev > report.max_deviation || !dev.is_finite() {
                    report.max_deviation = dev;
                    report.worst_query = qi;
                    report.worst_item = j;
                }
            }
        }
    }
    Ok(report)
}

fn tilt(m: &[f64], t: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = m.iter().zip(t).map(|(p, w)| p * w).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / z).collect()
}

/// Product world where booking item `j` tilts item `j`'s own feature by
/// `own` and every other item's by `other`, with a prior small enough to
/// stay inside the marginal.
fn tilted_query(marginals: Vec<Vec<f64>>, own: &[f64], other: &[f64], prior: f64) -> (Vec<Vec<f64>>, Vec<(f64, Vec<Vec<f64>>)>) {
    let k = marginals.len();
    let events = (0..k)
        .map(|j| {
            let cond = (0..k)
                .map(|l| tilt(&marginals[l], if l == j { own } else { other }))
                .collect();
            (prior, cond)
        })
        .collect();
    (marginals, events)
}

fn correlated_world() -> DiscreteWorld {
    // Items copy each other's feature half the time, and the booking event
    // keeps a product form, so the factorization cannot hold.
    let a = 2;
    let m = [0.6, 0.4];
    let marginal: Vec<f64> = (0..4)
        .map(|s: usize| {
            let (x0, x1) = (s % a, s / a);
            0.5 * m[x0] * m[x1] + if x0 == x1 { 0.5 * m[x0] } else { 0.0 }
        })
        .collect();
    let cond = |p: [f64; 2], r: [f64; 2]| product_table(a, &[p.to_vec(), r.to_vec()]);
    DiscreteWorld {
        name: "correlated-binary-k2".into(),
        alphabet_size: a,
        items: 2,
        queries: vec![QueryTables {
            marginal,
            events: vec![
                EventTable { prior: 0.1, conditional: cond([0.3, 0.7], [0.5, 0.5]) },
                EventTable { prior: 0.1, conditional: cond([0.5, 0.5], [0.3, 0.7]) },
            ],
        }],
    }
}

/// Worlds shipped with the check. The last one violates conditional
/// independence; the others satisfy it.
pub fn bundled_worlds() -> Vec<DiscreteWorld> {
    let build = |name: &str, a: usize, queries: Vec<_>| DiscreteWorld::product(name, a, &queries).expect("bundled world");
    let up2 = [0.7, 1.4];
    let down2 = [1.2, 0.9];
    let up3 = [0.5, 1.0, 1.6];
    let flat3 = [1.1, 1.0, 0.9];
    vec![
        build(
            "prior-only-binary-k2",
            2,
            vec![tilted_query(vec![vec![0.6, 0.4], vec![0.3, 0.7]], &[1.0, 1.0], &[1.0, 1.0], 0.3)],
        ),
        build(
            "binary-k2",
            2,
            vec![tilted_query(vec![vec![0.6, 0.4], vec![0.3, 0.7]], &up2, &down2, 0.15)],
        ),
        build(
            "ternary-k3",
            3,
            vec![tilted_query(vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2], vec![0.1, 0.3, 0.6]], &up3, &flat3, 0.08)],
        ),
        build(
            "binary-k4-two-queries",
            2,
            vec![
                tilted_query(vec![vec![0.5, 0.5]; 4], &up2, &down2, 0.08),
                tilted_query(
                    vec![vec![0.8, 0.2], vec![0.3, 0.7], vec![0.6, 0.4], vec![0.45, 0.55]],
                    &[1.3, 0.6],
                    &[0.9, 1.1],
                    0.05,
                ),
            ],
        ),
        correlated_world(),
    ]
}
