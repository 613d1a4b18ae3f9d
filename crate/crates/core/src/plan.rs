//! Data-preparation plans: stratified subsets and randomized compression levels.
//!
//! A compression level is an abstract knob where larger means smaller files
//! (a perceptual distance target, a quality factor inverted, ...). Each item
//! carries its own size model, so no codec is needed here.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Bytes as a function of compression level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SizeModel {
    /// `(level, bytes)` knots with increasing levels; linear in between,
    /// constant beyond the ends.
    Table(Vec<(f64, f64)>),
    /// `s0 · 2^(−decay · level)`.
    Exponential { s0: f64, decay: f64 },
}

impl SizeModel {
    pub fn bytes_at(&self, level: f64) -> f64 {
        match self {
            SizeModel::Exponential { s0, decay } => s0 * math::powf(2.0, -decay * level),
            SizeModel::Table(knots) => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if level <= first.0 {
                    return first.1;
                }
                if level >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= level);
                let ((l0, b0), (l1, b1)) = (knots[i - 1], knots[i]);
                b0 + (b1 - b0) * (level - l0) / (l1 - l0)
            }
        }
    }

    fn validate(&self, id: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::DomainError(alloc::format!("item `{id}`: {why}")));
        match self {
            SizeModel::Exponential { s0, decay } => {
                if !(s0.is_finite() && *s0 > 0.0 && decay.is_finite() && *decay >= 0.0) {
                    return bad("exponential size model needs s0 > 0 and decay >= 0");
                }
            }
            SizeModel::Table(knots) => {
                if knots.is_empty() {
                    return bad("empty size table");
                }
                if knots.iter().any(|(l, b)| !l.is_finite() || !b.is_finite() || *b < 0.0) {
                    return bad("size table entries must be finite and non-negative");
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return bad("size table levels must increase");
                    }
                    if w[1].1 > w[0].1 {
                        return bad("size must not grow with the compression level");
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub class_label: Option<String>,
    pub size: SizeModel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    items: Vec<Item>,
}

impl ItemCatalog {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            item.size.validate(&item.id)?;
            if seen.insert(item.id.as_str(), i).is_some() {
                return Err(Error::DomainError(alloc::format!("duplicate item id `{}`", item.id)));
            }
        }
        Ok(ItemCatalog { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|item| item.id == id)
    }
}

/// Draws `round(fraction · total)` items with each class represented in
/// proportion. Class quotas are floored and the leftover slots go to the
/// largest remainders (ties to the lexicographically smaller class).
/// The returned ids are sorted.
pub fn stratified_subset<R: Rng + ?Sized>(catalog: &ItemCatalog, fraction: f64, rng: &mut R) -> Result<Vec<String>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::DomainError(alloc::format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut classes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for item in &catalog.items {
        let label = item.class_label.as_deref().ok_or_else(|| Error::MissingLabels(item.id.clone()))?;
        classes.entry(label).or_default().push(&item.id);
    }

    let target = math::round(fraction * catalog.len() as f64) as usize;
    let mut quotas: Vec<(&str, usize, f64)> = classes
        .iter()
        .map(|(label, ids)| {
            let exact = fraction * ids.len() as f64;
            let floor = math::floor(exact);
            (*label, floor as usize, exact - floor)
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // stable sort keeps the class-name order among equal remainders
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }

    let mut chosen = Vec::with_capacity(target);
    for (label, quota, _) in quotas {
        let mut ids = classes[label].clone();
        ids.sort_unstable();
        ids.shuffle(rng);
        chosen.extend(ids.into_iter().take(quota).map(String::from));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Level of the item at `rank` (0-based) out of `k`, spaced uniformly over
/// `[level_min, level_max]`.
pub fn rank_level(rank: usize, k: usize, level_min: f64, level_max: f64) -> f64 {
    if k < 2 {
        return level_min;
    }
    level_min + rank as f64 / (k - 1) as f64 * (level_max - level_min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: String,
    pub level: f64,
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    /// In rank order: levels are non-decreasing along the list.
    pub assignments: Vec<Assignment>,
    pub level_min: f64,
    pub level_max: f64,
    pub total_bytes: f64,
    pub target_bytes: f64,
}

impl CompressionPlan {
    pub fn relative_gap(&self) -> f64 {
        (self.total_bytes - self.target_bytes).abs() / self.target_bytes
    }
}

/// Assigns levels to `ranked` items (already in rank order).
pub fn assign_levels(ranked: &[&Item], level_min: f64, level_max: f64) -> Vec<Assignment> {
    let k = ranked.len();
    ranked
        .iter()
        .enumerate()
        .map(|(rank, item)| {
            let level = rank_level(rank, k, level_min, level_max);
            Assignment { id: item.id.clone(), level, bytes: item.size.bytes_at(level) }
        })
        .collect()
}

fn total_bytes(ranked: &[&Item], level_min: f64, level_max: f64) -> f64 {
    let k = ranked.len();
    ranked
        .iter()
        .enumerate()
        .map(|(rank, item)| item.size.bytes_at(rank_level(rank, k, level_min, level_max)))
        .sum()
}

/// Relative half-width of the accepted band around the byte budget.
pub const BUDGET_TOLERANCE: f64 = 0.01;
pub const MAX_BISECTION_STEPS: usize = 60;

/// Randomized compression levels under a byte budget.
///
/// The subset is put in id order, shuffled with `rng`, and rank `i` of `k` gets
/// `level_min + i/(k−1)·(level_max − level_min)`. `level_max` is raised from
/// `level_min0` towards `level_max_cap` by bisection until the total lands in
/// the 1% band; if the cap alone is not enough, `level_min` is raised with
/// `level_max` pinned at the cap. When every item already fits at `level_min0`
/// the plan keeps them all there.
pub fn randomized_levels<R: Rng + ?Sized>(
    catalog: &ItemCatalog,
    subset: &[String],
    budget_bytes: f64,
    level_min0: f64,
    level_max_cap: f64,
    rng: &mut R,
) -> Result<CompressionPlan> {
    if !(budget_bytes.is_finite() && budget_bytes > 0.0) {
        return Err(Error::DomainError(alloc::format!("budget must be positive, got {budget_bytes}")));
    }
    if !(level_min0.is_finite() && level_max_cap.is_finite() && level_min0 <= level_max_cap) {
        return Err(Error::DomainError(alloc::format!(
            "level range [{level_min0}, {level_max_cap}] is empty"
        )));
    }
    if subset.len() < 2 {
        return Err(Error::DegenerateSubset(subset.len()));
    }
    let mut ids: Vec<&str> = subset.iter().map(String::as_str).collect();
    ids.sort_unstable();
    let mut ranked: Vec<&Item> = ids
        .iter()
        .map(|id| catalog.get(id).ok_or_else(|| Error::UnknownItem(String::from(*id))))
        .collect::<Result<_>>()?;
    ranked.shuffle(rng);

    let (band_lo, band_hi) = (budget_bytes * (1.0 - BUDGET_TOLERANCE), budget_bytes * (1.0 + BUDGET_TOLERANCE));
    let finish = |level_min: f64, level_max: f64| {
        let assignments = assign_levels(&ranked, level_min, level_max);
        let total_bytes = assignments.iter().map(|a| a.bytes).sum();
        CompressionPlan { assignments, level_min, level_max, total_bytes, target_bytes: budget_bytes }
    };

    if total_bytes(&ranked, level_min0, level_min0) <= band_hi {
        return Ok(finish(level_min0, level_min0));
    }
    let at_cap = total_bytes(&ranked, level_min0, level_max_cap);
    let (vary_min, mut lo, mut hi) = if at_cap <= band_hi {
        (false, level_min0, level_max_cap)
    } else {
        let floor = total_bytes(&ranked, level_max_cap, level_max_cap);
        if floor > band_hi {
            return Err(Error::BudgetInfeasible { budget: budget_bytes, minimum: floor });
        }
        (true, level_min0, level_max_cap)
    };
    let levels = |x: f64| if vary_min { (x, level_max_cap) } else { (level_min0, x) };

    // total is non-increasing in x; lo stays over budget, hi stays at or under
    let mut x = hi;
    let mut total = total_bytes(&ranked, levels(x).0, levels(x).1);
    for _ in 0..MAX_BISECTION_STEPS {
        if total >= band_lo && total <= band_hi {
            break;
        }
        x = 0.5 * (lo + hi);
        total = total_bytes(&ranked, levels(x).0, levels(x).1);
        if total > band_hi {
            lo = x;
        } else {
            hi = x;
        }
    }
    if !(total >= band_lo && total <= band_hi) {
        return Err(Error::PlanNotConverged { total, target: budget_bytes });
    }
    let (level_min, level_max) = levels(x);
    Ok(finish(level_min, level_max))
}
