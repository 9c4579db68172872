//! The exploration rule: visit areas in decreasing order of expected return.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::belief::{belief_unoccupied, BeliefError, StationaryProfile};
use crate::model::{AreaId, BeliefRecord, CityConfig, OcgState};

/// `u - c / q`: revenue net of the expected collision cost, where `1 / q` is
/// the expected number of attempts before finding the area free. A belief of
/// zero gives negative infinity.
pub fn expected_return(revenue: f64, cost: f64, q: f64) -> f64 {
    if q <= 0.0 {
        f64::NEG_INFINITY
    } else {
        revenue - cost / q
    }
}

/// Areas a group will try on an excursion starting at `now`, best first.
///
/// Areas whose expected return is not positive are left out, so the list can
/// be empty. Equal returns keep the lower (more lucrative) area first.
pub fn exploration_order(
    ocg: &OcgState,
    cfg: &CityConfig,
    profile: &StationaryProfile,
    now: f64,
) -> Result<Vec<AreaId>, BeliefError> {
    let mut order = Vec::with_capacity(cfg.n_areas());
    let mut scratch = Vec::with_capacity(cfg.n_areas());
    rank_areas(&ocg.beliefs, cfg, profile, now, &mut scratch, &mut order)?;
    Ok(order)
}

/// Allocation-free core of [`exploration_order`], used by the engine.
pub(crate) fn rank_areas(
    beliefs: &[BeliefRecord],
    cfg: &CityConfig,
    profile: &StationaryProfile,
    now: f64,
    scratch: &mut Vec<(f64, AreaId)>,
    order: &mut Vec<AreaId>,
) -> Result<(), BeliefError> {
    scratch.clear();
    order.clear();
    for (area, (record, &p)) in cfg.areas.iter().zip(beliefs.iter().zip(&profile.p)) {
        let q = belief_unoccupied(record, p, now)?;
        let value = expected_return(area.revenue, cfg.collision_cost, q);
        if value > 0.0 {
            scratch.push((value, area.area_id));
        }
    }
    scratch.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    order.extend(scratch.iter().map(|&(_, area)| area));
    Ok(())
}
