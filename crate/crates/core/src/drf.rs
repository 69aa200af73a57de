//! Dominant shares: the actual share an allocation gives each application and
//! the theoretical weighted-DRF share it would get from progressive filling.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{
    containers_of, total_capacity, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec,
    Rational, ResourceVector,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DrfError {
    #[error("application `{0}` has no dominant resource (all-zero demand)")]
    NoDominantResource(AppId),
}

/// Whether application weights scale the water-fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrfMode {
    #[default]
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareRecord {
    pub app_id: AppId,
    pub dominant_resource: usize,
    pub actual: Rational,
    pub theoretical: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareReport {
    pub records: Vec<ShareRecord>,
}

fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Index of the resource on which one container of `demand` takes the
/// largest fraction of the aggregate capacity. Ties go to the lowest index.
pub fn dominant_resource(demand: &ResourceVector, totals: &ResourceVector) -> Option<usize> {
    let mut best: Option<(usize, Rational)> = None;
    for k in 0..demand.len() {
        if demand.get(k) == 0 {
            continue;
        }
        let share = ratio(demand.get(k), totals.get(k));
        match &best {
            Some((_, b)) if &share <= b => {}
            _ => best = Some((k, share)),
        }
    }
    best.map(|(k, _)| k)
}

/// Dominant share of a single container: `max_k d_k / C_k`.
pub fn container_share(demand: &ResourceVector, totals: &ResourceVector) -> Option<Rational> {
    dominant_resource(demand, totals).map(|k| ratio(demand.get(k), totals.get(k)))
}

/// `s_i = max_k d_{i,k} * n_i / C_k` for the containers `alloc` gives `app`.
pub fn actual_dominant_share(
    app: &ApplicationSpec,
    alloc: &AllocationMatrix,
    cluster: &ClusterSpec,
) -> Result<Rational, DrfError> {
    let totals = total_capacity(cluster);
    let per = container_share(&app.demand, &totals)
        .ok_or_else(|| DrfError::NoDominantResource(app.id.clone()))?;
    Ok(per * BigInt::from(containers_of(alloc, &app.id)))
}

/// Weighted progressive filling over the aggregate capacity vector at
/// continuous granularity.
///
/// Every unfrozen application grows its dominant share in proportion to its
/// weight. An application freezes when it reaches `n_max` containers or when
/// a resource it consumes is exhausted; applications that do not consume the
/// exhausted resource keep growing. Each round solves exactly for the level at
/// which the next freeze happens.
pub fn theoretical_shares(
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    mode: DrfMode,
) -> BTreeMap<AppId, Rational> {
    let totals = total_capacity(cluster);
    let m = totals.len();

    struct Filler {
        weight: Rational,
        cap: Rational,
        // fraction of resource k consumed per unit of dominant share
        profile: Vec<Rational>,
    }

    let fillers: Vec<Option<Filler>> = apps
        .iter()
        .map(|a| {
            let per = container_share(&a.demand, &totals)?;
            let profile = (0..m)
                .map(|k| ratio(a.demand.get(k), totals.get(k)) / &per)
                .collect();
            let weight = match mode {
                DrfMode::Weighted => Rational::from_integer(a.weight.into()),
                DrfMode::Unweighted => Rational::one(),
            };
            Some(Filler {
                weight,
                cap: per * BigInt::from(a.n_max),
                profile,
            })
        })
        .collect();

    let mut shares: Vec<Option<Rational>> = fillers
        .iter()
        .map(|f| if f.is_none() { Some(Rational::zero()) } else { None })
        .collect();
    let mut frozen_use = vec![Rational::zero(); m];

    loop {
        let active: Vec<usize> = (0..apps.len()).filter(|&i| shares[i].is_none()).collect();
        if active.is_empty() {
            break;
        }
        let mut rate = vec![Rational::zero(); m];
        for &i in &active {
            let f = fillers[i].as_ref().unwrap();
            for (k, r) in rate.iter_mut().enumerate() {
                *r += &f.weight * &f.profile[k];
            }
        }
        let resource_level = |k: usize| -> Option<Rational> {
            (!rate[k].is_zero()).then(|| (Rational::one() - &frozen_use[k]) / &rate[k])
        };
        let mut level: Option<Rational> = None;
        let mut consider = |v: Rational| {
            if level.as_ref().is_none_or(|l| &v < l) {
                level = Some(v);
            }
        };
        for k in 0..m {
            if let Some(v) = resource_level(k) {
                consider(v);
            }
        }
        for &i in &active {
            let f = fillers[i].as_ref().unwrap();
            consider(&f.cap / &f.weight);
        }
        let level = level.expect("every active app consumes its dominant resource");

        let exhausted: Vec<usize> = (0..m)
            .filter(|&k| resource_level(k).as_ref() == Some(&level))
            .collect();
        for &i in &active {
            let f = fillers[i].as_ref().unwrap();
            let capped = f.cap.clone() / &f.weight == level;
            let blocked = exhausted.iter().any(|&k| !f.profile[k].is_zero());
            if capped || blocked {
                let s = &f.weight * &level;
                for (k, u) in frozen_use.iter_mut().enumerate() {
                    *u += &s * &f.profile[k];
                }
                shares[i] = Some(s);
            }
        }
    }

    apps.iter()
        .zip(shares)
        .map(|(a, s)| (a.id.clone(), s.unwrap()))
        .collect()
}

/// Actual and theoretical dominant shares for every application in `apps`.
pub fn share_report(
    apps: &[ApplicationSpec],
    alloc: &AllocationMatrix,
    cluster: &ClusterSpec,
    mode: DrfMode,
) -> Result<ShareReport, DrfError> {
    let totals = total_capacity(cluster);
    let hat = theoretical_shares(apps, cluster, mode);
    let records = apps
        .iter()
        .map(|a| {
            let dominant = dominant_resource(&a.demand, &totals)
                .ok_or_else(|| DrfError::NoDominantResource(a.id.clone()))?;
            Ok(ShareRecord {
                app_id: a.id.clone(),
                dominant_resource: dominant,
                actual: actual_dominant_share(a, alloc, cluster)?,
                theoretical: hat[&a.id].clone(),
            })
        })
        .collect::<Result<_, DrfError>>()?;
    Ok(ShareReport { records })
}
