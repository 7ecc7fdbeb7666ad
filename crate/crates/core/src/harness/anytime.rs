use crate::analysis::RegretTrace;
use crate::coding::CodeScheme;
use crate::ec3::rules::{block_len, explore_unit, id_width};
use crate::ec3::{run_ec3, RunOptions};
use crate::env::BanditInstance;

use super::HarnessError;

/// One restart of the doubling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Episode {
    pub start: u64,
    /// Slots actually played (the last episode may be cut short).
    pub len: u64,
    /// Horizon the players plan for.
    pub horizon: u64,
}

/// Episodes `T₀·2^i` laid end to end until `stop`, the last one truncated.
pub fn doubling_schedule(t0: u64, stop: u64) -> Vec<Episode> {
    let mut episodes = Vec::new();
    let mut start = 0;
    let mut horizon = t0.max(1);
    while start < stop {
        let len = horizon.min(stop - start);
        episodes.push(Episode { start, len, horizon });
        start += len;
        horizon = horizon.saturating_mul(2);
    }
    episodes
}

/// Slots needed to finish initialization and one exploration phase when planning for
/// `horizon` with `scheme`.
pub fn min_feasible_horizon(instance: &BanditInstance, scheme: &CodeScheme, horizon: u64) -> u64 {
    let (k, m) = (instance.num_arms() as u64, instance.num_players() as u64);
    let init = (k - 1) * scheme.code_length(1) as u64 + (m - 1) * scheme.code_length(id_width(instance.num_arms())) as u64;
    init + k * block_len(1, explore_unit(instance.sigma(), horizon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub episode: Episode,
    pub converged: bool,
    /// Global slot at which every player was exploiting.
    pub exploit_start: Option<u64>,
    pub messages: u64,
    pub decode_errors: u64,
}

#[derive(Debug, Clone)]
pub struct AnytimeResult {
    /// Concatenated trace over all episodes, in global slots.
    pub trace: RegretTrace,
    pub episodes: Vec<EpisodeOutcome>,
}

/// Runs EC3 restarts on the doubling schedule from `t0` up to `stop`.
///
/// `scheme_for` builds the code for a planning horizon, `options` the run options
/// around it; the window fields of the options are overwritten per episode.
pub fn run_anytime<S, O>(
    instance: &BanditInstance,
    t0: u64,
    stop: u64,
    scheme_for: S,
    options: O,
) -> Result<AnytimeResult, HarnessError>
where
    S: Fn(u64) -> Result<CodeScheme, HarnessError>,
    O: Fn(CodeScheme) -> RunOptions,
{
    let first = scheme_for(t0)?;
    let min = min_feasible_horizon(instance, &first, t0);
    if t0 < min {
        return Err(HarnessError::InitialHorizon { t0, min });
    }

    let mut trace = RegretTrace::default();
    let mut outcomes = Vec::new();
    let (mut pseudo, mut realized, mut collisions, mut errors) = (0.0, 0.0, 0u64, 0u64);
    for ep in doubling_schedule(t0, stop) {
        let opts = RunOptions {
            planning_horizon: Some(ep.horizon),
            start_slot: ep.start,
            slots: Some(ep.len),
            ..options(scheme_for(ep.horizon)?)
        };
        trace.stride = opts.stride;
        let run = run_ec3(instance, &opts)?;
        let part = &run.trace;
        let skip = usize::from(!trace.t.is_empty());
        for i in skip..part.t.len() {
            trace.t.push(ep.start + part.t[i]);
            trace.pseudo.push(pseudo + part.pseudo[i]);
            trace.realized.push(realized + part.realized[i]);
            trace.collisions.push(collisions + part.collisions[i]);
            trace.decode_errors.push(errors + part.decode_errors[i]);
        }
        trace.events.extend(part.events.iter().map(|e| {
            let mut e = e.clone();
            e.slot += ep.start;
            e
        }));
        pseudo += part.final_pseudo();
        realized += part.final_realized();
        collisions += part.final_collisions();
        errors += part.final_decode_errors();
        outcomes.push(EpisodeOutcome {
            episode: ep,
            converged: run.converged,
            exploit_start: run.exploit_start.map(|s| ep.start + s),
            messages: run.messages,
            decode_errors: run.decode_errors,
        });
    }
    Ok(AnytimeResult {
        trace,
        episodes: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let lens: Vec<u64> = doubling_schedule(1000, 5000).iter().map(|e| e.len).collect();
        assert_eq!(lens, vec![1000, 2000, 2000]);
        assert_eq!(doubling_schedule(1000, 5000)[2].horizon, 4000);
        assert_eq!(
            doubling_schedule(1000, 600),
            vec![Episode {
                start: 0,
                len: 600,
                horizon: 1000
            }]
        );
        assert!(doubling_schedule(10, 0).is_empty());
    }
}
