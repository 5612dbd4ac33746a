use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{
    export_permitted, Announcement, LearnedRel, PolicyHooks, PreferenceOrder, Rib, RibEntry,
    Route, RoutingError,
};
use crate::prefix::Prefix;
use crate::topology::{Relation, Topology};

// Below this many dirty ASes a round is evaluated on the calling thread.
const PARALLEL_ROUND_THRESHOLD: usize = 2048;

/// Runs every prefix to its fixpoint and collects the resulting RIB.
///
/// Rounds are synchronous: each round reads only the previous round's best
/// routes, so the result does not depend on evaluation order or on the
/// number of worker threads.
pub fn propagate<H: PolicyHooks>(
    topo: &Topology,
    announcements: &[Announcement],
    hooks: &H,
) -> Result<Rib, RoutingError> {
    let mut by_prefix: BTreeMap<Prefix, Vec<&Announcement>> = BTreeMap::new();
    for ann in announcements {
        let speaker = *ann.as_path.first().ok_or(RoutingError::EmptyPath(ann.prefix))?;
        if !topo.contains(speaker) {
            return Err(RoutingError::UnknownAsn(speaker));
        }
        by_prefix.entry(ann.prefix).or_default().push(ann);
    }
    for (prefix, anns) in &by_prefix {
        let mut speakers = BTreeSet::new();
        for ann in anns {
            if !speakers.insert(ann.speaker()) {
                return Err(RoutingError::DuplicateOrigination {
                    asn: ann.speaker(),
                    prefix: *prefix,
                });
            }
        }
    }

    let prefs: Vec<PreferenceOrder> = topo.asns().iter().map(|&a| hooks.preference(a)).collect();
    let results: Vec<_> = by_prefix
        .par_iter()
        .map(|(prefix, anns)| (*prefix, PrefixRun::new(topo, hooks, &prefs, anns).run()))
        .collect();

    let mut rib = Rib::default();
    let mut failed = Vec::new();
    let mut max_rounds = 0;
    for (prefix, result) in results {
        match result {
            Ok(state) => {
                for (i, entry) in state.into_iter().enumerate() {
                    if let Some(entry) = entry {
                        rib.insert(topo.asn_at(i), prefix, entry);
                    }
                }
            }
            Err(rounds) => {
                failed.push(prefix);
                max_rounds = max_rounds.max(rounds);
            }
        }
    }
    if failed.is_empty() {
        Ok(rib)
    } else {
        Err(RoutingError::NonConvergence {
            rounds: max_rounds,
            prefixes: failed,
        })
    }
}

struct PrefixRun<'a, H> {
    topo: &'a Topology,
    hooks: &'a H,
    prefs: &'a [PreferenceOrder],
    local: Vec<Option<Route>>,
    best: Vec<Option<Route>>,
    candidates: Vec<Vec<Route>>,
}

impl<'a, H: PolicyHooks> PrefixRun<'a, H> {
    fn new(
        topo: &'a Topology,
        hooks: &'a H,
        prefs: &'a [PreferenceOrder],
        anns: &[&Announcement],
    ) -> Self {
        let n = topo.len();
        let mut local = vec![None; n];
        for ann in anns {
            let i = topo.idx(ann.speaker()).expect("checked by caller");
            let route = ann.to_route();
            local[i] = if ann.injected {
                Some(route)
            } else {
                hooks.originate(ann.speaker(), route)
            };
        }
        let candidates = local.iter().map(|r| r.iter().cloned().collect()).collect();
        PrefixRun {
            topo,
            hooks,
            prefs,
            best: local.clone(),
            local,
            candidates,
        }
    }

    /// Returns per-AS entries, or the round count on non-convergence.
    fn run(mut self) -> Result<Vec<Option<RibEntry>>, usize> {
        let cap = 2 * self.topo.len() + 10;
        let seeds: Vec<usize> = (0..self.best.len()).filter(|&i| self.best[i].is_some()).collect();
        let mut dirty = self.neighbors_of(&seeds);
        let mut rounds = 0;
        while !dirty.is_empty() {
            rounds += 1;
            if rounds > cap {
                return Err(rounds);
            }
            let updates: Vec<(usize, Vec<Route>)> = if dirty.len() >= PARALLEL_ROUND_THRESHOLD {
                dirty.par_iter().map(|&i| (i, self.collect(i))).collect()
            } else {
                dirty.iter().map(|&i| (i, self.collect(i))).collect()
            };
            let mut changed = Vec::new();
            for (i, cands) in updates {
                let new_best = self.prefs[i].select(&cands).cloned();
                if new_best != self.best[i] {
                    self.best[i] = new_best;
                    changed.push(i);
                }
                self.candidates[i] = cands;
            }
            dirty = self.neighbors_of(&changed);
        }
        Ok(self
            .best
            .into_iter()
            .zip(self.candidates)
            .map(|(best, candidates)| best.map(|best| RibEntry { best, candidates }))
            .collect())
    }

    fn neighbors_of(&self, set: &[usize]) -> Vec<usize> {
        let mut out: BTreeSet<usize> = BTreeSet::new();
        for &i in set {
            out.extend(self.topo.neighbors_idx(i).map(|(j, _)| j));
        }
        out.into_iter().collect()
    }

    /// Candidate routes at `i` given the current best routes of its
    /// neighbors.
    fn collect(&self, i: usize) -> Vec<Route> {
        let at = self.topo.asn_at(i);
        let mut cands: Vec<Route> = self.local[i].iter().cloned().collect();
        let mut learned: Vec<Route> = Vec::new();
        for (j, rel) in self.topo.neighbors_idx(i) {
            let Some(held) = &self.best[j] else { continue };
            let from = self.topo.asn_at(j);
            // What `at` is to the exporting neighbor.
            let rel_to_sender = match rel {
                Relation::Customer => Relation::Provider,
                Relation::Peer => Relation::Peer,
                Relation::Provider => Relation::Customer,
            };
            let permitted = export_permitted(held.learned_rel, rel_to_sender);
            let Some(sent) = self.hooks.export(from, at, rel_to_sender, held, permitted) else {
                continue;
            };
            let mut as_path = Vec::with_capacity(sent.as_path.len() + 1);
            if sent.learned_rel != LearnedRel::Origin {
                as_path.push(from);
            }
            as_path.extend_from_slice(&sent.as_path);
            if as_path.contains(&at) {
                continue;
            }
            let route = Route {
                prefix: sent.prefix,
                as_path,
                communities: sent.communities,
                learned_from: Some(from),
                learned_rel: rel.into(),
            };
            if let Some(route) = self.hooks.import(at, from, rel, route) {
                learned.push(route);
            }
        }
        learned.sort_by_key(|r| r.learned_from);
        cands.extend(learned);
        cands
    }
}
