//! Association block: choose which RRH and BBU serve each user and which user
//! each RRH serves on every sub-carrier, with sensing times and powers fixed.
//!
//! With τ and p fixed the throughput of a cell is a constant `w_{r,k,n}` and the
//! objective is `Σ w β`, so the block is a binary integer program. It is solved
//! exactly by depth-first branch-and-bound over the RRH/sub-carrier pairs: each
//! pair takes one user or stays empty. Branching a user onto a pair binds the
//! user to that RRH (C4, C6). Whether the users bound to each RRH can still be
//! homed on BBUs under C3 and C7 is a small transportation problem, checked by
//! max-flow. The bound adds the best remaining weight of every open pair; C10
//! is checked exactly at leaves and pruned with the same optimistic bound per
//! slice.

use std::collections::VecDeque;
use std::f64::consts::LN_2;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, InfeasibleCause, Result};
use crate::model::{interference_at, sinr_absent, Allocation, ChannelState, NetworkDims, Params};

/// Search limits for the branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssocOptions {
    /// Nodes after which the search stops with the best incumbent.
    pub node_limit: u64,
}

impl Default for AssocOptions {
    fn default() -> Self {
        Self { node_limit: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocSolveResult {
    /// `f_{n,b}` at `n * B + b`.
    pub f: Vec<bool>,
    /// `x_{n,r}` at `n * R + r`.
    pub x: Vec<bool>,
    pub beta: Vec<bool>,
    /// `y_{b,r,n}` at `(b * R + r) * N + n`.
    pub y: Vec<bool>,
    pub objective: f64,
    pub nodes_explored: u64,
    pub proven_optimal: bool,
}

impl AssocSolveResult {
    /// Copy the association variables into `alloc`, leaving τ and p untouched.
    pub fn apply(&self, alloc: &mut Allocation) {
        alloc.bbu_assoc.clone_from(&self.f);
        alloc.rrh_assoc.clone_from(&self.x);
        alloc.beta.clone_from(&self.beta);
        alloc.linkage.clone_from(&self.y);
    }
}

/// `y = f · x` over `(b, r, n)`.
pub fn linearize_c7(dims: &NetworkDims, f: &[bool], x: &[bool]) -> Vec<bool> {
    let (nr, nb, nu) = (dims.num_rrhs, dims.num_bbus, dims.num_users());
    let mut y = vec![false; nb * nr * nu];
    for b in 0..nb {
        for r in 0..nr {
            for n in 0..nu {
                y[(b * nr + r) * nu + n] = f[n * nb + b] && x[n * nr + r];
            }
        }
    }
    y
}

/// Whether `y` satisfies the linear rows `y ≤ f`, `y ≤ x`, `y ≥ f + x − 1`
/// and the fronthaul capacities.
pub fn c7_rows_hold(dims: &NetworkDims, f: &[bool], x: &[bool], y: &[bool]) -> bool {
    let (nr, nb, nu) = (dims.num_rrhs, dims.num_bbus, dims.num_users());
    for b in 0..nb {
        for r in 0..nr {
            let mut load = 0;
            for n in 0..nu {
                let (yv, fv, xv) = (
                    y[(b * nr + r) * nu + n] as i32,
                    f[n * nb + b] as i32,
                    x[n * nr + r] as i32,
                );
                if yv > fv || yv > xv || yv < fv + xv - 1 {
                    return false;
                }
                load += yv as usize;
            }
            if load > dims.fronthaul(r, b) {
                return false;
            }
        }
    }
    true
}

/// Throughput each cell would carry if selected, given τ and p in `fixed`.
pub fn association_weights(params: &Params, channel: &ChannelState, fixed: &Allocation) -> Vec<f64> {
    let dims = &params.dims;
    let mut w = vec![0.0; dims.num_cells()];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            let tau = fixed.tau[dims.rk(r, k)].clamp(0.0, params.sensing.frame_len);
            let factor = params.rate_factor(tau, k);
            for n in 0..dims.num_users() {
                let c = dims.cell(r, k, n);
                let p = fixed.power[c];
                if p <= 0.0 {
                    continue;
                }
                let i = interference_at(dims, n, r, k, fixed, channel);
                let g0 = sinr_absent(p, channel.downlink_gain[c], i, params.radio.noise_power);
                w[c] = factor * g0.ln_1p() / LN_2;
            }
        }
    }
    w
}

/// Route `counts[r]` users from each RRH to BBUs under the fronthaul and BBU
/// capacities. Returns the per-link flow `flow[r * B + b]` when every user fits.
pub(crate) fn route_to_bbus(dims: &NetworkDims, counts: &[usize]) -> Option<Vec<usize>> {
    let (nr, nb) = (dims.num_rrhs, dims.num_bbus);
    let mut flow = vec![0usize; nr * nb];
    let mut load = vec![0usize; nb];
    for r in 0..nr {
        for _ in 0..counts[r] {
            if !augment(dims, r, &mut flow, &mut load) {
                return None;
            }
        }
    }
    Some(flow)
}

/// One unit augmenting path from RRH `start` to the sink. Nodes `0..R` are
/// RRHs, `R..R+B` BBUs.
fn augment(dims: &NetworkDims, start: usize, flow: &mut [usize], load: &mut [usize]) -> bool {
    let (nr, nb) = (dims.num_rrhs, dims.num_bbus);
    let mut prev = vec![usize::MAX; nr + nb];
    let mut seen = vec![false; nr + nb];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node < nr {
            for b in 0..nb {
                let v = nr + b;
                if !seen[v] && flow[node * nb + b] < dims.fronthaul(node, b) {
                    seen[v] = true;
                    prev[v] = node;
                    if load[b] < dims.bbu_user_cap {
                        load[b] += 1;
                        let mut cur = v;
                        while cur != start {
                            let p = prev[cur];
                            if p < nr {
                                flow[p * nb + (cur - nr)] += 1;
                            } else {
                                flow[cur * nb + (p - nr)] -= 1;
                            }
                            cur = p;
                        }
                        return true;
                    }
                    queue.push_back(v);
                }
            }
        } else {
            let b = node - nr;
            for r in 0..nr {
                if !seen[r] && flow[r * nb + b] > 0 {
                    seen[r] = true;
                    prev[r] = node;
                    queue.push_back(r);
                }
            }
        }
    }
    false
}

struct Search<'a> {
    dims: &'a NetworkDims,
    /// Pairs in branching order.
    pairs: Vec<(usize, usize)>,
    /// Per pair: `(user, weight)` with positive weight, best first.
    cands: Vec<Vec<(usize, f64)>>,
    slice_of: Vec<usize>,
    reserved: Vec<f64>,
    /// Absolute slack for objective comparisons.
    eps: f64,
    node_limit: u64,

    bound_rrh: Vec<Option<usize>>,
    uses: Vec<usize>,
    counts: Vec<usize>,
    choice: Vec<Option<usize>>,
    objective: f64,
    rates: Vec<f64>,

    best: Option<(f64, Vec<Option<usize>>)>,
    nodes: u64,
    hit_limit: bool,
    capacity_prunes: u64,
    slice_prunes: Vec<u64>,
}

impl Search<'_> {
    /// Optimistic completion from pair index `depth`: total and per slice.
    fn optimistic(&self, depth: usize) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut per_slice = vec![0.0; self.reserved.len()];
        for (i, &(r, _)) in self.pairs.iter().enumerate().skip(depth) {
            let mut best = 0.0_f64;
            let mut slice_best = vec![0.0_f64; self.reserved.len()];
            for &(n, w) in &self.cands[i] {
                if self.bound_rrh[n].is_some_and(|b| b != r) {
                    continue;
                }
                best = best.max(w);
                let s = self.slice_of[n];
                slice_best[s] = slice_best[s].max(w);
            }
            total += best;
            for (acc, v) in per_slice.iter_mut().zip(slice_best) {
                *acc += v;
            }
        }
        (total, per_slice)
    }

    fn meets_reserved(&self, rates: &[f64]) -> bool {
        rates
            .iter()
            .zip(&self.reserved)
            .all(|(&rate, &rsv)| rate >= rsv - 1e-9 * rsv.max(1.0))
    }

    fn dfs(&mut self, depth: usize) {
        if self.hit_limit {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.hit_limit = true;
            return;
        }
        if depth == self.pairs.len() {
            if self.meets_reserved(&self.rates)
                && self.best.as_ref().map_or(true, |(b, _)| self.objective > b + self.eps)
            {
                self.best = Some((self.objective, self.choice.clone()));
            }
            return;
        }
        let (total, per_slice) = self.optimistic(depth);
        if let Some((b, _)) = &self.best {
            if self.objective + total <= b + self.eps {
                return;
            }
        }
        for s in 0..self.reserved.len() {
            let reachable = self.rates[s] + per_slice[s];
            if reachable < self.reserved[s] - 1e-9 * self.reserved[s].max(1.0) {
                self.slice_prunes[s] += 1;
                return;
            }
        }

        let r = self.pairs[depth].0;
        for ci in 0..self.cands[depth].len() {
            let (n, w) = self.cands[depth][ci];
            let newly_bound = match self.bound_rrh[n] {
                Some(b) if b != r => continue,
                Some(_) => false,
                None => true,
            };
            if newly_bound {
                self.counts[r] += 1;
                if route_to_bbus(self.dims, &self.counts).is_none() {
                    self.counts[r] -= 1;
                    self.capacity_prunes += 1;
                    continue;
                }
                self.bound_rrh[n] = Some(r);
            }
            self.uses[n] += 1;
            self.choice[depth] = Some(n);
            let s = self.slice_of[n];
            let (saved_obj, saved_rate) = (self.objective, self.rates[s]);
            self.objective += w;
            self.rates[s] += w;

            self.dfs(depth + 1);

            self.objective = saved_obj;
            self.rates[s] = saved_rate;
            self.choice[depth] = None;
            self.uses[n] -= 1;
            if newly_bound {
                self.bound_rrh[n] = None;
                self.counts[r] -= 1;
            }
            if self.hit_limit {
                return;
            }
        }
        self.dfs(depth + 1);
    }
}

/// Exact association for the sensing times and powers in `fixed`.
///
/// `warm` seeds the incumbent with a previous association (restricted to
/// cells that still carry rate); the search then replaces it only with a
/// strictly better one.
pub fn solve_association(
    params: &Params,
    channel: &ChannelState,
    fixed: &Allocation,
    warm: Option<&Allocation>,
    options: &AssocOptions,
) -> Result<AssocSolveResult> {
    let dims = &params.dims;
    let weights = association_weights(params, channel, fixed);
    solve_with_weights(dims, &weights, &params.radio.reserved_rate, warm, options)
}

/// Branch-and-bound on explicit cell weights.
pub fn solve_with_weights(
    dims: &NetworkDims,
    weights: &[f64],
    reserved: &[f64],
    warm: Option<&Allocation>,
    options: &AssocOptions,
) -> Result<AssocSolveResult> {
    let (nr, nk, nu) = (dims.num_rrhs, dims.num_subcarriers, dims.num_users());
    let slice_of = dims.slice_of_users();

    let mut pairs = Vec::new();
    let mut cands = Vec::new();
    for r in 0..nr {
        for k in 0..nk {
            let mut list: Vec<(usize, f64)> = (0..nu)
                .map(|n| (n, weights[dims.cell(r, k, n)]))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            if list.is_empty() {
                continue;
            }
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            pairs.push((r, k));
            cands.push(list);
        }
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| cands[b][0].1.total_cmp(&cands[a][0].1).then(pairs[a].cmp(&pairs[b])));
    let pairs: Vec<_> = order.iter().map(|&i| pairs[i]).collect();
    let cands: Vec<_> = order.iter().map(|&i| cands[i].clone()).collect();

    let scale: f64 = cands.iter().map(|c| c[0].1).sum();
    let mut search = Search {
        dims,
        pairs,
        cands,
        slice_of: slice_of.clone(),
        reserved: reserved.to_vec(),
        eps: 1e-12 * scale.max(1e-300),
        node_limit: options.node_limit,
        bound_rrh: vec![None; nu],
        uses: vec![0; nu],
        counts: vec![0; nr],
        choice: vec![None; 0],
        objective: 0.0,
        rates: vec![0.0; reserved.len()],
        best: None,
        nodes: 0,
        hit_limit: false,
        capacity_prunes: 0,
        slice_prunes: vec![0; reserved.len()],
    };
    search.choice = vec![None; search.pairs.len()];

    if let Some(prev) = warm {
        if let Some(seed) = warm_incumbent(&search, weights, prev) {
            search.best = Some(seed);
        }
    }

    search.dfs(0);
    let nodes = search.nodes;
    let proven = !search.hit_limit;
    let Some((_, choice)) = search.best.take() else {
        let cause = if search.hit_limit {
            InfeasibleCause::Exhausted
        } else if let Some(s) = root_slice_failure(&search) {
            InfeasibleCause::SliceRate { slice: s }
        } else if search.capacity_prunes > 0 {
            InfeasibleCause::Capacity
        } else {
            let s = (0..search.slice_prunes.len())
                .max_by_key(|&s| (search.slice_prunes[s], std::cmp::Reverse(s)))
                .unwrap_or(0);
            InfeasibleCause::SliceRate { slice: s }
        };
        return Err(Error::AssociationInfeasible(cause));
    };

    let mut beta = vec![false; dims.num_cells()];
    let mut counts = vec![0usize; nr];
    let mut rrh_of = vec![None; nu];
    for (i, c) in choice.iter().enumerate() {
        if let Some(n) = *c {
            let (r, k) = search.pairs[i];
            beta[dims.cell(r, k, n)] = true;
            if rrh_of[n].is_none() {
                rrh_of[n] = Some(r);
                counts[r] += 1;
            }
        }
    }
    let flow = route_to_bbus(dims, &counts).expect("incumbent satisfies the BBU capacities");
    let nb = dims.num_bbus;
    let mut x = vec![false; nu * nr];
    let mut f = vec![false; nu * nb];
    let mut remaining = flow;
    for n in 0..nu {
        if let Some(r) = rrh_of[n] {
            x[n * nr + r] = true;
            let b = (0..nb).find(|&b| remaining[r * nb + b] > 0).expect("flow covers every bound user");
            remaining[r * nb + b] -= 1;
            f[n * nb + b] = true;
        }
    }
    let y = linearize_c7(dims, &f, &x);
    let objective = beta
        .iter()
        .zip(weights)
        .filter(|(b, _)| **b)
        .map(|(_, w)| *w)
        .sum();
    debug!("association: {nodes} nodes, proven_optimal = {proven}");
    Ok(AssocSolveResult {
        f,
        x,
        beta,
        y,
        objective,
        nodes_explored: nodes,
        proven_optimal: proven,
    })
}

fn root_slice_failure(search: &Search) -> Option<usize> {
    let mut per_slice = vec![0.0_f64; search.reserved.len()];
    for list in &search.cands {
        let mut best = vec![0.0_f64; search.reserved.len()];
        for &(n, w) in list {
            let s = search.slice_of[n];
            best[s] = best[s].max(w);
        }
        for (acc, v) in per_slice.iter_mut().zip(best) {
            *acc += v;
        }
    }
    (0..per_slice.len()).find(|&s| per_slice[s] < search.reserved[s] - 1e-9 * search.reserved[s].max(1.0))
}

/// Previous association expressed as a search leaf, if it is still feasible.
fn warm_incumbent(search: &Search, weights: &[f64], prev: &Allocation) -> Option<(f64, Vec<Option<usize>>)> {
    let dims = search.dims;
    if !prev.matches(dims) {
        return None;
    }
    let nu = dims.num_users();
    let mut choice = vec![None; search.pairs.len()];
    let mut rrh_of = vec![None; nu];
    let mut counts = vec![0usize; dims.num_rrhs];
    let mut objective = 0.0;
    let mut rates = vec![0.0; search.reserved.len()];
    for (i, &(r, k)) in search.pairs.iter().enumerate() {
        let Some(n) = prev.user_on(dims, r, k) else { continue };
        let w = weights[dims.cell(r, k, n)];
        if w <= 0.0 {
            continue;
        }
        match rrh_of[n] {
            Some(other) if other != r => return None,
            Some(_) => {}
            None => {
                rrh_of[n] = Some(r);
                counts[r] += 1;
            }
        }
        choice[i] = Some(n);
        objective += w;
        rates[search.slice_of[n]] += w;
    }
    if route_to_bbus(dims, &counts).is_none() || !search.meets_reserved(&rates) {
        return None;
    }
    Some((objective, choice))
}
