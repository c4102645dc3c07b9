//! Exact finite-state computations: Bayes inversion, DAE transition
//! matrices, stationary distributions, perturbation bounds, clamping and
//! compatibility conditions.
//!
//! Conditionals are column-stochastic: `m[a, b] = P(a | b)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{linalg, RngStream, Tensor2};
use crate::tabular::BinaryConditionals;
use crate::{GsnError, Result};

/// Tolerance on column sums of conditional matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

pub fn check_distribution(p: &[f64], what: &'static str) -> Result<()> {
    if p.is_empty() {
        return Err(GsnError::Empty(what));
    }
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(GsnError::Domain(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL * p.len() as f64 {
        return Err(GsnError::Domain(format!("{what} sums to {s}")));
    }
    Ok(())
}

pub fn check_column_stochastic(m: &Tensor2, what: &'static str) -> Result<()> {
    if m.data().iter().any(|v| *v < 0.0) {
        return Err(GsnError::Domain(format!("{what} has a negative entry")));
    }
    for (c, s) in m.column_sums().iter().enumerate() {
        if (s - 1.0).abs() > STOCHASTIC_TOL * m.rows().max(1) as f64 {
            return Err(GsnError::Domain(format!("column {c} of {what} sums to {s}")));
        }
    }
    Ok(())
}

/// Tabular `P(X)`, `C(X̃|X)` and optional encoder `f(h|x)` / decoder `g(x|h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSystem {
    pub p_x: Vec<f64>,
    /// `n_x̃ × n_x`.
    pub c: Tensor2,
    /// `n_x × n_h`.
    pub g: Option<Tensor2>,
    /// `n_h × n_x`.
    pub f: Option<Tensor2>,
}

impl FiniteSystem {
    pub fn new(p_x: Vec<f64>, c: Tensor2) -> Result<Self> {
        let sys = FiniteSystem { p_x, c, g: None, f: None };
        sys.validate()?;
        Ok(sys)
    }

    /// A system carrying only an encoder/decoder pair; `p_x` is the decoder
    /// chain's stationary marginal when it exists, uniform otherwise.
    pub fn from_pair(f: Tensor2, g: Tensor2) -> Result<Self> {
        let n_x = g.rows();
        let p_x = visible_marginal(&f, &g).unwrap_or_else(|_| vec![1.0 / n_x as f64; n_x]);
        let sys = FiniteSystem { p_x, c: Tensor2::identity(n_x), g: Some(g), f: Some(f) };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution(&self.p_x, "p_x")?;
        if self.c.cols() != self.n_x() {
            return Err(GsnError::Shape { op: "corruption matrix", left: self.c.shape(), right: (self.c.rows(), self.n_x()) });
        }
        check_column_stochastic(&self.c, "corruption matrix")?;
        if let (Some(f), Some(g)) = (&self.f, &self.g) {
            if g.rows() != self.n_x() || f.cols() != self.n_x() || f.rows() != g.cols() {
                return Err(GsnError::Shape { op: "encoder/decoder", left: f.shape(), right: g.shape() });
            }
        }
        if let Some(f) = &self.f {
            check_column_stochastic(f, "encoder")?;
        }
        if let Some(g) = &self.g {
            check_column_stochastic(g, "decoder")?;
        }
        Ok(())
    }

    fn pair(&self) -> Result<(&Tensor2, &Tensor2)> {
        match (&self.f, &self.g) {
            (Some(f), Some(g)) => Ok((f, g)),
            _ => Err(GsnError::Domain("system has no encoder/decoder pair".into())),
        }
    }
}

/// Column-stochastic square matrix: `k[x', x] = P(x' | x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    k: Tensor2,
}

impl TransitionMatrix {
    pub fn new(k: Tensor2) -> Result<Self> {
        if k.rows() != k.cols() || k.rows() == 0 {
            return Err(GsnError::Shape { op: "transition matrix", left: k.shape(), right: (k.rows(), k.rows()) });
        }
        check_column_stochastic(&k, "transition matrix")?;
        Ok(TransitionMatrix { k })
    }

    pub fn matrix(&self) -> &Tensor2 {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.rows()
    }

    /// One step of the chain applied to a distribution.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.k.matvec(p)
    }
}

/// `P(X|X̃) ∝ C(X̃|X) P(X)`, as an `n_x × n_x̃` matrix.
pub fn bayes_posterior(sys: &FiniteSystem) -> Result<Tensor2> {
    sys.validate()?;
    let (n_t, n_x) = sys.c.shape();
    let mut post = Tensor2::zeros(n_x, n_t);
    for t in 0..n_t {
        let z: f64 = (0..n_x).map(|x| sys.c.get(t, x) * sys.p_x[x]).sum();
        if z <= 0.0 {
            return Err(GsnError::DegenerateSupport { state: t });
        }
        for x in 0..n_x {
            post.set(x, t, sys.c.get(t, x) * sys.p_x[x] / z);
        }
    }
    Ok(post)
}

/// `K = P_θ · C`: corrupt, then reconstruct.
pub fn dae_transition(c: &Tensor2, posterior: &Tensor2) -> Result<TransitionMatrix> {
    TransitionMatrix::new(posterior.matmul(c)?)
}

/// Distribution of `X̃_{k-1}` given `X_0` after `k-1` reconstruct/corrupt
/// rounds: `C_1 = C`, `C_{k+1} = C · P_θ · C_k`.
pub fn walkback_corruption(c: &Tensor2, posterior: &Tensor2, k: usize) -> Result<Tensor2> {
    if k == 0 {
        return Err(GsnError::Param { name: "k", value: 0.0 });
    }
    let step = c.matmul(posterior)?;
    let mut ck = c.clone();
    for _ in 1..k {
        ck = step.matmul(&ck)?;
    }
    Ok(ck)
}

/// Checks irreducibility (strong connectivity of the transition graph) and
/// aperiodicity (gcd of cycle lengths is one).
pub fn check_ergodic(k: &TransitionMatrix) -> Result<()> {
    let n = k.n();
    let m = k.matrix();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { m.get(v, u) } else { m.get(u, v) };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    if reach(true).iter().any(|s| !s) || reach(false).iter().any(|s| !s) {
        return Err(GsnError::Ergodicity("chain is reducible".into()));
    }
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = alloc::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if m.get(v, u) > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0usize;
    for u in 0..n {
        for v in 0..n {
            if m.get(v, u) > 0.0 {
                period = gcd(period, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    if period != 1 {
        return Err(GsnError::Ergodicity(format!("chain is periodic with period {period}")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Power iteration from the uniform distribution until `‖Kπ − π‖₁ < 1e-12`.
pub fn stationary(k: &TransitionMatrix) -> Result<Vec<f64>> {
    check_ergodic(k)?;
    power_iterate(k)
}

fn power_iterate(k: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = k.n();
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = k.apply(&pi)?;
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        residual = l1(&next, &pi);
        pi = next;
        if residual < STATIONARY_TOL {
            let check = l1(&k.apply(&pi)?, &pi);
            if check < STATIONARY_TOL {
                return Ok(pi);
            }
        }
    }
    Err(GsnError::IterationLimit { iterations: STATIONARY_MAX_ITER, residual })
}

/// Stationary vector by Gaussian elimination on `(K − I)π = 0`, `Σπ = 1`.
pub fn stationary_by_solve(k: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = k.n();
    let mut a = Tensor2::from_fn(n, n, |r, c| k.matrix().get(r, c) - if r == c { 1.0 } else { 0.0 });
    let mut b = vec![0.0; n];
    for c in 0..n {
        a.set(n - 1, c, 1.0);
    }
    b[n - 1] = 1.0;
    linalg::solve(&a, &b)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * l1(a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchweitzerReport {
    /// `‖π − π̃‖₁`.
    pub lhs: f64,
    /// `‖Z‖ · ‖K − K̃‖`.
    pub rhs: f64,
    pub pi: Vec<f64>,
    pub pi_tilde: Vec<f64>,
    pub z_norm: f64,
}

/// Perturbation bound on stationary vectors with the fundamental matrix
/// `Z = (I − K + C)⁻¹`, `C = π 1ᵀ`.
///
/// Norms are max absolute row sums of the row-stochastic (transposed)
/// matrices, i.e. max absolute column sums of `Z` and `K − K̃` as stored
/// here. That is the norm under which the bound is an inequality for
/// column-stochastic chains; see `literal_row_sum_rhs` for the other one.
pub fn schweitzer_bound(k: &TransitionMatrix, k_tilde: &TransitionMatrix) -> Result<SchweitzerReport> {
    if k.n() != k_tilde.n() {
        return Err(GsnError::Shape { op: "schweitzer_bound", left: k.matrix().shape(), right: k_tilde.matrix().shape() });
    }
    let pi = stationary(k)?;
    let pi_tilde = stationary(k_tilde)?;
    let z = fundamental_matrix(k, &pi)?;
    let diff = k.matrix().sub(k_tilde.matrix())?;
    let z_norm = z.norm_1();
    Ok(SchweitzerReport { lhs: l1(&pi, &pi_tilde), rhs: z_norm * diff.norm_1(), pi, pi_tilde, z_norm })
}

/// `(I − K + π 1ᵀ)⁻¹`.
pub fn fundamental_matrix(k: &TransitionMatrix, pi: &[f64]) -> Result<Tensor2> {
    let n = k.n();
    let a = Tensor2::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 } - k.matrix().get(r, c) + pi[r]);
    linalg::inverse(&a)
}

/// The bound with max-row-sum norms taken on the column-stochastic
/// matrices directly. Not guaranteed to hold; kept for comparison.
pub fn literal_row_sum_rhs(k: &TransitionMatrix, k_tilde: &TransitionMatrix) -> Result<f64> {
    let pi = stationary(k)?;
    let z = fundamental_matrix(k, &pi)?;
    Ok(z.norm_inf() * k.matrix().sub(k_tilde.matrix())?.norm_inf())
}

/// Stationary visible marginal of the `x → h → x` chain `G·F`.
pub fn visible_marginal(f: &Tensor2, g: &Tensor2) -> Result<Vec<f64>> {
    stationary(&TransitionMatrix::new(g.matmul(f)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClampReport {
    pub holds: bool,
    pub max_violation: f64,
    /// Stationary distribution of the clamped chain over `subset` (in
    /// subset order).
    pub clamped_stationary: Vec<f64>,
    /// `π(x | x ∈ S)` in subset order.
    pub conditional: Vec<f64>,
}

pub const CONDITION_TOL: f64 = 1e-10;

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(GsnError::Empty("subset"));
    }
    for (i, s) in subset.iter().enumerate() {
        if *s >= n {
            return Err(GsnError::Index { index: *s, dim: n });
        }
        if subset[..i].contains(s) {
            return Err(GsnError::Domain(format!("state {s} repeated in subset")));
        }
    }
    Ok(())
}

/// Restricted decoder `g(x | h, x ∈ S)` as a `|S| × n_h` matrix; hidden
/// states that cannot emit into `S` get an all-zero column.
fn restricted_decoder(g: &Tensor2, subset: &[usize]) -> Tensor2 {
    let n_h = g.cols();
    let mut out = Tensor2::zeros(subset.len(), n_h);
    for h in 0..n_h {
        let mass: f64 = subset.iter().map(|x| g.get(*x, h)).sum();
        if mass > 0.0 {
            for (i, x) in subset.iter().enumerate() {
                out.set(i, h, g.get(*x, h) / mass);
            }
        }
    }
    out
}

/// Transition matrix of the chain clamped to `subset`: encode with `f`,
/// decode with `g` restricted and renormalized to the subset.
pub fn clamped_transition(f: &Tensor2, g: &Tensor2, subset: &[usize]) -> Result<TransitionMatrix> {
    check_subset(subset, g.rows())?;
    let gs = restricted_decoder(g, subset);
    let fs = Tensor2::from_fn(f.rows(), subset.len(), |h, j| f.get(h, subset[j]));
    for h in 0..f.rows() {
        let reachable = subset.iter().any(|x| f.get(h, *x) > 0.0);
        if reachable && gs.col(h).iter().all(|v| *v == 0.0) {
            return Err(GsnError::Domain(format!("hidden state {h} is reachable but cannot decode into the subset")));
        }
    }
    TransitionMatrix::new(gs.matmul(&fs)?)
}

/// Joint `π(x, h) = π_H(h) g(x|h)` of a decoded chain state, with `π_H` the
/// stationary distribution of the hidden chain `F·G`.
pub fn decoder_joint(f: &Tensor2, g: &Tensor2) -> Result<Tensor2> {
    let pi_h = stationary(&TransitionMatrix::new(f.matmul(g)?)?)?;
    Ok(Tensor2::from_fn(g.rows(), g.cols(), |x, h| pi_h[h] * g.get(x, h)))
}

/// Compares `Σ_{x∈S} π(x|x∈S) f(h'|x)` with `π(h'|x∈S)` for every `h'`,
/// and the clamped chain's stationary distribution with `π(x|x∈S)`.
pub fn check_clamp_condition(sys: &FiniteSystem, subset: &[usize]) -> Result<ClampReport> {
    let (f, g) = sys.pair()?;
    check_subset(subset, g.rows())?;
    let joint = decoder_joint(f, g)?;
    let pi_x: Vec<f64> = (0..joint.rows()).map(|x| joint.row(x).iter().sum()).collect();
    let mass: f64 = subset.iter().map(|x| pi_x[*x]).sum();
    if mass <= 0.0 {
        return Err(GsnError::Domain("subset has zero stationary mass".into()));
    }
    let conditional: Vec<f64> = subset.iter().map(|x| pi_x[*x] / mass).collect();
    let mut max_violation: f64 = 0.0;
    for h in 0..f.rows() {
        let lhs: f64 = subset.iter().zip(&conditional).map(|(x, p)| p * f.get(h, *x)).sum();
        let rhs: f64 = subset.iter().map(|x| joint.get(*x, h)).sum::<f64>() / mass;
        max_violation = max_violation.max((lhs - rhs).abs());
    }
    let clamped_stationary = stationary(&clamped_transition(f, g, subset)?)?;
    Ok(ClampReport { holds: max_violation < CONDITION_TOL, max_violation, clamped_stationary, conditional })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NecessityReport {
    /// Columns of the restricted decoder are linearly independent.
    pub independent: bool,
    pub rank: usize,
    /// Clamped stationary equals `π(x|x∈S)` within 1e-10.
    pub stationary_matches: bool,
    pub condition_holds: bool,
}

impl NecessityReport {
    /// Necessity applies only to linearly independent restricted decoders.
    pub fn applicable(&self) -> bool {
        self.independent
    }
}

/// When the restricted decoder has independent columns, a matching clamped
/// stationary distribution forces the clamping condition; returns a
/// consistency error if that implication fails.
pub fn check_necessity(sys: &FiniteSystem, subset: &[usize]) -> Result<NecessityReport> {
    let (_, g) = sys.pair()?;
    let report = check_clamp_condition(sys, subset)?;
    let rank = linalg::rank(&restricted_decoder(g, subset), CONDITION_TOL);
    let independent = rank == g.cols();
    let stationary_matches = l1(&report.clamped_stationary, &report.conditional) < CONDITION_TOL;
    if independent && stationary_matches && !report.holds {
        return Err(GsnError::Consistency(format!(
            "clamped stationary matches but the condition is violated by {}",
            report.max_violation
        )));
    }
    Ok(NecessityReport { independent, rank, stationary_matches, condition_holds: report.holds })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompatReport {
    pub compatible: bool,
    pub residual: f64,
    /// `n_x × n_h` joint, present when compatible.
    pub joint: Option<Tensor2>,
}

/// Whether `f(h|x)` and `g(x|h)` are the conditionals of one joint. The
/// candidate joint is `π_X(x) f(h|x)` with `π_X` the stationary marginal of
/// the Gibbs chain; it must reproduce `g` as its other conditional.
pub fn check_mutual_compatibility(f: &Tensor2, g: &Tensor2) -> Result<CompatReport> {
    if f.rows() != g.cols() || f.cols() != g.rows() {
        return Err(GsnError::Shape { op: "mutual compatibility", left: f.shape(), right: g.shape() });
    }
    check_column_stochastic(f, "encoder")?;
    check_column_stochastic(g, "decoder")?;
    let gibbs = TransitionMatrix::new(g.matmul(f)?)?;
    let pi_x = match stationary(&gibbs) {
        Ok(p) => p,
        Err(GsnError::Ergodicity(_)) => power_iterate(&gibbs)?,
        Err(e) => return Err(e),
    };
    let joint = Tensor2::from_fn(g.rows(), g.cols(), |x, h| pi_x[x] * f.get(h, x));
    let mut residual: f64 = 0.0;
    for h in 0..g.cols() {
        let mass: f64 = (0..g.rows()).map(|x| joint.get(x, h)).sum();
        for x in 0..g.rows() {
            let implied = if mass > 0.0 { joint.get(x, h) / mass } else { g.get(x, h) };
            residual = residual.max((implied - g.get(x, h)).abs());
        }
    }
    let compatible = residual < CONDITION_TOL;
    Ok(CompatReport { compatible, residual, joint: compatible.then_some(joint) })
}

/// Whether the `ε`-neighbourhood graph (sup-norm) over `points` is connected.
pub fn check_local_ergodicity(points: &[Vec<f64>], epsilon: f64) -> Result<bool> {
    if !(epsilon > 0.0) {
        return Err(GsnError::Param { name: "epsilon", value: epsilon });
    }
    if points.is_empty() {
        return Err(GsnError::Empty("points"));
    }
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut components = points.len();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dist = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dist <= epsilon {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                    components -= 1;
                }
            }
        }
    }
    Ok(components == 1)
}

/// `−E_{X,X̃}[log P_θ(X|X̃)]` under `P(X) C(X̃|X)`.
pub fn expected_nll(sys: &FiniteSystem, candidate: &Tensor2) -> Result<f64> {
    let (n_t, n_x) = sys.c.shape();
    if candidate.shape() != (n_x, n_t) {
        return Err(GsnError::Shape { op: "expected_nll", left: candidate.shape(), right: (n_x, n_t) });
    }
    let mut total = 0.0;
    for x in 0..n_x {
        for t in 0..n_t {
            let w = sys.p_x[x] * sys.c.get(t, x);
            if w > 0.0 {
                total -= w * libm::log(candidate.get(x, t));
            }
        }
    }
    Ok(total)
}

/// `E_{X̃}[KL(P(X|X̃) ‖ P_θ(X|X̃))]`.
pub fn expected_kl(sys: &FiniteSystem, candidate: &Tensor2) -> Result<f64> {
    let post = bayes_posterior(sys)?;
    let (n_t, n_x) = sys.c.shape();
    let mut total = 0.0;
    for t in 0..n_t {
        let p_t: f64 = (0..n_x).map(|x| sys.c.get(t, x) * sys.p_x[x]).sum();
        for x in 0..n_x {
            let p = post.get(x, t);
            if p > 0.0 {
                total += p_t * p * libm::log(p / candidate.get(x, t));
            }
        }
    }
    Ok(total)
}

/// Builds the tabular GSN of the chain construction: `f_x[h, h'] =
/// f(h | h', x)`, `H_0 | X_0 = x` drawn from the stationary distribution
/// of `f_x`, and `g(x|h) = P(X_0 = x | H_1 = h)`. Returns the initial joint
/// `P(X_0, H_0)` (`n_x × n_h`) and `g`.
pub fn gsn_chain_construction(p_x: &[f64], f: &[Tensor2]) -> Result<(Tensor2, Tensor2)> {
    check_distribution(p_x, "p_x")?;
    if f.len() != p_x.len() {
        return Err(GsnError::Consistency(format!("{} encoder matrices for {} visible states", f.len(), p_x.len())));
    }
    let n_h = f[0].rows();
    let mut joint0 = Tensor2::zeros(p_x.len(), n_h);
    for (x, fx) in f.iter().enumerate() {
        let h0 = stationary(&TransitionMatrix::new(fx.clone())?)?;
        for h in 0..n_h {
            joint0.set(x, h, p_x[x] * h0[h]);
        }
    }
    let joint1 = propagate_hidden(&joint0, f)?;
    let mut g = Tensor2::zeros(p_x.len(), n_h);
    for h in 0..n_h {
        let mass: f64 = (0..p_x.len()).map(|x| joint1.get(x, h)).sum();
        if mass <= 0.0 {
            return Err(GsnError::DegenerateSupport { state: h });
        }
        for x in 0..p_x.len() {
            g.set(x, h, joint1.get(x, h) / mass);
        }
    }
    Ok((joint0, g))
}

/// `P(X_t, H_{t+1})` from `P(X_t, H_t)`.
fn propagate_hidden(joint: &Tensor2, f: &[Tensor2]) -> Result<Tensor2> {
    let mut out = Tensor2::zeros(joint.rows(), joint.cols());
    for (x, fx) in f.iter().enumerate() {
        let next = fx.matvec(joint.row(x))?;
        out.row_mut(x).copy_from_slice(&next);
    }
    Ok(out)
}

/// Exact joints `P(X_t, H_t)` for `t = 0..=steps` of the chain
/// `H_{t+1} ~ f(·|H_t, X_t)`, `X_{t+1} ~ g(·|H_{t+1})`.
pub fn propagate_gsn_joint(joint0: &Tensor2, f: &[Tensor2], g: &Tensor2, steps: usize) -> Result<Vec<Tensor2>> {
    let mut out = vec![joint0.clone()];
    for _ in 0..steps {
        let mixed = propagate_hidden(out.last().expect("nonempty"), f)?;
        let p_h: Vec<f64> = (0..mixed.cols()).map(|h| (0..mixed.rows()).map(|x| mixed.get(x, h)).sum()).collect();
        out.push(Tensor2::from_fn(g.rows(), g.cols(), |x, h| g.get(x, h) * p_h[h]));
    }
    Ok(out)
}

/// Exact random-scan Gibbs kernel over all `2^n` states (bit `i` of the
/// state index is variable `i`): `K = (1/n) Σ_s K_s`.
pub fn random_scan_transition(cond: &BinaryConditionals) -> Result<TransitionMatrix> {
    let n = cond.n_vars();
    let states = 1usize << n;
    let mut k = Tensor2::zeros(states, states);
    for x in 0..states {
        for s in 0..n {
            let p1 = cond.prob_one(s, x);
            let on = x | (1 << s);
            let off = x & !(1 << s);
            k.set(on, x, k.get(on, x) + p1 / n as f64);
            k.set(off, x, k.get(off, x) + (1.0 - p1) / n as f64);
        }
    }
    TransitionMatrix::new(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    pub posterior: Tensor2,
    pub iterations: usize,
    /// Max absolute entry change in the last refit.
    pub last_change: f64,
    pub stationary: Vec<f64>,
}

/// Mixture weights over walkback depths `1..=k_max` for `k ~ Geometric(p)`
/// truncated at `k_max`. With `collect_intermediate` every depth up to the
/// drawn `k` contributes a pair, so depth `j` is weighted by `P(k ≥ j)`.
pub fn walkback_weights(p: f64, k_max: usize, collect_intermediate: bool) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GsnError::Param { name: "p", value: p });
    }
    if k_max == 0 {
        return Err(GsnError::Param { name: "k_max", value: 0.0 });
    }
    let mut pmf: Vec<f64> = (0..k_max).map(|j| p * libm::pow(1.0 - p, j as f64)).collect();
    let tail: f64 = 1.0 - pmf.iter().sum::<f64>();
    pmf[k_max - 1] += tail;
    let mut w = if collect_intermediate {
        (0..k_max).map(|j| pmf[j..].iter().sum()).collect()
    } else {
        pmf
    };
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// Iterates the exact maximum-likelihood refit of `P_θ` to walkback pairs:
/// `P_θ(x|x̃) ∝ P(x) Σ_k w_k C_k(x̃|x)` with `C_k` built from the current
/// `P_θ`. Starts from the Bayes posterior of the plain corruption.
pub fn walkback_fixed_point(
    sys: &FiniteSystem,
    weights: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport> {
    let mut post = bayes_posterior(sys)?;
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        let step = sys.c.matmul(&post)?;
        let mut ck = sys.c.clone();
        let mut mix = Tensor2::zeros(ck.rows(), ck.cols());
        for (j, w) in weights.iter().enumerate() {
            if j > 0 {
                ck = step.matmul(&ck)?;
            }
            for (m, v) in mix.data_mut().iter_mut().zip(ck.data()) {
                *m += w * v;
            }
        }
        let next = bayes_posterior(&FiniteSystem { p_x: sys.p_x.clone(), c: normalize_columns(mix)?, g: None, f: None })?;
        last_change = next.max_abs_diff(&post);
        post = next;
        if last_change < tol {
            let stationary = stationary(&dae_transition(&sys.c, &post)?)?;
            return Ok(FixedPointReport { posterior: post, iterations: it, last_change, stationary });
        }
    }
    Err(GsnError::IterationLimit { iterations: max_iter, residual: last_change })
}

fn normalize_columns(mut m: Tensor2) -> Result<Tensor2> {
    let sums = m.column_sums();
    let cols = m.cols();
    for (i, v) in m.data_mut().iter_mut().enumerate() {
        *v /= sums[i % cols];
    }
    Ok(m)
}

/// Random probability vector with entries bounded away from zero.
pub fn random_distribution(n: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| 0.05 + rng.uniform()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random strictly positive column-stochastic matrix.
pub fn random_conditional(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2 {
    let mut m = Tensor2::zeros(rows, cols);
    for c in 0..cols {
        let col = random_distribution(rows, rng);
        for (r, v) in col.into_iter().enumerate() {
            m.set(r, c, v);
        }
    }
    m
}

/// Random system over `n` states with a corruption that keeps the state
/// with probability 1/2 and otherwise jumps according to a random matrix.
pub fn random_system(n: usize, rng: &mut RngStream) -> FiniteSystem {
    let jump = random_conditional(n, n, rng);
    let c = Tensor2::from_fn(n, n, |r, c| 0.5 * jump.get(r, c) + if r == c { 0.5 } else { 0.0 });
    FiniteSystem { p_x: random_distribution(n, rng), c, g: None, f: None }
}

/// Encoder/decoder pair derived from a random positive joint over
/// `n_x × n_h`; returns `(f, g, joint)`.
pub fn random_compatible_pair(n_x: usize, n_h: usize, rng: &mut RngStream) -> (Tensor2, Tensor2, Tensor2) {
    let flat = random_distribution(n_x * n_h, rng);
    let joint = Tensor2::new(n_x, n_h, flat).expect("finite");
    let px: Vec<f64> = (0..n_x).map(|x| joint.row(x).iter().sum()).collect();
    let ph: Vec<f64> = (0..n_h).map(|h| (0..n_x).map(|x| joint.get(x, h)).sum()).collect();
    let f = Tensor2::from_fn(n_h, n_x, |h, x| joint.get(x, h) / px[x]);
    let g = Tensor2::from_fn(n_x, n_h, |x, h| joint.get(x, h) / ph[h]);
    (f, g, joint)
}
