"""Transmissibility, domination and separation diagnostics on finite grids.

The limit conditions are evaluated as per-n probabilities plus trend
verdicts: a finite grid can certify a trend, never a limit.  All split
machinery (the alpha -> (c_n, gamma_n) extraction) is checked numerically
on exactly enumerated instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, ModelValidationError
from .models import (
    NEG_INF,
    FiniteDistribution,
    IndependentCoupling,
    logsumexp,
)
from .schedules import resolve_c_schedule, resolve_gamma_schedule, validate_gamma_schedule
from .spectra import (
    EnumeratedJoint,
    JointDensityLaw,
    PLimProxy,
    SpectralSummary,
    Spectrum,
    exact_spectrum,
    joint_density_law,
    mc_spectrum,
    plim_estimate,
)

GAP_DELTA = 0.25  # quartile proxies locate spectrum modes without extreme-tail bias


# ---------------------------------------------------------------------------
# Condition probabilities and trend reports
# ---------------------------------------------------------------------------


def condition_probability(source, coupling, channel, n, gamma, sign, *,
                          mode="auto", samples=None, seed=None) -> float:
    """Pr{A_n <= B_n +/- gamma} on the joint density law."""
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    law = joint_density_law(source=source, coupling=coupling, channel=channel,
                            n=n, mode=mode, samples=samples, seed=seed)
    g = gamma if sign == "plus" else -gamma
    return law.prob_a_le_b_plus(g)


@dataclass
class ConditionRow:
    n: int
    gamma_n: float
    c_n: float | None
    term1: float
    term2: float | None
    combined: float


@dataclass
class ConditionReport:
    """Per-n condition values plus a trend verdict against a threshold."""

    mode: str
    eps: float
    rows: list
    verdict: str
    slope: float
    tol: float
    gamma_schedule: tuple
    c_schedule: tuple | None = None
    seed: int | None = None
    taint: tuple = ()

    @property
    def combined(self) -> np.ndarray:
        return np.array([r.combined for r in self.rows])


def _trend_verdict(ns, values, eps, tol, slope_tol=1e-9):
    values = np.asarray(values, dtype=float)
    ns = np.asarray(ns, dtype=float)
    top = max(2, (len(values) + 1) // 2)
    slope = float(np.polyfit(ns[-top:], values[-top:], 1)[0]) if len(values) >= 2 else 0.0
    at_end = float(values[-1])
    if at_end <= eps + tol and slope <= slope_tol:
        return "satisfied-trend", slope
    if at_end > eps + tol and slope >= -slope_tol:
        return "violated", slope
    return "inconclusive", slope


def transmissibility_check(source, coupling, channel, n_grid, gamma_schedule,
                           sign, *, eps=0.0, tol=0.01, mode="auto",
                           samples=None, seed=None) -> ConditionReport:
    """Direct (plus) or converse (minus) condition values over an n-grid."""
    ns = list(n_grid)
    gammas = resolve_gamma_schedule(gamma_schedule, ns)
    validate_gamma_schedule(ns, gammas, sweep=len(ns) > 1)
    rows = []
    for n, g in zip(ns, gammas):
        p = condition_probability(source, coupling, channel, n, float(g), sign,
                                  mode=mode, samples=samples, seed=seed)
        rows.append(ConditionRow(n, float(g), None, p, None, p))
    verdict, slope = _trend_verdict(ns, [r.combined for r in rows], eps, tol)
    return ConditionReport(
        mode="direct" if sign == "plus" else "converse", eps=eps, rows=rows,
        verdict=verdict, slope=slope, tol=tol,
        gamma_schedule=tuple(float(g) for g in gammas), seed=seed,
    )


# ---------------------------------------------------------------------------
# Shift property of the two spectra
# ---------------------------------------------------------------------------


@dataclass
class ShiftPropertyReport:
    n: int
    gamma: float
    alpha: float
    worst_slack: float
    violations: list
    rows: list = field(repr=False)

    @property
    def ok(self) -> bool:
        return not self.violations


def shift_property_check(law: JointDensityLaw, gamma: float, t_grid=None,
                         guard: float = 1e-12) -> ShiftPropertyReport:
    """Verify P_n(t) >= Q_n(t - gamma) - 2 sqrt(alpha_n) on a t-grid.

    The inequality is a theorem; a violation beyond the float guard is
    reported as a finding, never raised.
    """
    alpha = law.prob_a_le_b_plus(gamma)
    spec_a = law.marginal("information")
    spec_b = law.marginal("entropy")
    if t_grid is None:
        finite = spec_a.values[np.isfinite(spec_a.values)]
        lo = min(float(finite.min()) if finite.size else 0.0, float(spec_b.values.min()))
        hi = max(float(finite.max()) if finite.size else 0.0, float(spec_b.values.max()))
        pad = abs(gamma) + 0.5
        t_grid = np.linspace(lo - pad, hi + pad, 1000)
    slack_term = 2.0 * math.sqrt(alpha)
    rows = []
    violations = []
    worst = math.inf
    for t in np.asarray(t_grid, dtype=float):
        p = spec_a.upper_cdf(t)
        q = spec_b.upper_cdf(t - gamma)
        slack = p - (q - slack_term)
        rows.append((float(t), p, q, slack))
        worst = min(worst, slack)
        if slack < -guard:
            violations.append((float(t), p, q, slack))
    return ShiftPropertyReport(law.n, gamma, alpha, worst, violations, rows)


# ---------------------------------------------------------------------------
# Domination checks
# ---------------------------------------------------------------------------


def _marginal_spectrum(source, coupling, channel, n, which, *, mode, samples, seed):
    if mode in ("auto", "exact"):
        try:
            return exact_spectrum(n, which, source=source, coupling=coupling, channel=channel)
        except CapExceededError:
            if mode == "exact":
                raise
    return mc_spectrum(n, which, source=source, coupling=coupling, channel=channel,
                       samples=samples, seed=seed)


def domination_check(source, coupling, channel, n_grid, c_schedule, gamma_schedule,
                     mode="strict", eps=0.0, *, engine="auto", samples=None,
                     seed=None, tol=0.01) -> ConditionReport:
    """Split-spectrum condition: source mass above c_n plus channel mass below it.

    strict uses the channel threshold c_n + gamma_n, domination c_n - gamma_n,
    and product multiplies the two terms instead of summing them.
    """
    if mode not in ("strict", "domination", "product"):
        raise ValueError(f"unknown domination mode {mode!r}")
    ns = list(n_grid)
    gammas = resolve_gamma_schedule(gamma_schedule, ns)
    validate_gamma_schedule(ns, gammas, sweep=len(ns) > 1)
    cs = resolve_c_schedule(c_schedule, ns)
    rows = []
    taint = ()
    for n, g, c in zip(ns, gammas, cs):
        ent = _marginal_spectrum(source, None, None, n, "entropy",
                                 mode=engine, samples=samples, seed=seed)
        info = _marginal_spectrum(source, coupling, channel, n, "information",
                                  mode=engine, samples=samples, seed=seed)
        taint = tuple(set(taint) | set(ent.taint) | set(info.taint))
        term1 = ent.upper_cdf(float(c))
        threshold = float(c) + float(g) if mode == "strict" else float(c) - float(g)
        term2 = info.cdf(threshold)
        combined = term1 * term2 if mode == "product" else term1 + term2
        rows.append(ConditionRow(n, float(g), float(c), term1, term2, combined))
    verdict, slope = _trend_verdict(ns, [r.combined for r in rows], eps, tol)
    return ConditionReport(
        mode=mode, eps=eps, rows=rows, verdict=verdict, slope=slope, tol=tol,
        gamma_schedule=tuple(float(g) for g in gammas),
        c_schedule=tuple(float(c) for c in cs), seed=seed, taint=taint,
    )


# ---------------------------------------------------------------------------
# Proof-machinery extraction
# ---------------------------------------------------------------------------


@dataclass
class SeparationExtract:
    """Split point and conditional-law checks derived from one alpha_n."""

    n: int
    gamma: float
    gamma_quarter: float
    alpha: float
    delta: float
    d_n: float
    c_n: float
    lambda1: float
    lambda2: float
    valid: bool
    source_tail: float  # Pr{B >= c_n}, required <= delta
    conditional_info_tail: float  # Pr{A~ <= d_n + gamma - gamma'}, required <= sqrt(alpha)
    checks_ok: bool


def extract_separation_point(joint: EnumeratedJoint, gamma: float,
                             alpha: float | None = None,
                             guard: float = 1e-12) -> SeparationExtract:
    """Derive (c_n, delta_n) from alpha_n and certify the two tail inequalities.

    Works on an exactly enumerated joint law; the conditional information
    density is recomputed against the output marginal of the conditional law.
    """
    n = joint.n
    probs = joint.probs
    if alpha is None:
        alpha = float(probs[joint.a <= joint.b + gamma].sum())
    if alpha >= 1.0:
        raise ValueError("alpha_n must be < 1 for the extraction")
    gamma_q = gamma / 4.0
    delta = max(math.sqrt(alpha), math.exp(-n * gamma_q))
    b_spec = Spectrum.from_atoms(n, joint.b, probs)
    # largest atom value u with Pr{B >= u} > delta; always exists since delta < 1
    candidates = [u for u in b_spec.values if b_spec.upper_cdf(float(u)) > delta]
    r_star = float(candidates[-1])
    d_n = r_star - gamma_q
    c_n = d_n + 2.0 * gamma_q
    mask = joint.b >= d_n - guard
    lambda1 = float(probs[mask].sum())
    lambda2 = 1.0 - lambda1
    valid = lambda1 > delta
    source_tail = b_spec.upper_cdf(c_n)
    conditional_info_tail = math.nan
    checks_ok = False
    if valid:
        cond = probs[mask] / lambda1
        y_ids = joint.y_ids[mask]
        y_marg = np.zeros(len(joint.y_words))
        np.add.at(y_marg, y_ids, cond)
        with np.errstate(divide="ignore"):
            y_log = np.where(y_marg > 0, np.log(np.maximum(y_marg, 1e-300)), NEG_INF)
        a_tilde = (joint.log_kernel[mask] - y_log[y_ids]) / n
        threshold = d_n + gamma - gamma_q
        conditional_info_tail = float(cond[a_tilde <= threshold].sum())
        checks_ok = (
            source_tail <= delta + guard
            and conditional_info_tail <= math.sqrt(alpha) + guard
        )
    return SeparationExtract(
        n=n, gamma=gamma, gamma_quarter=gamma_q, alpha=alpha, delta=delta,
        d_n=d_n, c_n=c_n, lambda1=lambda1, lambda2=lambda2, valid=valid,
        source_tail=source_tail, conditional_info_tail=conditional_info_tail,
        checks_ok=checks_ok,
    )


# ---------------------------------------------------------------------------
# Capacity
# ---------------------------------------------------------------------------


def dmc_capacity(matrix, tol: float = 1e-9, max_iter: int = 100_000):
    """Blahut-Arimoto with a capacity bracket; returns (nats, input law).

    Iterates until max_x D(W_x || q) - I(r) < tol, a two-sided certificate.
    """
    W = np.asarray(matrix, dtype=float)
    if W.ndim != 2 or np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-12):
        raise ModelValidationError("non-stochastic-matrix: rows must be probability vectors")
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = W.shape[0]
    r = np.full(m, 1.0 / m)
    with np.errstate(divide="ignore", invalid="ignore"):
        logW = np.where(W > 0, np.log(np.maximum(W, 1e-300)), 0.0)
    for _ in range(max_iter):
        q = r @ W
        with np.errstate(divide="ignore"):
            logq = np.where(q > 0, np.log(np.maximum(q, 1e-300)), 0.0)
        D = ((logW - logq[None, :]) * W).sum(axis=1)
        lower = float(r @ D)
        upper = float(D.max())
        if upper - lower < tol:
            return 0.5 * (lower + upper), r
        r = r * np.exp(D - D.max())
        r = r / r.sum()
    return 0.5 * (lower + upper), r


# ---------------------------------------------------------------------------
# Spectral functionals and converse properties
# ---------------------------------------------------------------------------


def _entropy_spectra(source, n_grid, *, engine, samples, seed):
    return [
        _marginal_spectrum(source, None, None, n, "entropy",
                           mode=engine, samples=samples, seed=seed)
        for n in n_grid
    ]


def _info_spectra(channel, candidate: FiniteDistribution, n_grid, *, engine, samples, seed):
    coupling = IndependentCoupling(candidate)
    return [
        _marginal_spectrum(None, coupling, channel, n, "information",
                           mode=engine, samples=samples, seed=seed)
        for n in n_grid
    ]


def _auto_candidates(channel, n_grid, ba_tol=1e-9):
    """Uniform input plus the per-letter capacity-achieving input when well-defined."""
    x_size = len(channel.x_alphabet)
    uniform = FiniteDistribution(tuple(range(x_size)), np.full(x_size, 1.0 / x_size))
    matrices = []
    for n in n_grid:
        comps = channel.product_components(n)
        if comps is None:
            return [uniform], False
        if len(comps) == 1:
            matrices.append(comps[0][1])
        else:
            for _, mat in comps:
                matrices.append(mat)
    distinct = {m.tobytes(): m for m in matrices}
    candidates = [uniform]
    single_dmc = len(distinct) == 1 and all(
        channel.product_components(n) is not None and len(channel.product_components(n)) == 1
        for n in n_grid
    )
    for mat in distinct.values():
        _, r = dmc_capacity(mat, tol=ba_tol)
        candidates.append(FiniteDistribution(tuple(range(x_size)), r))
    return candidates, single_dmc


def spectral_functionals(source, channel, n_grid, input_candidates="auto",
                         delta: float = 1e-3, *, engine="auto", samples=None,
                         seed=None, ba_tol: float = 1e-9):
    """Headline source rate and channel capacity proxies over an n-grid.

    The source functional is the (1-delta)-quantile proxy of the entropy
    spectrum; the channel functional maximizes the delta-quantile proxy of
    the information spectrum over the candidate inputs.  Oscillating
    trajectories fall back to the extreme over the top half of the grid,
    the finite-sequence reading of a full-sequence limit.
    """
    ns = sorted(n_grid)
    if input_candidates == "auto":
        candidates, exact_sup = _auto_candidates(channel, ns, ba_tol)
    else:
        candidates = [
            c if isinstance(c, FiniteDistribution)
            else FiniteDistribution(tuple(range(len(c))), c)
            for c in input_candidates
        ]
        if not candidates:
            raise ValueError("empty-candidate-list")
        exact_sup = False
    ent = _entropy_spectra(source, ns, engine=engine, samples=samples, seed=seed)
    h_up = plim_estimate(ent, "p_limsup", delta)
    h_lo = plim_estimate(ent, "p_liminf", delta)
    best = None
    per_candidate = []
    for cand in candidates:
        spectra = _info_spectra(channel, cand, ns, engine=engine, samples=samples, seed=seed)
        i_lo = plim_estimate(spectra, "p_liminf", delta)
        i_up = plim_estimate(spectra, "p_limsup", delta)
        per_candidate.append((cand, i_lo, i_up))
        if best is None or i_lo.headline() > best[1].headline():
            best = (cand, i_lo, i_up)
    flags = [] if exact_sup else ["capacity-lower-bound"]
    if not h_up.monotone or not best[1].monotone:
        flags.append("oscillating-trajectory")
    summary = SpectralSummary(
        n_grid=tuple(ns), delta=delta,
        h_upper=h_up.headline(), h_lower=h_lo.headline(),
        i_upper=max(up.headline() for _, _, up in per_candidate),
        i_lower=best[1].headline(),
        slopes={"h_upper": h_up.slope, "h_lower": h_lo.slope,
                "i_lower": best[1].slope, "i_upper": best[2].slope},
        trajectories={"h_upper": h_up.trajectory, "h_lower": h_lo.trajectory,
                      "i_lower": best[1].trajectory, "i_upper": best[2].trajectory},
        flags=tuple(flags),
    )
    return summary, {"best_input": best[0], "candidates": per_candidate}


@dataclass
class ConverseDiagnostic:
    mode: str
    passes: bool
    gap: float | None
    tol: float
    rows: list
    flags: tuple = ()


def converse_property_diagnostic(model, n_grid, mode, *, channel=None,
                                 subsequences=None, delta: float = GAP_DELTA,
                                 eta: float = 0.1, tol: float = 0.05,
                                 input_candidates="auto", engine="auto",
                                 samples=None, seed=None) -> ConverseDiagnostic:
    """One-point-spectrum, subsequence and information-stability diagnostics.

    Gap diagnostics use quartile proxies by default: extreme quantiles at
    finite n confound mode location with sampling spread, quartiles sit
    inside the modes.
    """
    ns = sorted(n_grid)
    if mode == "source_strong":
        ent = _entropy_spectra(model, ns, engine=engine, samples=samples, seed=seed)
        up = plim_estimate(ent, "p_limsup", delta)
        lo = plim_estimate(ent, "p_liminf", delta)
        gap = up.headline() - lo.headline()
        rows = [(n, qlo, qup) for (n, qlo), (_, qup) in zip(lo.trajectory, up.trajectory)]
        return ConverseDiagnostic("source_strong", gap <= tol, gap, tol, rows)
    if mode == "channel_strong":
        summary, _ = spectral_functionals(
            _POINT_SOURCE, model, ns, input_candidates, delta,
            engine=engine, samples=samples, seed=seed,
        )
        gap = summary.i_upper - summary.i_lower
        return ConverseDiagnostic("channel_strong", gap <= tol, gap, tol,
                                  [summary.trajectories], summary.flags)
    if mode == "semi_strong_source":
        if not subsequences or any(len(s) < 2 for s in subsequences):
            raise ValueError("subsequence-empty: supply >= 2 block lengths per subsequence")
        full = plim_estimate(
            _entropy_spectra(model, ns, engine=engine, samples=samples, seed=seed),
            "p_limsup", delta,
        )
        rows = []
        values = []
        for sub in subsequences:
            proxy = plim_estimate(
                _entropy_spectra(model, sorted(sub), engine=engine, samples=samples, seed=seed),
                "p_limsup", delta,
            )
            rows.append((tuple(sub), proxy.headline()))
            values.append(proxy.headline())
        reference = full.headline()
        passes = all(abs(v - reference) <= tol for v in values)
        spread = max(values) - min(values)
        return ConverseDiagnostic("semi_strong_source", passes, spread, tol, rows)
    if mode == "semi_strong_channel":
        if channel is None:
            channel = model
        if not subsequences or any(len(s) < 2 for s in subsequences):
            raise ValueError("subsequence-empty: supply >= 2 block lengths per subsequence")
        summary, detail = spectral_functionals(
            _POINT_SOURCE, channel, ns, input_candidates, delta,
            engine=engine, samples=samples, seed=seed,
        )
        reference = summary.i_lower
        rows = []
        passes = True
        for sub in subsequences:
            sub_summary, _ = spectral_functionals(
                _POINT_SOURCE, channel, sorted(sub), input_candidates, delta,
                engine=engine, samples=samples, seed=seed,
            )
            rows.append((tuple(sub), sub_summary.i_lower))
            if sub_summary.i_lower > reference + tol:
                passes = False
        return ConverseDiagnostic("semi_strong_channel", passes, None, tol, rows,
                                  summary.flags)
    if mode == "info_stability":
        rows = []
        flags = []
        if channel is None:
            for n in ns:
                spec = _marginal_spectrum(model, None, None, n, "entropy",
                                          mode=engine, samples=samples, seed=seed)
                h_n = spec.mean()
                if h_n <= 1e-12:
                    flags.append(f"H_{n} ~ 0: ratio undefined")
                    continue
                prob = 1.0 - spec.mass_within(h_n, eta * h_n)
                rows.append((n, h_n, prob))
        else:
            comps = channel.product_components(ns[0])
            if comps is None or len(comps) != 1:
                raise ModelValidationError(
                    "info_stability for channels needs a per-letter matrix"
                )
            cap, r = dmc_capacity(comps[0][1])
            cand = FiniteDistribution(tuple(range(len(channel.x_alphabet))), r)
            if cap <= 1e-12:
                return ConverseDiagnostic("info_stability", False, None, tol, [],
                                          ("zero-capacity: ratio undefined",))
            for n, spec in zip(ns, _info_spectra(channel, cand, ns, engine=engine,
                                                 samples=samples, seed=seed)):
                prob = 1.0 - spec.mass_within(cap, eta * cap)
                rows.append((n, cap, prob))
        trend = [p for *_, p in rows]
        passes = bool(trend and trend[-1] <= tol)
        return ConverseDiagnostic("info_stability", passes, None, tol, rows, tuple(flags))
    raise ValueError(f"unknown diagnostic mode {mode!r}")


class _PointSource:
    """Stand-in source when only channel functionals are requested."""

    kind = "unit"

    def alphabet_at(self, n):
        return (0,)

    def product_components(self, n):
        return [(0.0, np.array([1.0]))]

    def is_product_form(self, n):
        return True

    def per_letter(self, n):
        return np.array([1.0])

    def support_size(self, n):
        return 1

    def iter_support(self, n):
        return iter([(0,) * n])

    def log_prob(self, n, word):
        return 0.0

    def tail_mass(self, n):
        return 0.0


_POINT_SOURCE = _PointSource()


# ---------------------------------------------------------------------------
# Separation verdict
# ---------------------------------------------------------------------------


@dataclass
class VerdictReport:
    verdict: str  # transmissible | not_transmissible | inconclusive
    r_f: float
    capacity: float
    c_n: float | None
    reason: str
    summary: SpectralSummary
    best_input: FiniteDistribution | None = None
    domination: ConditionReport | None = None
    diagnostics: list = field(default_factory=list)


def separation_verdict(source, channel, n_grid, input_candidates="auto", *,
                       delta: float = 1e-3, gap_tol: float = 0.05,
                       engine="auto", samples=None, seed=None,
                       confirm: bool = True, domination_grid=None,
                       gamma_schedule="inv_sqrt", tol=0.01) -> VerdictReport:
    """Compare the source rate proxy against the capacity proxy.

    A strict rate margin yields a transmissible verdict with the midpoint
    split c_n and a confirming strict-domination run.  The reverse margin
    is conclusive only when a strong-converse diagnostic passes on either
    side; otherwise the verdict stays inconclusive.
    """
    summary, detail = spectral_functionals(
        source, channel, n_grid, input_candidates, delta,
        engine=engine, samples=samples, seed=seed,
    )
    r_f = summary.h_upper
    capacity = summary.i_lower
    best_input = detail["best_input"]
    if r_f < capacity - 1e-12:
        c_n = 0.5 * (r_f + capacity)
        dom = None
        if confirm:
            grid = sorted(domination_grid) if domination_grid else sorted(n_grid)
            if len(grid) < 2:
                grid = sorted(set(grid + [max(grid) * 2]))
            dom = domination_check(
                source, IndependentCoupling(best_input), channel, grid,
                c_n, gamma_schedule, mode="strict", eps=0.0,
                engine=engine, samples=samples, seed=seed, tol=tol,
            )
        return VerdictReport(
            "transmissible", r_f, capacity, c_n,
            "rate proxy below capacity proxy; midpoint split emitted",
            summary, best_input, dom,
        )
    diagnostics = []
    if r_f > capacity + 1e-12:
        src_diag = converse_property_diagnostic(
            source, n_grid, "source_strong", engine=engine, samples=samples, seed=seed,
        )
        ch_diag = converse_property_diagnostic(
            channel, n_grid, "channel_strong", input_candidates=input_candidates,
            engine=engine, samples=samples, seed=seed,
        )
        diagnostics = [src_diag, ch_diag]
        if src_diag.passes or ch_diag.passes:
            return VerdictReport(
                "not_transmissible", r_f, capacity, None,
                "rate proxy above capacity with a one-point limiting spectrum on one side",
                summary, best_input, None, diagnostics,
            )
        return VerdictReport(
            "inconclusive", r_f, capacity, None,
            "rate above capacity but no converse property established; "
            "oscillating or multi-mode spectra can still be transmissible",
            summary, best_input, None, diagnostics,
        )
    return VerdictReport(
        "inconclusive", r_f, capacity, None,
        "rate and capacity proxies coincide within resolution",
        summary, best_input, None, diagnostics,
    )
