"""Entropy and mutual-information spectra.

The spectrum of a normalized density random variable is computed exactly by
per-letter atom convolution for product-form models, by full enumeration
under a cap otherwise, or estimated by seeded Monte Carlo.  Everything is
deterministic given (model, seed); Monte Carlo draws come from counter-based
substreams so results never depend on worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import (
    CapExceededError,
    MarginalUnavailableError,
    UndefinedDensityError,
    ZeroProbabilityError,
)
from .models import (
    NEG_INF,
    ChannelModel,
    JointSupport,
    SourceModel,
    UniformMessageSource,
    joint_support,
    logsumexp,
)

MERGE_TOL = 1e-12
MASS_ATOL = 1e-10
MASS_FLOOR = 1e-300  # below this, products have underflowed; drop the atom
ATOM_CAP = 1_000_000
WORK_CAP = 50_000_000
DEFAULT_ENUM_CAP = 10_000_000


# ---------------------------------------------------------------------------
# Atom merging and convolution
# ---------------------------------------------------------------------------


def _merge_atoms(values: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL):
    """Sort atoms and merge values equal within tol (mass-weighted representative).

    Atoms whose mass has underflowed toward zero are dropped up front; their
    subnormal products would otherwise corrupt the weighted representative.
    """
    live = masses > MASS_FLOOR
    if not live.all():
        values, masses = values[live], masses[live]
    values = values + 0.0  # normalize -0.0
    order = np.argsort(values, kind="stable")
    v = values[order]
    m = masses[order]
    if v.size == 0:
        return v, m
    breaks = np.nonzero(np.diff(v) > tol)[0] + 1
    starts = np.concatenate(([0], breaks))
    mass = np.add.reduceat(m, starts)
    vm = np.add.reduceat(v * m, starts)
    return vm / mass, mass


def _convolve_atoms(v1, m1, v2, m2, atom_cap=ATOM_CAP):
    if v1.size * v2.size > WORK_CAP:
        raise CapExceededError(f"cap-exceeded: convolution work {v1.size * v2.size}")
    v = (v1[:, None] + v2[None, :]).ravel()
    m = (m1[:, None] * m2[None, :]).ravel()
    v, m = _merge_atoms(v, m)
    if v.size > atom_cap:
        raise CapExceededError(f"cap-exceeded: {v.size} atoms > {atom_cap}")
    return v, m


def nfold_sum_atoms(values, masses, n: int, atom_cap: int = ATOM_CAP):
    """Distribution of the n-fold independent sum of a finite atom set."""
    values = np.asarray(values, dtype=float)
    masses = np.asarray(masses, dtype=float)
    values, masses = _merge_atoms(values, masses)
    result = None
    base = (values, masses)
    k = n
    while k:
        if k & 1:
            result = base if result is None else _convolve_atoms(*result, *base, atom_cap)
        k >>= 1
        if k:
            base = _convolve_atoms(*base, *base, atom_cap)
    return result


def _merge_pairs(a, b, m, tol: float = MERGE_TOL):
    live = m > MASS_FLOOR
    if not live.all():
        a, b, m = a[live], b[live], m[live]
    order = np.lexsort((b, a))
    a, b, m = a[order], b[order], m[order]
    if a.size == 0:
        return a, b, m
    breaks = np.nonzero((np.diff(a) > tol) | (np.abs(np.diff(b)) > tol))[0] + 1
    starts = np.concatenate(([0], breaks))
    mass = np.add.reduceat(m, starts)
    am = np.add.reduceat(a * m, starts) / mass
    bm = np.add.reduceat(b * m, starts) / mass
    return am, bm, mass


def _convolve_pairs(p1, p2, atom_cap=ATOM_CAP):
    a1, b1, m1 = p1
    a2, b2, m2 = p2
    if a1.size * a2.size > WORK_CAP:
        raise CapExceededError(f"cap-exceeded: pair convolution work {a1.size * a2.size}")
    a = (a1[:, None] + a2[None, :]).ravel()
    b = (b1[:, None] + b2[None, :]).ravel()
    m = (m1[:, None] * m2[None, :]).ravel()
    a, b, m = _merge_pairs(a, b, m)
    if a.size > atom_cap:
        raise CapExceededError(f"cap-exceeded: {a.size} joint atoms > {atom_cap}")
    return a, b, m


def nfold_sum_pairs(a, b, m, n: int, atom_cap: int = ATOM_CAP):
    base = _merge_pairs(np.asarray(a, float), np.asarray(b, float), np.asarray(m, float))
    result = None
    k = n
    while k:
        if k & 1:
            result = base if result is None else _convolve_pairs(result, base, atom_cap)
        k >>= 1
        if k:
            base = _convolve_pairs(base, base, atom_cap)
    return result


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------


@dataclass
class Spectrum:
    """Distribution of a normalized density variable at one block length.

    values are nats per symbol, ascending; -inf is the distinguished sentinel
    for zero-probability transitions and is the smallest possible value.
    """

    n: int
    values: np.ndarray
    masses: np.ndarray
    mode: str  # "exact" | "monte_carlo"
    seed: int | None = None
    sample_count: int | None = None
    taint: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.values.shape != self.masses.shape:
            raise ValueError("values and masses must align")
        if np.any(np.isnan(self.values)) or np.any(self.values == np.inf):
            raise ValueError("spectrum values must be finite or -inf")
        total = float(self.masses.sum())
        if abs(total - 1.0) > MASS_ATOL:
            raise ValueError(f"spectrum masses sum to {total!r}")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("spectrum values must be sorted ascending")
        self._cum = np.cumsum(self.masses)
        self._suffix = np.cumsum(self.masses[::-1])[::-1]

    @classmethod
    def from_atoms(cls, n, values, masses, mode="exact", seed=None, sample_count=None, taint=()):
        v, m = _merge_atoms(np.asarray(values, float), np.asarray(masses, float))
        return cls(n, v, m, mode, seed, sample_count, taint)

    @classmethod
    def from_samples(cls, n, samples, seed, taint=()):
        samples = np.asarray(samples, dtype=float)
        count = samples.size
        v, m = _merge_atoms(samples, np.full(count, 1.0 / count))
        return cls(n, v, m, "monte_carlo", seed=seed, sample_count=count, taint=taint)

    @property
    def atom_count(self) -> int:
        return int(self.values.size)

    def cdf(self, t: float) -> float:
        """Pr{value <= t}; -inf atoms always count."""
        idx = np.searchsorted(self.values, t, side="right")
        return float(self._cum[idx - 1]) if idx > 0 else 0.0

    def upper_cdf(self, t: float) -> float:
        """Pr{value >= t}; -inf atoms never satisfy this for finite t."""
        idx = np.searchsorted(self.values, t, side="left")
        return float(self._suffix[idx]) if idx < self.values.size else 0.0

    def quantile(self, q: float) -> float:
        """Smallest atom value whose cdf reaches q."""
        if not (0.0 <= q <= 1.0):
            raise ValueError(f"quantile level {q!r} outside [0, 1]")
        idx = int(np.searchsorted(self._cum, q - 1e-12, side="left"))
        idx = min(idx, self.values.size - 1)
        return float(self.values[idx])

    def interquantile_width(self, lo: float, hi: float) -> float:
        return self.quantile(hi) - self.quantile(lo)

    def mass_within(self, center: float, halfwidth: float) -> float:
        sel = np.abs(self.values - center) <= halfwidth + 1e-12
        return float(self.masses[sel].sum())

    def mean(self) -> float:
        return float((self.values * self.masses).sum())


def spectrum_query(spec: Spectrum, kind: str, t: float) -> float:
    """Uniform query surface: cdf, upper_cdf or quantile of a spectrum."""
    if kind == "cdf":
        return spec.cdf(t)
    if kind == "upper_cdf":
        return spec.upper_cdf(t)
    if kind == "quantile":
        return spec.quantile(t)
    raise ValueError(f"unknown query kind {kind!r}")


def tv_distance(s1: Spectrum, s2: Spectrum, value_tol: float = 1e-9) -> float:
    """Total variation after identifying atoms equal within value_tol."""
    values = np.concatenate([s1.values, s2.values])
    deltas = np.concatenate([s1.masses, -s2.masses])
    order = np.argsort(values, kind="stable")
    v, d = values[order], deltas[order]
    breaks = np.nonzero(np.diff(v) > value_tol)[0] + 1
    starts = np.concatenate(([0], breaks))
    net = np.add.reduceat(d, starts)
    return float(np.abs(net).sum() / 2.0)


def sup_cdf_distance(s1: Spectrum, s2: Spectrum, value_tol: float = 1e-9) -> float:
    """Kolmogorov distance between two atom spectra (lattices snapped at value_tol)."""
    grid = np.unique(np.concatenate([s1.values, s2.values]))
    f1 = np.concatenate(([0.0], s1._cum))[np.searchsorted(s1.values, grid + value_tol, side="right")]
    f2 = np.concatenate(([0.0], s2._cum))[np.searchsorted(s2.values, grid + value_tol, side="right")]
    return float(np.max(np.abs(f1 - f2)))


def dkw_epsilon(sample_count: int, alpha: float) -> float:
    """Half-width of the DKW confidence band at confidence 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * sample_count))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def entropy_density(source: SourceModel, n: int, word) -> float:
    """(1/n) ln 1/P_{V^n}(word) in nats per symbol."""
    lp = source.log_prob(n, tuple(word))
    if lp == NEG_INF:
        raise ZeroProbabilityError(f"word {word!r} outside the support of P_V^{n}")
    return -lp / n + 0.0


class OutputMarginal:
    """Exact or estimated P_{Y^n} with log-domain point queries."""

    taint: tuple = ()

    def log_prob(self, y_word) -> float:
        raise NotImplementedError


class MixtureProductOutputMarginal(OutputMarginal):
    """P_Y^n = sum_k w_k prod_t q_k(y_t); exact for product-form pipelines."""

    def __init__(self, n: int, components):
        self.n = n
        self.components = [(lw, np.asarray(q, float)) for lw, q in components]
        self._logs = [
            (lw, np.where(q > 0, np.log(np.maximum(q, 1e-300)), NEG_INF))
            for lw, q in self.components
        ]

    def log_prob(self, y_word):
        terms = []
        for lw, logq in self._logs:
            total = lw
            for y in y_word:
                lq = logq[y]
                if lq == NEG_INF:
                    total = NEG_INF
                    break
                total += lq
            terms.append(total)
        return logsumexp(np.array(terms))


class EnumeratedOutputMarginal(OutputMarginal):
    def __init__(self, n: int, table: dict):
        self.n = n
        self.table = {k: float(v) for k, v in table.items()}

    def log_prob(self, y_word):
        p = self.table.get(tuple(y_word), 0.0)
        return math.log(p) if p > 0 else NEG_INF


class EmpiricalOutputMarginal(OutputMarginal):
    """Plug-in marginal from sampled outputs; every consumer inherits the taint."""

    taint = ("approximate-marginal",)

    def __init__(self, n: int, counts: dict, total: int):
        self.n = n
        self.counts = counts
        self.total = total

    def log_prob(self, y_word):
        c = self.counts.get(tuple(y_word), 0)
        return math.log(c / self.total) if c else NEG_INF


def product_output_components(source, coupling, channel, n):
    """Per-letter output-law mixture [(log_w, q)] or None if not product form."""
    ch_comps = channel.product_components(n)
    if ch_comps is None:
        return None
    x_size = len(channel.x_alphabet)
    y_size = len(channel.y_alphabet)
    if coupling is not None and coupling.independent_of_source:
        r = coupling.input_dist.probs
        if r.size != x_size:
            return None
        return [(lw, r @ Wm) for lw, Wm in ch_comps]
    if source is None or coupling is None:
        return None
    src_comps = source.product_components(n)
    if src_comps is None:
        return None
    K = coupling.letter_matrix(n, len(source.alphabet_at(n)), x_size)
    if K is None:
        return None
    out = []
    for ls, p in src_comps:
        x_law = p @ K
        for lc, Wm in ch_comps:
            out.append((ls + lc, x_law @ Wm))
    return out


def output_marginal(source, coupling, channel, n, *, allow_empirical=False,
                    enumeration_cap=DEFAULT_ENUM_CAP, samples=200_000, seed=0) -> OutputMarginal:
    """Exact P_{Y^n} induced by the declared coupling, or a tainted estimate."""
    comps = product_output_components(source, coupling, channel, n)
    if comps is not None:
        return MixtureProductOutputMarginal(n, comps)
    try:
        support = joint_support(source, coupling, channel, n, cap=enumeration_cap)
        return EnumeratedOutputMarginal(n, support.y_marginal())
    except CapExceededError:
        pass
    if not allow_empirical:
        raise MarginalUnavailableError(
            "marginal-unavailable: exact P_Y not computable and plug-in estimation disabled"
        )
    counts: dict = {}
    for chunk_idx, count in rngmod.chunks(samples):
        gen = rngmod.substream(seed, "empirical-marginal", n, chunk_idx)
        v = source.sample_words(n, count, gen)
        x = coupling.sample_x(n, v, gen)
        y = channel.sample_outputs(n, x, gen)
        for row in y:
            key = tuple(int(i) for i in row)
            counts[key] = counts.get(key, 0) + 1
    return EmpiricalOutputMarginal(n, counts, samples)


def information_density(channel: ChannelModel, marginal: OutputMarginal, n: int,
                        x_word, y_word) -> float:
    """(1/n) ln W^n(y|x)/P_Y^n(y); -inf when the kernel vanishes on a live output."""
    lw = channel.log_kernel(n, tuple(x_word), tuple(y_word))
    lm = marginal.log_prob(tuple(y_word))
    if lw == NEG_INF and lm == NEG_INF:
        raise UndefinedDensityError(f"0/0 information density at y={y_word!r}")
    if lw == NEG_INF:
        return NEG_INF
    if lm == NEG_INF:
        raise UndefinedDensityError(f"kernel positive but marginal zero at y={y_word!r}")
    return (lw - lm) / n


# ---------------------------------------------------------------------------
# Exchangeable letter laws (exact product atoms + count-based Monte Carlo)
# ---------------------------------------------------------------------------


@dataclass
class _ExchangeableLaw:
    """Letterwise joint law of (v, x, y) triples with mixture structure.

    All block-level quantities depend on a word triple only through its
    letter-triple counts, so sampling reduces to multinomial draws.
    """

    n: int
    triple_probs: np.ndarray  # (K, T) per (source comp j x channel comp l)
    comp_log_w: np.ndarray  # (K,)
    src_log_w: np.ndarray  # (S,)
    src_logp: np.ndarray  # (S, T) letter log-likelihood of the v coordinate
    ch_log_w: np.ndarray  # (C,)
    ch_logp: np.ndarray  # (C, T) letter log-likelihood of y given x
    out_log_w: np.ndarray  # (K,)
    out_logp: np.ndarray  # (K, T) letter log-likelihood of y under q_{jl}

    def _contract(self, counts: np.ndarray, logp: np.ndarray) -> np.ndarray:
        finite = np.where(np.isfinite(logp), logp, 0.0)
        dots = counts @ finite.T
        bad = counts @ (~np.isfinite(logp)).astype(float).T > 0
        dots[bad] = NEG_INF
        return dots

    def _mix(self, dots: np.ndarray, log_w: np.ndarray) -> np.ndarray:
        return logsumexp(dots + log_w[None, :], axis=1)

    def values_from_counts(self, counts: np.ndarray):
        """(A, B) nats-per-symbol arrays for an (N, T) count matrix."""
        log_pv = self._mix(self._contract(counts, self.src_logp), self.src_log_w)
        log_w = self._mix(self._contract(counts, self.ch_logp), self.ch_log_w)
        log_py = self._mix(self._contract(counts, self.out_logp), self.out_log_w)
        a = (log_w - log_py) / self.n
        b = -log_pv / self.n
        return a, b

    def sample_counts(self, size: int, gen) -> np.ndarray:
        weights = np.exp(self.comp_log_w)
        comp = np.searchsorted(np.cumsum(weights), gen.random(size), side="right")
        comp = np.minimum(comp, weights.size - 1)
        counts = np.empty((size, self.triple_probs.shape[1]), dtype=np.int64)
        for k in range(weights.size):
            mask = comp == k
            if mask.any():
                counts[mask] = gen.multinomial(self.n, self.triple_probs[k], size=int(mask.sum()))
        return counts


def _exchangeable_law(source, coupling, channel, n) -> _ExchangeableLaw | None:
    src_comps = source.product_components(n)
    if src_comps is None:
        return None
    v_size = len(source.alphabet_at(n))
    if channel is None:
        # entropy-only law over the v coordinate
        src_log_w = np.array([lw for lw, _ in src_comps])
        src_logp = np.stack([
            np.where(p > 0, np.log(np.maximum(p, 1e-300)), NEG_INF) for _, p in src_comps
        ])
        probs = np.stack([p for _, p in src_comps])
        zeros = np.zeros((1, v_size))
        zero_w = np.zeros(1)
        return _ExchangeableLaw(
            n, probs, src_log_w, src_log_w, src_logp,
            zero_w, zeros[:1], zero_w, zeros[:1],
        )
    ch_comps = channel.product_components(n)
    if ch_comps is None:
        return None
    x_size = len(channel.x_alphabet)
    y_size = len(channel.y_alphabet)
    K = coupling.letter_matrix(n, v_size, x_size) if coupling is not None else None
    if K is None:
        return None
    src_w = np.array([lw for lw, _ in src_comps])
    ch_w = np.array([lw for lw, _ in ch_comps])
    src_p = [p for _, p in src_comps]
    ch_m = [m for _, m in ch_comps]

    # keep only triples live under at least one component pair
    any_v = np.zeros(v_size)
    for p in src_p:
        any_v = np.maximum(any_v, p)
    any_w = np.zeros((x_size, y_size))
    for m in ch_m:
        any_w = np.maximum(any_w, m)
    live = []
    for v in range(v_size):
        if any_v[v] == 0:
            continue
        for x in range(x_size):
            if K[v, x] == 0:
                continue
            for y in range(y_size):
                if any_w[x, y] > 0:
                    live.append((v, x, y))
    triples = np.array(live, dtype=np.int64)
    tv, tx, ty = triples[:, 0], triples[:, 1], triples[:, 2]

    def _log(vec):
        return np.where(vec > 0, np.log(np.maximum(vec, 1e-300)), NEG_INF)

    src_logp = np.stack([_log(p[tv]) for p in src_p])
    ch_logp = np.stack([_log(m[tx, ty]) for m in ch_m])
    out_w, out_logp, comp_w, comp_probs = [], [], [], []
    for ls, p in zip(src_w, src_p):
        x_law = p @ K
        for lc, m in zip(ch_w, ch_m):
            q = x_law @ m
            out_w.append(ls + lc)
            out_logp.append(_log(q[ty]))
            comp_w.append(ls + lc)
            comp_probs.append(p[tv] * K[tv, tx] * m[tx, ty])
    return _ExchangeableLaw(
        n,
        np.stack(comp_probs),
        np.array(comp_w),
        src_w,
        src_logp,
        ch_w,
        ch_logp,
        np.array(out_w),
        np.stack(out_logp),
    )


# ---------------------------------------------------------------------------
# Enumerated joint laws
# ---------------------------------------------------------------------------


@dataclass
class EnumeratedJoint:
    """Word-level joint law with per-atom densities; the tiny-n workhorse."""

    n: int
    support: JointSupport
    a: np.ndarray
    b: np.ndarray
    log_kernel: np.ndarray
    y_ids: np.ndarray
    y_words: list
    y_log_marginal: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return self.support.probs


def enumerate_joint(source, coupling, channel, n, cap=DEFAULT_ENUM_CAP) -> EnumeratedJoint:
    support = joint_support(source, coupling, channel, n, cap=cap)
    y_index: dict = {}
    y_ids = np.empty(len(support.probs), dtype=np.int64)
    for i, y in enumerate(support.y_words):
        y_ids[i] = y_index.setdefault(y, len(y_index))
    y_words = [None] * len(y_index)
    for y, idx in y_index.items():
        y_words[idx] = y
    y_marg = np.zeros(len(y_index))
    np.add.at(y_marg, y_ids, support.probs)
    y_log = np.where(y_marg > 0, np.log(np.maximum(y_marg, 1e-300)), NEG_INF)
    log_kernel = np.array([
        channel.log_kernel(n, x, y) for x, y in zip(support.x_words, support.y_words)
    ])
    b = np.array([-source.log_prob(n, v) / n for v in support.v_words])
    a = (log_kernel - y_log[y_ids]) / n
    return EnumeratedJoint(n, support, a, b, log_kernel, y_ids, y_words, y_log)


def enumerate_entropy_atoms(source, n, cap=DEFAULT_ENUM_CAP):
    if source.support_size(n) > cap:
        raise CapExceededError(
            f"cap-exceeded: source support {source.support_size(n)} > {cap}"
        )
    values, masses = [], []
    for word in source.iter_support(n):
        lp = source.log_prob(n, word)
        if lp == NEG_INF:
            continue
        values.append(-lp / n)
        masses.append(math.exp(lp))
    return np.array(values), np.array(masses)


# ---------------------------------------------------------------------------
# Spectrum engines
# ---------------------------------------------------------------------------


def exact_spectrum(n: int, which: str, *, source=None, coupling=None, channel=None,
                   atom_cap: int = ATOM_CAP, enumeration_cap: int = DEFAULT_ENUM_CAP) -> Spectrum:
    """Exact spectrum by per-letter convolution (product form) or enumeration."""
    if which == "entropy":
        if source is None:
            raise ValueError("entropy spectrum needs a source")
        if isinstance(source, UniformMessageSource):
            return Spectrum.from_atoms(n, [source.entropy_point(n)], [1.0])
        if source.is_product_form(n):
            p = source.per_letter(n)
            live = p > 0
            vals, mass = nfold_sum_atoms(-np.log(p[live]), p[live], n, atom_cap)
            return Spectrum.from_atoms(n, vals / n, mass)
        vals, mass = enumerate_entropy_atoms(source, n, enumeration_cap)
        return Spectrum.from_atoms(n, vals, mass)
    if which == "information":
        if channel is None or coupling is None:
            raise ValueError("information spectrum needs a channel and a coupling")
        law = None
        if source is not None:
            law = _exchangeable_law(source, coupling, channel, n)
        if law is None and coupling.independent_of_source:
            law = _channel_only_law(coupling, channel, n)
        if law is not None and law.comp_log_w.size == 1:
            t_probs = law.triple_probs[0]
            a_letter = law.ch_logp[0] - law.out_logp[0]
            vals, mass = nfold_sum_atoms(a_letter, t_probs, n, atom_cap)
            return Spectrum.from_atoms(n, vals / n, mass)
        if source is None:
            raise CapExceededError("not-product-form-and-cap-exceeded: no source to enumerate")
        joint = enumerate_joint(source, coupling, channel, n, enumeration_cap)
        return Spectrum.from_atoms(n, joint.a, joint.probs)
    raise ValueError(f"unknown spectrum kind {which!r}")


class _UnitSource(SourceModel):
    """One-symbol point source; turns channel-only laws into the triple machinery."""

    kind = "unit"

    def alphabet_at(self, n):
        return (0,)

    def log_prob(self, n, word):
        return 0.0

    def support_size(self, n):
        return 1

    def iter_support(self, n):
        return iter([(0,) * n])

    def product_components(self, n):
        return [(0.0, np.array([1.0]))]

    def sample_words(self, n, size, rng):
        return np.zeros((size, n), dtype=np.int64)


_UNIT_SOURCE = _UnitSource()


def _channel_only_law(coupling, channel, n) -> _ExchangeableLaw | None:
    """Information law for a source-independent product input: triples over (x, y)."""
    if not coupling.independent_of_source:
        return None
    return _exchangeable_law(_UNIT_SOURCE, coupling, channel, n)


def mc_spectrum(n: int, which: str, *, source=None, coupling=None, channel=None,
                samples: int, seed: int,
                enumeration_cap: int = DEFAULT_ENUM_CAP) -> Spectrum:
    """Seeded Monte Carlo spectrum with exactly `samples` draws."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if which == "entropy":
        if isinstance(source, UniformMessageSource):
            point = source.entropy_point(n)
            return Spectrum.from_samples(n, np.full(samples, point), seed)
        law = _exchangeable_law(source, None, None, n)
        if law is not None:
            out = np.empty(samples)
            pos = 0
            for chunk_idx, count in rngmod.chunks(samples):
                gen = rngmod.substream(seed, "entropy", n, chunk_idx)
                counts = law.sample_counts(count, gen)
                _, b = law.values_from_counts(counts)
                out[pos:pos + count] = b
                pos += count
            return Spectrum.from_samples(n, out, seed)
        vals, mass = enumerate_entropy_atoms(source, n, enumeration_cap)
        out = _sample_from_atoms(vals, mass, samples, seed, ("entropy-enum", n))
        return Spectrum.from_samples(n, out, seed)
    if which == "information":
        law = joint_density_law(
            source=source, coupling=coupling, channel=channel, n=n,
            mode="monte_carlo", samples=samples, seed=seed,
            enumeration_cap=enumeration_cap,
        )
        return law.marginal("information")
    raise ValueError(f"unknown spectrum kind {which!r}")


def _sample_from_atoms(values, masses, samples, seed, label):
    cum = np.cumsum(masses)
    out = np.empty(samples)
    pos = 0
    for chunk_idx, count in rngmod.chunks(samples):
        gen = rngmod.substream(seed, *label, chunk_idx)
        idx = np.searchsorted(cum, gen.random(count) * cum[-1], side="right")
        out[pos:pos + count] = values[np.minimum(idx, values.size - 1)]
        pos += count
    return out


# ---------------------------------------------------------------------------
# Joint law of (information density, entropy density)
# ---------------------------------------------------------------------------


@dataclass
class JointDensityLaw:
    """Law of the pair (A, B) = (information density, entropy density) at one n."""

    n: int
    mode: str
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    mass: np.ndarray | None = None
    spec_a: Spectrum | None = None
    spec_b: Spectrum | None = None
    independent: bool = False
    seed: int | None = None
    taint: tuple = ()

    def prob_a_le_b_plus(self, gamma: float) -> float:
        """Pr{A <= B + gamma} on the joint law."""
        if self.independent:
            idx = np.searchsorted(self.spec_a.values, self.spec_b.values + gamma, side="right")
            cum = np.concatenate(([0.0], self.spec_a._cum))
            return float((self.spec_b.masses * cum[idx]).sum())
        return float(self.mass[self.a <= self.b + gamma].sum())

    def marginal(self, which: str) -> Spectrum:
        if self.independent:
            return self.spec_a if which == "information" else self.spec_b
        vals = self.a if which == "information" else self.b
        return Spectrum.from_atoms(
            self.n, vals, self.mass, mode=self.mode, seed=self.seed,
            sample_count=None if self.mode == "exact" else self.mass.size,
            taint=self.taint,
        )

    @property
    def atom_count(self) -> int:
        if self.independent:
            return self.spec_a.atom_count * self.spec_b.atom_count
        return int(self.mass.size)


def joint_density_law(*, source, coupling, channel, n, mode="auto",
                      samples=None, seed=None,
                      atom_cap: int = ATOM_CAP,
                      enumeration_cap: int = DEFAULT_ENUM_CAP) -> JointDensityLaw:
    """Build the joint (A, B) law exactly when feasible, by Monte Carlo otherwise."""
    want_exact = mode in ("auto", "exact")
    if want_exact:
        law = _try_exact_joint(source, coupling, channel, n, atom_cap, enumeration_cap)
        if law is not None:
            return law
        if mode == "exact":
            raise CapExceededError(
                "cap-exceeded: exact joint law unavailable (not product-form, support too large)"
            )
    if samples is None or seed is None:
        raise CapExceededError(
            "cap-exceeded: exact joint law unavailable and no Monte Carlo budget given"
        )
    return _mc_joint(source, coupling, channel, n, samples, seed, enumeration_cap)


def _try_exact_joint(source, coupling, channel, n, atom_cap, enumeration_cap):
    # independent coupling: A and B are exactly independent, keep marginals
    if coupling is not None and coupling.independent_of_source:
        try:
            spec_b = exact_spectrum(n, "entropy", source=source,
                                    atom_cap=atom_cap, enumeration_cap=enumeration_cap)
            spec_a = exact_spectrum(n, "information", source=source, coupling=coupling,
                                    channel=channel, atom_cap=atom_cap,
                                    enumeration_cap=enumeration_cap)
            return JointDensityLaw(n, "exact", spec_a=spec_a, spec_b=spec_b, independent=True)
        except CapExceededError:
            pass
    law = _exchangeable_law(source, coupling, channel, n)
    if law is not None and law.comp_log_w.size == 1:
        a_letter = law.ch_logp[0] - law.out_logp[0]
        b_letter = -law.src_logp[0]
        try:
            a, b, mass = nfold_sum_pairs(a_letter, b_letter, law.triple_probs[0], n, atom_cap)
            return JointDensityLaw(n, "exact", a=a / n, b=b / n, mass=mass)
        except CapExceededError:
            pass
    try:
        joint = enumerate_joint(source, coupling, channel, n, cap=enumeration_cap)
        return JointDensityLaw(n, "exact", a=joint.a, b=joint.b, mass=joint.probs)
    except CapExceededError:
        return None


def _mc_joint(source, coupling, channel, n, samples, seed, enumeration_cap):
    if isinstance(source, UniformMessageSource):
        b_point = source.entropy_point(n)
        law = _channel_only_law(coupling, channel, n) if coupling.independent_of_source else None
        if law is not None:
            a = _mc_exchangeable(law, samples, seed, n, want="a")
            return JointDensityLaw(
                n, "monte_carlo", a=a, b=np.full(samples, b_point),
                mass=np.full(samples, 1.0 / samples), seed=seed,
            )
    law = _exchangeable_law(source, coupling, channel, n)
    if law is not None:
        a, b = _mc_exchangeable(law, samples, seed, n, want="ab")
        return JointDensityLaw(
            n, "monte_carlo", a=a, b=b, mass=np.full(samples, 1.0 / samples), seed=seed,
        )
    joint = enumerate_joint(source, coupling, channel, n, cap=enumeration_cap)
    cum = np.cumsum(joint.probs)
    a = np.empty(samples)
    b = np.empty(samples)
    pos = 0
    for chunk_idx, count in rngmod.chunks(samples):
        gen = rngmod.substream(seed, "joint-enum", n, chunk_idx)
        idx = np.searchsorted(cum, gen.random(count) * cum[-1], side="right")
        idx = np.minimum(idx, joint.probs.size - 1)
        a[pos:pos + count] = joint.a[idx]
        b[pos:pos + count] = joint.b[idx]
        pos += count
    return JointDensityLaw(
        n, "monte_carlo", a=a, b=b, mass=np.full(samples, 1.0 / samples), seed=seed,
    )


def _mc_exchangeable(law: _ExchangeableLaw, samples, seed, n, want="ab"):
    a = np.empty(samples)
    b = np.empty(samples)
    pos = 0
    for chunk_idx, count in rngmod.chunks(samples):
        gen = rngmod.substream(seed, "joint", n, chunk_idx)
        counts = law.sample_counts(count, gen)
        av, bv = law.values_from_counts(counts)
        a[pos:pos + count] = av
        b[pos:pos + count] = bv
        pos += count
    if want == "a":
        return a
    return a, b


# ---------------------------------------------------------------------------
# p-lim proxies
# ---------------------------------------------------------------------------


@dataclass
class PLimProxy:
    """Finite-n stand-in for a limit in probability: extreme quantile at the largest n."""

    which: str
    delta: float
    estimate: float
    trajectory: list  # [(n, quantile)]
    monotone: bool
    slope: float

    def tail_extreme(self) -> float:
        """Full-sequence convention for oscillating families: extreme over the top half."""
        tail = [q for _, q in self.trajectory[len(self.trajectory) // 2:]]
        return max(tail) if self.which == "p_limsup" else min(tail)

    def headline(self) -> float:
        return self.estimate if self.monotone else self.tail_extreme()


def plim_estimate(spectra: Sequence[Spectrum], which: str, delta: float = 1e-3) -> PLimProxy:
    """Quantile-proxy estimate of a p-lim sup / p-lim inf over an n-grid."""
    if len(spectra) < 2:
        raise ValueError("p-lim proxy needs at least two block lengths")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if which not in ("p_limsup", "p_liminf"):
        raise ValueError(f"unknown p-lim kind {which!r}")
    level = 1.0 - delta if which == "p_limsup" else delta
    trajectory = sorted((s.n, s.quantile(level)) for s in spectra)
    values = np.array([q for _, q in trajectory])
    ns = np.array([n for n, _ in trajectory], dtype=float)
    diffs = np.diff(values)
    monotone = bool(np.all(diffs >= -1e-9) or np.all(diffs <= 1e-9))
    slope = float(np.polyfit(ns, values, 1)[0]) if len(values) > 1 else 0.0
    return PLimProxy(which, delta, float(values[-1]), trajectory, monotone, slope)


@dataclass
class SpectralSummary:
    """Headline spectral functionals over an n-grid."""

    n_grid: tuple
    delta: float
    h_upper: float
    h_lower: float
    i_upper: float | None
    i_lower: float | None
    slopes: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        if self.h_lower > self.h_upper + 1e-9:
            raise ValueError("entropy p-lim proxies out of order")
        if self.i_lower is not None and self.i_upper is not None:
            if self.i_lower > self.i_upper + 1e-9:
                raise ValueError("information p-lim proxies out of order")
