"""Random-coding achievability, the converse lower bound, and exact oracles.

The threshold decoder accepts an output y iff exactly one candidate word has
information density exceeding its entropy density plus gamma.  Ambiguity
(zero or several candidates) is scored as an error, which keeps the
union-bound accounting behind the achievability bound valid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import CapExceededError, InvariantViolationError
from .models import (
    NEG_INF,
    DeterministicCoupling,
    joint_support,
)
from .spectra import (
    OutputMarginal,
    joint_density_law,
    output_marginal,
)

ORACLE_CAP = 1_000_000
ENSEMBLE_CAP = 1_000_000


class _Ambiguous:
    def __repr__(self):
        return "AMBIGUOUS"


AMBIGUOUS = _Ambiguous()


@dataclass(frozen=True)
class Codebook:
    """Realized encoder table with its generation record."""

    n: int
    words: tuple
    codewords: tuple
    kernel_kind: str
    seed: int | None = None
    substream_indices: tuple = ()

    def encode(self, v_word):
        return self.codewords[self.words.index(tuple(v_word))]


@dataclass
class CodeTrialReport:
    """Outcome of one bound evaluation or decoding experiment."""

    n: int
    gamma: float
    mode: str  # exact | exact_ensemble | monte_carlo | fixed_code
    prob_term: float
    exp_term: float
    bound: float
    raw_bound: float
    epsilon: float | None = None
    best_epsilon: float | None = None
    ci_half_width: float | None = None
    seed: int | None = None
    taint: tuple = ()

    def __post_init__(self):
        if self.epsilon is not None and not (-1e-12 <= self.epsilon <= 1 + 1e-12):
            raise ValueError(f"error probability {self.epsilon!r} outside [0, 1]")
        if not (-1e-12 <= self.bound <= 1 + 1e-12):
            raise ValueError(f"clipped bound {self.bound!r} outside [0, 1]")


def generate_codebook(source, coupling, n, seed, trial: int = 0) -> Codebook:
    """Draw one codeword per support word, each from its own substream."""
    words = tuple(source.iter_support(n))
    codewords = []
    indices = []
    for i, word in enumerate(words):
        stream = trial * len(words) + i
        gen = rngmod.substream(seed, "codeword", stream)
        x = coupling.sample_x(n, np.array([word], dtype=np.int64), gen)[0]
        codewords.append(tuple(int(s) for s in x))
        indices.append(stream)
    return Codebook(n, words, tuple(codewords), coupling.kind, seed, tuple(indices))


def threshold_decode(codebook: Codebook, source, channel, marginal: OutputMarginal,
                     gamma: float, y_word):
    """Unique-candidate threshold rule; AMBIGUOUS when zero or several pass."""
    n = codebook.n
    y_word = tuple(y_word)
    log_py = marginal.log_prob(y_word)
    hit = None
    for word, x_word in zip(codebook.words, codebook.codewords):
        lw = channel.log_kernel(n, x_word, y_word)
        if lw == NEG_INF:
            continue
        lhs = lw - log_py
        rhs = -source.log_prob(n, word) + n * gamma
        if lhs > rhs:
            if hit is not None:
                return AMBIGUOUS
            hit = word
    return hit if hit is not None else AMBIGUOUS


def feinstein_bound(source, coupling, channel, n, gamma, *, mode="auto",
                    samples=None, seed=None,
                    atom_cap=None, enumeration_cap=None) -> CodeTrialReport:
    """Achievability bound: Pr{A <= B + gamma} + e^{-n gamma}, on the joint law."""
    kwargs = {}
    if atom_cap is not None:
        kwargs["atom_cap"] = atom_cap
    if enumeration_cap is not None:
        kwargs["enumeration_cap"] = enumeration_cap
    law = joint_density_law(source=source, coupling=coupling, channel=channel, n=n,
                            mode=mode, samples=samples, seed=seed, **kwargs)
    prob = law.prob_a_le_b_plus(gamma)
    exp_term = math.exp(-n * gamma)
    raw = prob + exp_term
    return CodeTrialReport(
        n=n, gamma=gamma, mode=law.mode, prob_term=prob, exp_term=exp_term,
        bound=min(1.0, raw), raw_bound=raw, seed=law.seed, taint=law.taint,
    )


# ---------------------------------------------------------------------------
# Ensemble machinery
# ---------------------------------------------------------------------------


@dataclass
class _EnsembleTables:
    words: list
    pv: np.ndarray
    thresholds: np.ndarray  # -ln P_v + n*gamma
    x_words: list
    x_index: dict
    y_words: list
    w_probs: np.ndarray  # (X, Y) kernel mass
    passes: np.ndarray  # (X, S, Y) threshold indicators
    options: list  # per word: [(x_id, prob)]


def _ensemble_tables(source, coupling, channel, n, gamma, cap) -> _EnsembleTables:
    words = list(source.iter_support(n))
    pv = np.array([math.exp(source.log_prob(n, w)) for w in words])
    n_books = 1
    options_raw = []
    for w in words:
        opts = list(coupling.iter_x(n, w))
        options_raw.append(opts)
        n_books *= len(opts)
        if n_books > cap:
            raise CapExceededError(f"cap-exceeded: ensemble would enumerate > {cap} codebooks")
    marg = output_marginal(source, coupling, channel, n)
    x_index: dict = {}
    for opts in options_raw:
        for x, _ in opts:
            x_index.setdefault(tuple(x), len(x_index))
    x_words = [None] * len(x_index)
    for x, i in x_index.items():
        x_words[i] = x
    y_set: dict = {}
    for x in x_words:
        for y, _ in channel.iter_outputs(n, x):
            y_set.setdefault(tuple(y), len(y_set))
    y_words = [None] * len(y_set)
    for y, i in y_set.items():
        y_words[i] = y
    w_probs = np.zeros((len(x_words), len(y_words)))
    for xi, x in enumerate(x_words):
        for y, p in channel.iter_outputs(n, x):
            w_probs[xi, y_set[tuple(y)]] = p
    log_py = np.array([marg.log_prob(y) for y in y_words])
    with np.errstate(divide="ignore"):
        log_w = np.where(w_probs > 0, np.log(np.maximum(w_probs, 1e-300)), NEG_INF)
    thresholds = np.array([-source.log_prob(n, w) + n * gamma for w in words])
    # passes[x, v, y]: candidate v with codeword x accepted at output y
    passes = (log_w[:, None, :] - log_py[None, None, :]) > thresholds[None, :, None]
    options = [[(x_index[tuple(x)], p) for x, p in opts] for opts in options_raw]
    return _EnsembleTables(words, pv, thresholds, x_words, x_index, y_words,
                           w_probs, passes, options)


def _codebook_error(tables: _EnsembleTables, x_ids: np.ndarray) -> float:
    """Exact decoding-error probability of one realized codebook."""
    S = len(tables.words)
    pass_matrix = tables.passes[x_ids, np.arange(S), :]  # (S, Y)
    unique = pass_matrix.sum(axis=0) == 1
    decoded = np.argmax(pass_matrix, axis=0)
    y_ids = np.nonzero(unique)[0]
    if y_ids.size == 0:
        return 1.0
    d = decoded[y_ids]
    correct = tables.pv[d] * tables.w_probs[x_ids[d], y_ids]
    return float(1.0 - correct.sum())


def random_code_ensemble_error(source, coupling, channel, n, gamma, *, mode,
                               budget=None, seed=None,
                               ensemble_cap=ENSEMBLE_CAP) -> CodeTrialReport:
    """Average threshold-decoder error over the random codebook ensemble.

    exact_ensemble enumerates every codebook weighted by its generation
    probability; monte_carlo draws `budget` codebooks from substreams.
    The exact average is asserted against the achievability bound.
    """
    bound_report = feinstein_bound(source, coupling, channel, n, gamma, mode="exact")
    tables = _ensemble_tables(source, coupling, channel, n, gamma, ensemble_cap)
    S = len(tables.words)
    if mode == "exact_ensemble":
        total = 0.0
        best = 1.0
        for combo in itertools.product(*tables.options):
            x_ids = np.fromiter((c[0] for c in combo), dtype=np.int64, count=S)
            weight = 1.0
            for _, p in combo:
                weight *= p
            eps = _codebook_error(tables, x_ids)
            total += weight * eps
            best = min(best, eps)
        if total > bound_report.bound + 1e-10:
            raise InvariantViolationError(
                f"ensemble error {total!r} exceeds achievability bound {bound_report.bound!r}"
            )
        return CodeTrialReport(
            n=n, gamma=gamma, mode="exact_ensemble",
            prob_term=bound_report.prob_term, exp_term=bound_report.exp_term,
            bound=bound_report.bound, raw_bound=bound_report.raw_bound,
            epsilon=total, best_epsilon=best, seed=seed,
        )
    if mode == "monte_carlo":
        if not budget or budget < 1:
            raise ValueError("zero-budget: monte_carlo mode needs budget >= 1")
        errors = np.empty(budget)
        best = 1.0
        for t in range(budget):
            x_ids = np.empty(S, dtype=np.int64)
            for i, word in enumerate(tables.words):
                gen = rngmod.substream(seed, "codeword", t * S + i)
                x = coupling.sample_x(n, np.array([word], dtype=np.int64), gen)[0]
                x_ids[i] = tables.x_index[tuple(int(s) for s in x)]
            errors[t] = _codebook_error(tables, x_ids)
            best = min(best, errors[t])
        mean = float(errors.mean())
        half = float(1.96 * errors.std(ddof=1) / math.sqrt(budget)) if budget > 1 else None
        return CodeTrialReport(
            n=n, gamma=gamma, mode="monte_carlo",
            prob_term=bound_report.prob_term, exp_term=bound_report.exp_term,
            bound=bound_report.bound, raw_bound=bound_report.raw_bound,
            epsilon=mean, best_epsilon=best, ci_half_width=half, seed=seed,
        )
    raise ValueError(f"unknown ensemble mode {mode!r}")


# ---------------------------------------------------------------------------
# Converse bound and fixed codes
# ---------------------------------------------------------------------------


def _as_encoder(encoder, source, n) -> DeterministicCoupling:
    if isinstance(encoder, DeterministicCoupling):
        return encoder
    if isinstance(encoder, dict):
        return DeterministicCoupling.table({tuple(k): tuple(v) for k, v in encoder.items()})
    if callable(encoder):
        table = {tuple(w): tuple(encoder(tuple(w))) for w in source.iter_support(n)}
        return DeterministicCoupling.table(table)
    raise TypeError("encoder must be a coupling, mapping or callable")


def exact_code_error(source, channel, n, encoder, decoder,
                     enumeration_cap=None) -> float:
    """Exact Pr{V != psi(Y)} for a deterministic (encoder, decoder) pair."""
    coupling = _as_encoder(encoder, source, n)
    kwargs = {"cap": enumeration_cap} if enumeration_cap else {}
    support = joint_support(source, coupling, channel, n, **kwargs)
    decode = decoder if callable(decoder) else (lambda y: tuple(decoder[tuple(y)]))
    correct = 0.0
    for v, y, p in zip(support.v_words, support.y_words, support.probs):
        if tuple(decode(y)) == v:
            correct += float(p)
    return 1.0 - correct


def verdu_han_bound(source, channel, n, gamma, *, encoder, decoder=None,
                    enumeration_cap=None) -> CodeTrialReport:
    """Converse lower bound Pr{A <= B - gamma} - e^{-n gamma} for a fixed encoder.

    When a decoder is supplied the exact error probability is evaluated and
    asserted to dominate the bound; otherwise only the bound is returned.
    """
    coupling = _as_encoder(encoder, source, n)
    kwargs = {"enumeration_cap": enumeration_cap} if enumeration_cap else {}
    law = joint_density_law(source=source, coupling=coupling, channel=channel,
                            n=n, mode="exact", **kwargs)
    prob = law.prob_a_le_b_plus(-gamma)
    exp_term = math.exp(-n * gamma)
    raw = prob - exp_term
    bound = max(0.0, raw)
    epsilon = None
    if decoder is not None:
        epsilon = exact_code_error(source, channel, n, coupling, decoder, enumeration_cap)
        if epsilon < bound - 1e-12:
            raise InvariantViolationError(
                f"exact error {epsilon!r} undercuts converse bound {bound!r}"
            )
    return CodeTrialReport(
        n=n, gamma=gamma, mode="fixed_code", prob_term=prob, exp_term=exp_term,
        bound=bound, raw_bound=raw, epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleReport:
    """Exact error of every (encoder, decoder) pair on a tiny instance."""

    n: int
    words: list
    x_space: list
    y_space: list
    pv: np.ndarray
    w_probs: np.ndarray  # (X, Y)
    encoder_count: int
    decoder_count: int
    min_epsilon: float
    best_encoder: dict
    best_decoder: dict
    eps_by_encoder: list = field(repr=False)  # per encoder: (n_dec,) error array
    encoders: list = field(repr=False)

    def iter_codes(self):
        """Yield (encoder_map, decoder_map, epsilon) over the full code table."""
        decoders = list(itertools.product(range(len(self.words)), repeat=len(self.y_space)))
        for enc, eps_row in zip(self.encoders, self.eps_by_encoder):
            enc_map = {w: self.x_space[xi] for w, xi in zip(self.words, enc)}
            for dec, eps in zip(decoders, eps_row):
                dec_map = {y: self.words[vi] for y, vi in zip(self.y_space, dec)}
                yield enc_map, dec_map, float(eps)

    def converse_margins(self, source, channel, gamma) -> tuple[float, int]:
        """(worst margin, violations) of exact error vs the converse bound, all pairs."""
        worst = math.inf
        violations = 0
        for enc, eps_row in zip(self.encoders, self.eps_by_encoder):
            x_ids = np.asarray(enc)
            py = self.pv @ self.w_probs[x_ids]
            with np.errstate(divide="ignore"):
                log_py = np.where(py > 0, np.log(np.maximum(py, 1e-300)), NEG_INF)
                log_w = np.where(self.w_probs > 0,
                                 np.log(np.maximum(self.w_probs, 1e-300)), NEG_INF)
                log_pv = np.where(self.pv > 0, np.log(np.maximum(self.pv, 1e-300)), NEG_INF)
            joint = self.pv[:, None] * self.w_probs[x_ids]
            with np.errstate(invalid="ignore"):
                a = (log_w[x_ids] - log_py[None, :]) / self.n
            b = (-log_pv / self.n)[:, None]
            event = (joint > 0) & (a <= b - gamma)
            prob = float(joint[event].sum())
            bound = max(0.0, prob - math.exp(-self.n * gamma))
            margin = float(eps_row.min() - bound)
            worst = min(worst, margin)
            violations += int((eps_row < bound - 1e-12).sum())
        return worst, violations


def exhaustive_code_oracle(source, channel, n, oracle_cap=ORACLE_CAP) -> OracleReport:
    """Enumerate every deterministic code and its exact error probability."""
    words = list(source.iter_support(n))
    S = len(words)
    pv = np.array([math.exp(source.log_prob(n, w)) for w in words])
    x_space = list(itertools.product(range(len(channel.x_alphabet)), repeat=n))
    y_space_set: dict = {}
    for x in x_space:
        for y, _ in channel.iter_outputs(n, x):
            y_space_set.setdefault(tuple(y), len(y_space_set))
    y_space = [None] * len(y_space_set)
    for y, i in y_space_set.items():
        y_space[i] = y
    n_enc = len(x_space) ** S
    n_dec = S ** len(y_space)
    if n_enc * n_dec > oracle_cap:
        raise CapExceededError(
            f"cap-exceeded: {n_enc} encoders x {n_dec} decoders > {oracle_cap}"
        )
    w_probs = np.zeros((len(x_space), len(y_space)))
    for xi, x in enumerate(x_space):
        for y, p in channel.iter_outputs(n, x):
            w_probs[xi, y_space_set[tuple(y)]] = p
    decoders = np.array(list(itertools.product(range(S), repeat=len(y_space))), dtype=np.int64)
    y_range = np.arange(len(y_space))
    min_eps = math.inf
    best_enc = best_dec = None
    eps_by_encoder = []
    encoders = list(itertools.product(range(len(x_space)), repeat=S))
    for enc in encoders:
        G = pv[:, None] * w_probs[np.asarray(enc)]  # (S, Y) mass of correct decisions
        eps_all = 1.0 - G[decoders, y_range[None, :]].sum(axis=1)
        eps_by_encoder.append(eps_all)
        idx = int(np.argmin(eps_all))
        if eps_all[idx] < min_eps:
            min_eps = float(eps_all[idx])
            best_enc = {w: x_space[xi] for w, xi in zip(words, enc)}
            best_dec = {y: words[vi] for y, vi in zip(y_space, decoders[idx])}
    return OracleReport(
        n=n, words=words, x_space=x_space, y_space=y_space, pv=pv, w_probs=w_probs,
        encoder_count=n_enc, decoder_count=n_dec, min_epsilon=min_eps,
        best_encoder=best_enc, best_decoder=best_dec,
        eps_by_encoder=eps_by_encoder, encoders=encoders,
    )
