"""Finite-alphabet source, channel and coupling families.

A model is a family indexed by block length n.  Nothing is assumed to be
consistent across n: every kind materializes its block-n law on demand.
Words are tuples of alphabet indices; probabilities are handled in the
log domain wherever products over letters are formed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    CapExceededError,
    ModelValidationError,
    TailBudgetError,
)

PROB_ATOL = 1e-12
JOINT_SUM_ATOL = 1e-10
DEFAULT_ENUM_CAP = 10_000_000

Word = tuple

NEG_INF = float("-inf")


def logsumexp(values: np.ndarray, axis=None):
    """log(sum(exp(values))) with -inf treated as zero mass."""
    values = np.asarray(values, dtype=float)
    m = np.max(values, axis=axis, keepdims=True) if values.size else np.float64(NEG_INF)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(values - m), axis=axis, keepdims=True)) + m
    out = np.where(np.isneginf(np.max(values, axis=axis, keepdims=True)), NEG_INF, out)
    if axis is None:
        return float(out.reshape(-1)[0])
    return np.squeeze(out, axis=axis)


def _as_prob_array(probs) -> np.ndarray:
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1:
        raise ModelValidationError("probability vector must be one-dimensional")
    return arr


@dataclass
class FiniteDistribution:
    """Probability vector over a finite, ordered symbol set."""

    symbols: tuple
    probs: np.ndarray

    def __post_init__(self):
        self.symbols = tuple(self.symbols)
        self.probs = _as_prob_array(self.probs)
        if len(self.symbols) != self.probs.size:
            raise ModelValidationError("symbols and probs must have equal length")
        if len(set(self.symbols)) != len(self.symbols):
            raise ModelValidationError("symbols must be distinct")
        if np.any(self.probs < 0):
            raise ModelValidationError("probabilities must be nonnegative")
        if abs(float(self.probs.sum()) - 1.0) > PROB_ATOL:
            raise ModelValidationError(
                f"probabilities sum to {self.probs.sum()!r}, not 1 within {PROB_ATOL}"
            )
        with np.errstate(divide="ignore"):
            self._log_probs = np.where(self.probs > 0, np.log(np.maximum(self.probs, 1e-300)), NEG_INF)

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def log_probs(self) -> np.ndarray:
        return self._log_probs

    def prob_of(self, symbol) -> float:
        return float(self.probs[self.symbols.index(symbol)])

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    @classmethod
    def uniform(cls, symbols) -> "FiniteDistribution":
        symbols = tuple(symbols)
        return cls(symbols, np.full(len(symbols), 1.0 / len(symbols)))

    @classmethod
    def bernoulli(cls, p: float) -> "FiniteDistribution":
        return cls((0, 1), np.array([1.0 - p, p]))


def _validate_stochastic(matrix: np.ndarray, what: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ModelValidationError(f"non-stochastic-matrix: {what} must be 2-D")
    if np.any(matrix < 0):
        raise ModelValidationError(f"non-stochastic-matrix: {what} has negative entries")
    resid = np.abs(matrix.sum(axis=1) - 1.0)
    if np.any(resid > PROB_ATOL):
        row = int(np.argmax(resid))
        raise ModelValidationError(
            f"non-stochastic-matrix: {what} row {row} sums to {matrix[row].sum()!r}"
        )
    return matrix


def _validate_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ModelValidationError("invalid-weights: need a flat, non-empty weight list")
    if np.any(w <= 0):
        raise ModelValidationError("invalid-weights: mixture weights must be positive")
    if abs(float(w.sum()) - 1.0) > PROB_ATOL:
        raise ModelValidationError(f"invalid-weights: weights sum to {w.sum()!r}, not 1")
    return w


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------


class SourceModel:
    """Family {P_{V^n}}_n.  Subclasses define the per-n law."""

    kind: str = "abstract"

    def alphabet_at(self, n: int) -> tuple:
        raise NotImplementedError

    def word_length(self, n: int) -> int:
        return n

    def support_size(self, n: int) -> int:
        raise NotImplementedError

    def iter_support(self, n: int) -> Iterator[Word]:
        raise NotImplementedError

    def log_prob(self, n: int, word: Word) -> float:
        """ln P_{V^n}(word); -inf outside the support."""
        raise NotImplementedError

    def product_components(self, n: int):
        """Mixture-of-products form [(log_weight, per_letter_probs)], or None."""
        return None

    def is_product_form(self, n: int) -> bool:
        comps = self.product_components(n)
        return comps is not None and len(comps) == 1

    def per_letter(self, n: int) -> np.ndarray:
        comps = self.product_components(n)
        if comps is None or len(comps) != 1:
            raise ModelValidationError(f"{self.kind} source is not product-form at n={n}")
        return comps[0][1]

    def tail_mass(self, n: int) -> float:
        return 0.0

    def sample_words(self, n: int, size: int, rng) -> np.ndarray:
        raise NotImplementedError

    def encode_word(self, seq) -> Word:
        table = {label: i for i, label in enumerate(self.alphabet_at(1))}
        return tuple(table[s] for s in seq)

    def decode_word(self, n: int, word: Word) -> tuple:
        labels = self.alphabet_at(n)
        return tuple(labels[i] for i in word)


def _iid_log_prob(log_p: np.ndarray, word: Word) -> float:
    total = 0.0
    for idx in word:
        lp = log_p[idx]
        if lp == NEG_INF:
            return NEG_INF
        total += lp
    return total


def _sample_iid_words(probs: np.ndarray, n: int, size: int, rng) -> np.ndarray:
    cum = np.cumsum(probs)
    u = rng.random((size, n))
    return np.searchsorted(cum, u, side="right").astype(np.int64)


class IIDSource(SourceModel):
    kind = "iid"

    def __init__(self, dist: FiniteDistribution):
        self.dist = dist

    def alphabet_at(self, n):
        return self.dist.symbols

    def support_size(self, n):
        k = int(np.count_nonzero(self.dist.probs > 0))
        return k**n

    def iter_support(self, n):
        live = [i for i, p in enumerate(self.dist.probs) if p > 0]
        return itertools.product(live, repeat=n)

    def log_prob(self, n, word):
        return _iid_log_prob(self.dist.log_probs, word)

    def product_components(self, n):
        return [(0.0, self.dist.probs)]

    def sample_words(self, n, size, rng):
        return _sample_iid_words(self.dist.probs, n, size, rng)


class MixedSource(SourceModel):
    """Block-level mixture: P_{V^n} = sum_i w_i P_i^{(n)} at every n."""

    kind = "mixed"

    def __init__(self, weights, components: Sequence[SourceModel]):
        self.weights = _validate_weights(weights)
        if len(components) != self.weights.size:
            raise ModelValidationError("invalid-weights: one weight per component required")
        alphabets = {tuple(c.alphabet_at(1)) for c in components}
        if len(alphabets) != 1:
            raise ModelValidationError("alphabet-mismatch between mixture components")
        self.components = list(components)

    def alphabet_at(self, n):
        return self.components[0].alphabet_at(n)

    def support_size(self, n):
        return len(self.alphabet_at(n)) ** n

    def iter_support(self, n):
        seen = set()
        for comp in self.components:
            for word in comp.iter_support(n):
                if word not in seen:
                    seen.add(word)
                    yield word

    def log_prob(self, n, word):
        terms = [
            math.log(w) + comp.log_prob(n, word)
            for w, comp in zip(self.weights, self.components)
        ]
        return logsumexp(np.array(terms))

    def product_components(self, n):
        out = []
        for w, comp in zip(self.weights, self.components):
            sub = comp.product_components(n)
            if sub is None:
                return None
            for lw, probs in sub:
                out.append((math.log(w) + lw, probs))
        return out

    def sample_words(self, n, size, rng):
        comp_idx = np.searchsorted(np.cumsum(self.weights), rng.random(size), side="right")
        out = np.empty((size, n), dtype=np.int64)
        for i, comp in enumerate(self.components):
            mask = comp_idx == i
            if mask.any():
                out[mask] = comp.sample_words(n, int(mask.sum()), rng)
        return out


class UniformMessageSource(SourceModel):
    """Uniform law on a message set of size M_n; a word is the single message index."""

    kind = "uniform_message"

    def __init__(self, messages):
        if callable(messages):
            self._m = messages
        elif isinstance(messages, Mapping):
            table = {int(k): int(v) for k, v in messages.items()}
            self._m = lambda n: table[n]
        else:
            fixed = int(messages)
            self._m = lambda n: fixed

    def message_count(self, n: int) -> int:
        m = int(self._m(n))
        if m < 1:
            raise ModelValidationError(f"message count must be >= 1, got {m} at n={n}")
        return m

    def alphabet_at(self, n):
        return tuple(range(self.message_count(n)))

    def word_length(self, n):
        return 1

    def support_size(self, n):
        return self.message_count(n)

    def iter_support(self, n):
        return ((m,) for m in range(self.message_count(n)))

    def log_prob(self, n, word):
        m = self.message_count(n)
        if 0 <= word[0] < m:
            return -math.log(m)
        return NEG_INF

    def entropy_point(self, n: int) -> float:
        """The single entropy-density atom (1/n) ln M_n."""
        return math.log(self.message_count(n)) / n

    def sample_words(self, n, size, rng):
        return rng.integers(0, self.message_count(n), size=(size, 1), dtype=np.int64)


class AlternatingSource(SourceModel):
    """Binary source: uniform on {0,1}^n at even n, point mass on the all-zero word at odd n."""

    kind = "alternating_example"

    def alphabet_at(self, n):
        return (0, 1)

    def _letter(self, n) -> np.ndarray:
        if n % 2 == 0:
            return np.array([0.5, 0.5])
        return np.array([1.0, 0.0])

    def support_size(self, n):
        return 2**n if n % 2 == 0 else 1

    def iter_support(self, n):
        if n % 2 == 0:
            return itertools.product((0, 1), repeat=n)
        return iter([(0,) * n])

    def log_prob(self, n, word):
        if n % 2 == 0:
            return -n * math.log(2.0)
        return 0.0 if all(i == 0 for i in word) else NEG_INF

    def product_components(self, n):
        return [(0.0, self._letter(n))]

    def sample_words(self, n, size, rng):
        return _sample_iid_words(self._letter(n), n, size, rng)


class TruncatedCountableSource(SourceModel):
    """I.i.d. source on a countable alphabet, truncated per n to meet a tail budget.

    The per-letter law is truncated to the smallest prefix whose n-block
    discarded mass stays below the budget; the discarded mass is recorded
    and carried as additive slack by downstream consumers.
    """

    kind = "truncated_countable"

    def __init__(self, letter_prob: Callable[[int], float], tail_budget: float,
                 support_cap: int = 4096):
        if not (0 < tail_budget < 1):
            raise ModelValidationError("tail budget must lie in (0, 1)")
        self.letter_prob = letter_prob
        self.tail_budget = float(tail_budget)
        self.support_cap = int(support_cap)
        self._cache: dict[int, tuple[np.ndarray, float]] = {}

    @classmethod
    def geometric(cls, p: float, tail_budget: float, support_cap: int = 4096):
        if not (0 < p < 1):
            raise ModelValidationError("geometric parameter must lie in (0, 1)")
        return cls(lambda k: p * (1.0 - p) ** k, tail_budget, support_cap)

    def _truncate(self, n: int) -> tuple[np.ndarray, float]:
        if n in self._cache:
            return self._cache[n]
        # per-letter tail t must satisfy 1 - (1-t)^n <= budget
        letter_budget = 1.0 - (1.0 - self.tail_budget) ** (1.0 / n)
        probs = []
        acc = 0.0
        for k in range(self.support_cap):
            pk = float(self.letter_prob(k))
            probs.append(pk)
            acc += pk
            if 1.0 - acc <= letter_budget:
                break
        else:
            raise TailBudgetError(
                f"tail-budget-exceeded: cannot reach tail {letter_budget:.3e} "
                f"within {self.support_cap} symbols"
            )
        arr = np.array(probs)
        block_tail = 1.0 - acc**n
        self._cache[n] = (arr / acc, block_tail)
        return self._cache[n]

    def alphabet_at(self, n):
        probs, _ = self._truncate(n)
        return tuple(range(probs.size))

    def support_size(self, n):
        probs, _ = self._truncate(n)
        return int(np.count_nonzero(probs > 0)) ** n

    def iter_support(self, n):
        probs, _ = self._truncate(n)
        live = [i for i, p in enumerate(probs) if p > 0]
        return itertools.product(live, repeat=n)

    def log_prob(self, n, word):
        probs, _ = self._truncate(n)
        with np.errstate(divide="ignore"):
            logs = np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), NEG_INF)
        return _iid_log_prob(logs, word)

    def product_components(self, n):
        probs, _ = self._truncate(n)
        return [(0.0, probs)]

    def tail_mass(self, n):
        _, tail = self._truncate(n)
        return tail

    def sample_words(self, n, size, rng):
        probs, _ = self._truncate(n)
        return _sample_iid_words(probs, n, size, rng)


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


class ChannelModel:
    """Family {W^n}_n of transition kernels X^n -> Y^n."""

    kind: str = "abstract"
    x_alphabet: tuple = ()
    y_alphabet: tuple = ()

    def log_kernel(self, n: int, x_word: Word, y_word: Word) -> float:
        raise NotImplementedError

    def iter_outputs(self, n: int, x_word: Word) -> Iterator[tuple[Word, float]]:
        raise NotImplementedError

    def output_space_size(self, n: int) -> int:
        return len(self.y_alphabet) ** n

    def product_components(self, n: int):
        """Mixture of per-letter kernels [(log_weight, matrix)], or None."""
        return None

    def is_product_form(self, n: int) -> bool:
        comps = self.product_components(n)
        return comps is not None and len(comps) == 1

    def per_letter_matrix(self, n: int) -> np.ndarray:
        comps = self.product_components(n)
        if comps is None or len(comps) != 1:
            raise ModelValidationError(f"{self.kind} channel is not product-form at n={n}")
        return comps[0][1]

    def sample_outputs(self, n: int, x_words: np.ndarray, rng) -> np.ndarray:
        raise NotImplementedError


def _matrix_log(matrix: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(matrix > 0, np.log(np.maximum(matrix, 1e-300)), NEG_INF)


def _product_kernel_outputs(matrix: np.ndarray, x_word: Word) -> Iterator[tuple[Word, float]]:
    rows = [matrix[x] for x in x_word]
    supports = [[y for y, p in enumerate(row) if p > 0] for row in rows]
    for y_word in itertools.product(*supports):
        prob = 1.0
        for row, y in zip(rows, y_word):
            prob *= row[y]
        yield y_word, prob


def _sample_product_outputs(matrix: np.ndarray, x_words: np.ndarray, rng) -> np.ndarray:
    cum = np.cumsum(matrix, axis=1)
    u = rng.random(x_words.shape)
    return (u[..., None] > cum[x_words]).sum(axis=-1).astype(np.int64)


class DMCChannel(ChannelModel):
    """Stationary memoryless channel; W^n is the lazy n-fold product of one matrix."""

    kind = "dmc"

    def __init__(self, matrix, x_alphabet=None, y_alphabet=None):
        self.matrix = _validate_stochastic(matrix, "dmc matrix")
        self.x_alphabet = tuple(x_alphabet) if x_alphabet is not None else tuple(range(self.matrix.shape[0]))
        self.y_alphabet = tuple(y_alphabet) if y_alphabet is not None else tuple(range(self.matrix.shape[1]))
        if len(self.x_alphabet) != self.matrix.shape[0] or len(self.y_alphabet) != self.matrix.shape[1]:
            raise ModelValidationError("alphabet-mismatch: matrix shape vs alphabets")
        self._log_matrix = _matrix_log(self.matrix)

    @classmethod
    def bsc(cls, p: float) -> "DMCChannel":
        return cls(np.array([[1.0 - p, p], [p, 1.0 - p]]))

    def log_kernel(self, n, x_word, y_word):
        total = 0.0
        for x, y in zip(x_word, y_word):
            lp = self._log_matrix[x, y]
            if lp == NEG_INF:
                return NEG_INF
            total += lp
        return total

    def iter_outputs(self, n, x_word):
        return _product_kernel_outputs(self.matrix, x_word)

    def product_components(self, n):
        return [(0.0, self.matrix)]

    def sample_outputs(self, n, x_words, rng):
        return _sample_product_outputs(self.matrix, x_words, rng)


class IdentityChannel(DMCChannel):
    kind = "identity"

    def __init__(self, alphabet):
        alphabet = tuple(alphabet)
        super().__init__(np.eye(len(alphabet)), alphabet, alphabet)
        self.kind = "identity"


class MixedChannel(ChannelModel):
    """Block-level mixture of channels: W^n = sum_i w_i W_i^n."""

    kind = "mixed"

    def __init__(self, weights, components: Sequence[ChannelModel]):
        self.weights = _validate_weights(weights)
        if len(components) != self.weights.size:
            raise ModelValidationError("invalid-weights: one weight per component required")
        x_alphas = {c.x_alphabet for c in components}
        y_alphas = {c.y_alphabet for c in components}
        if len(x_alphas) != 1 or len(y_alphas) != 1:
            raise ModelValidationError("alphabet-mismatch between mixture components")
        self.components = list(components)
        self.x_alphabet = components[0].x_alphabet
        self.y_alphabet = components[0].y_alphabet

    def log_kernel(self, n, x_word, y_word):
        terms = [
            math.log(w) + comp.log_kernel(n, x_word, y_word)
            for w, comp in zip(self.weights, self.components)
        ]
        return logsumexp(np.array(terms))

    def iter_outputs(self, n, x_word):
        acc: dict[Word, float] = {}
        for w, comp in zip(self.weights, self.components):
            for y_word, p in comp.iter_outputs(n, x_word):
                acc[y_word] = acc.get(y_word, 0.0) + w * p
        return iter(acc.items())

    def product_components(self, n):
        out = []
        for w, comp in zip(self.weights, self.components):
            sub = comp.product_components(n)
            if sub is None:
                return None
            for lw, matrix in sub:
                out.append((math.log(w) + lw, matrix))
        return out

    def sample_outputs(self, n, x_words, rng):
        size = x_words.shape[0]
        comp_idx = np.searchsorted(np.cumsum(self.weights), rng.random(size), side="right")
        out = np.empty_like(x_words)
        for i, comp in enumerate(self.components):
            mask = comp_idx == i
            if mask.any():
                out[mask] = comp.sample_outputs(n, x_words[mask], rng)
        return out


class AlternatingChannel(ChannelModel):
    """Binary channel: identity at even n, constant all-zero output at odd n."""

    kind = "alternating_example"
    x_alphabet = (0, 1)
    y_alphabet = (0, 1)

    def _matrix(self, n) -> np.ndarray:
        if n % 2 == 0:
            return np.eye(2)
        return np.array([[1.0, 0.0], [1.0, 0.0]])

    def log_kernel(self, n, x_word, y_word):
        log_m = _matrix_log(self._matrix(n))
        total = 0.0
        for x, y in zip(x_word, y_word):
            lp = log_m[x, y]
            if lp == NEG_INF:
                return NEG_INF
            total += lp
        return total

    def iter_outputs(self, n, x_word):
        return _product_kernel_outputs(self._matrix(n), x_word)

    def product_components(self, n):
        return [(0.0, self._matrix(n))]

    def sample_outputs(self, n, x_words, rng):
        return _sample_product_outputs(self._matrix(n), x_words, rng)


# ---------------------------------------------------------------------------
# Couplings V^n -> X^n
# ---------------------------------------------------------------------------


class InputCoupling:
    """Conditional law P_{X^n|V^n}; the joint always factors P_V * K * W^n."""

    kind: str = "abstract"
    independent_of_source: bool = False

    def log_prob_x(self, n: int, x_word: Word, v_word: Word) -> float:
        raise NotImplementedError

    def iter_x(self, n: int, v_word: Word) -> Iterator[tuple[Word, float]]:
        raise NotImplementedError

    def options_count(self, n: int, v_word: Word) -> int:
        return sum(1 for _ in self.iter_x(n, v_word))

    def letter_matrix(self, n: int, v_size: int, x_size: int):
        """Per-letter conditional P(x|v) as a (v_size, x_size) matrix, or None."""
        return None

    def is_product_form(self, n: int, v_size: int = None, x_size: int = None) -> bool:
        if v_size is None or x_size is None:
            return False
        return self.letter_matrix(n, v_size, x_size) is not None

    def sample_x(self, n: int, v_words: np.ndarray, rng) -> np.ndarray:
        raise NotImplementedError


class DeterministicCoupling(InputCoupling):
    """Encoder x = phi_n(v): identity, constant letter, letter map or a word table."""

    kind = "deterministic_map"

    def __init__(self, mode: str = "identity", letter_map=None, word_table: Mapping | None = None,
                 constant_word: Callable[[int], Word] | None = None):
        self.mode = mode
        self._letter_map = None if letter_map is None else np.asarray(letter_map, dtype=np.int64)
        self._word_table = dict(word_table) if word_table is not None else None
        self._constant_word = constant_word

    @classmethod
    def identity(cls):
        return cls(mode="identity")

    @classmethod
    def constant(cls, symbol_index: int):
        return cls(mode="constant", constant_word=lambda n: (symbol_index,) * n)

    @classmethod
    def letterwise(cls, letter_map):
        return cls(mode="letter_map", letter_map=letter_map)

    @classmethod
    def table(cls, word_table: Mapping):
        return cls(mode="table", word_table=word_table)

    def encode(self, n: int, v_word: Word) -> Word:
        if self.mode == "identity":
            return tuple(v_word)
        if self.mode == "constant":
            return self._constant_word(n)
        if self.mode == "letter_map":
            return tuple(int(self._letter_map[v]) for v in v_word)
        return tuple(self._word_table[tuple(v_word)])

    def log_prob_x(self, n, x_word, v_word):
        return 0.0 if tuple(x_word) == self.encode(n, v_word) else NEG_INF

    def iter_x(self, n, v_word):
        yield self.encode(n, v_word), 1.0

    def options_count(self, n, v_word):
        return 1

    def letter_matrix(self, n, v_size, x_size):
        if self.mode == "identity":
            if v_size > x_size:
                raise ModelValidationError("alphabet-mismatch: identity map needs |V| <= |X|")
            targets = np.arange(v_size)
        elif self.mode == "letter_map":
            targets = self._letter_map
            if targets.size < v_size or np.any(targets[:v_size] >= x_size):
                raise ModelValidationError("alphabet-mismatch: letter map out of range")
            targets = targets[:v_size]
        elif self.mode == "constant":
            word = self._constant_word(1)
            targets = np.full(v_size, word[0], dtype=np.int64)
        else:
            return None
        matrix = np.zeros((v_size, x_size))
        matrix[np.arange(v_size), targets] = 1.0
        return matrix

    def sample_x(self, n, v_words, rng):
        if self.mode == "identity":
            return v_words.copy()
        if self.mode == "letter_map":
            return self._letter_map[v_words]
        if self.mode == "constant":
            word = self._constant_word(n)
            return np.tile(np.array(word, dtype=np.int64), (v_words.shape[0], 1))
        return np.array([self.encode(n, tuple(v)) for v in v_words], dtype=np.int64)


class IndependentCoupling(InputCoupling):
    """X independent of V, i.i.d. per letter with a fixed input law."""

    kind = "independent"
    independent_of_source = True

    def __init__(self, input_dist: FiniteDistribution):
        self.input_dist = input_dist

    def log_prob_x(self, n, x_word, v_word):
        return _iid_log_prob(self.input_dist.log_probs, x_word)

    def iter_x(self, n, v_word):
        live = [i for i, p in enumerate(self.input_dist.probs) if p > 0]
        for x_word in itertools.product(live, repeat=n):
            prob = 1.0
            for x in x_word:
                prob *= self.input_dist.probs[x]
            yield x_word, prob

    def options_count(self, n, v_word):
        live = int(np.count_nonzero(self.input_dist.probs > 0))
        return live**n

    def letter_matrix(self, n, v_size, x_size):
        if x_size != self.input_dist.size:
            raise ModelValidationError("alphabet-mismatch: input law vs channel input alphabet")
        return np.tile(self.input_dist.probs, (max(v_size, 1), 1))

    def sample_x(self, n, v_words, rng):
        return _sample_iid_words(self.input_dist.probs, n, v_words.shape[0], rng)


class PerLetterKernelCoupling(InputCoupling):
    """X generated letterwise from V through a conditional matrix P(x|v)."""

    kind = "per_letter_kernel"

    def __init__(self, matrix):
        self.matrix = _validate_stochastic(matrix, "coupling kernel")
        self._log_matrix = _matrix_log(self.matrix)

    def log_prob_x(self, n, x_word, v_word):
        total = 0.0
        for v, x in zip(v_word, x_word):
            lp = self._log_matrix[v, x]
            if lp == NEG_INF:
                return NEG_INF
            total += lp
        return total

    def iter_x(self, n, v_word):
        return _product_kernel_outputs(self.matrix, v_word)

    def options_count(self, n, v_word):
        counts = (self.matrix[list(v_word)] > 0).sum(axis=1)
        return int(np.prod(counts))

    def letter_matrix(self, n, v_size, x_size):
        if self.matrix.shape != (v_size, x_size):
            raise ModelValidationError("alphabet-mismatch: coupling kernel shape")
        return self.matrix

    def sample_x(self, n, v_words, rng):
        return _sample_product_outputs(self.matrix, v_words, rng)


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def build_source(kind: str, alphabet=None, **params) -> SourceModel:
    """Construct a source family; raises ModelValidationError on bad params."""
    if kind == "iid":
        probs = params["probs"]
        symbols = tuple(alphabet) if alphabet is not None else tuple(range(len(probs)))
        return IIDSource(FiniteDistribution(symbols, probs))
    if kind == "mixed":
        comps = params["components"]
        built = [
            c if isinstance(c, SourceModel) else build_source(c["kind"], alphabet, **c.get("params", {}))
            for c in comps
        ]
        return MixedSource(params["weights"], built)
    if kind == "uniform_message":
        return UniformMessageSource(params["messages"])
    if kind == "alternating_example":
        return AlternatingSource()
    if kind == "truncated_countable":
        base = params.get("base", "geometric")
        if base == "geometric":
            return TruncatedCountableSource.geometric(
                params["p"], params["tail_budget"], params.get("support_cap", 4096)
            )
        raise ModelValidationError(f"unknown countable base {base!r}")
    raise ModelValidationError(f"unknown source kind {kind!r}")


def build_channel(kind: str, x_alphabet=None, y_alphabet=None, **params) -> ChannelModel:
    """Construct a channel family; raises ModelValidationError on bad params."""
    if kind == "dmc":
        if "crossover" in params:
            return DMCChannel.bsc(params["crossover"])
        return DMCChannel(params["matrix"], x_alphabet, y_alphabet)
    if kind == "identity":
        return IdentityChannel(x_alphabet if x_alphabet is not None else params["alphabet"])
    if kind == "mixed":
        comps = params["components"]
        built = [
            c if isinstance(c, ChannelModel) else build_channel(c["kind"], x_alphabet, y_alphabet, **c.get("params", {}))
            for c in comps
        ]
        return MixedChannel(params["weights"], built)
    if kind == "alternating_example":
        return AlternatingChannel()
    raise ModelValidationError(f"unknown channel kind {kind!r}")


def build_coupling(kind: str, **params) -> InputCoupling:
    if kind == "deterministic_map":
        mode = params.get("map", "identity")
        if mode == "identity":
            return DeterministicCoupling.identity()
        if isinstance(mode, str) and mode.startswith("constant:"):
            return DeterministicCoupling.constant(int(mode.split(":", 1)[1]))
        if mode == "table":
            table = {tuple(k): tuple(v) for k, v in params["table"]}
            return DeterministicCoupling.table(table)
        return DeterministicCoupling.letterwise(mode)
    if kind == "independent":
        probs = params["per_letter"]
        dist = probs if isinstance(probs, FiniteDistribution) else FiniteDistribution(
            tuple(range(len(probs))), probs
        )
        return IndependentCoupling(dist)
    if kind == "per_letter_kernel":
        return PerLetterKernelCoupling(params["matrix"])
    raise ModelValidationError(f"unknown coupling kind {kind!r}")


# ---------------------------------------------------------------------------
# Joint enumeration and validation
# ---------------------------------------------------------------------------


@dataclass
class JointSupport:
    """Materialized P_{V^n X^n Y^n} on its (finite) support."""

    n: int
    v_words: list
    x_words: list
    y_words: list
    probs: np.ndarray

    def __post_init__(self):
        total = float(self.probs.sum())
        if abs(total - 1.0) > JOINT_SUM_ATOL:
            raise ModelValidationError(f"joint probabilities sum to {total!r}")

    def as_dict(self) -> dict:
        out: dict[tuple, float] = {}
        for v, x, y, p in zip(self.v_words, self.x_words, self.y_words, self.probs):
            out[(v, x, y)] = out.get((v, x, y), 0.0) + float(p)
        return out

    def y_marginal(self) -> dict:
        out: dict[Word, float] = {}
        for y, p in zip(self.y_words, self.probs):
            out[y] = out.get(y, 0.0) + float(p)
        return out


def joint_support(source: SourceModel, coupling: InputCoupling, channel: ChannelModel,
                  n: int, cap: int = DEFAULT_ENUM_CAP) -> JointSupport:
    """Enumerate every (v, x, y) triple with positive joint probability.

    The conservative size bound |V|^n |X|^n |Y|^n is checked against the cap
    before any enumeration happens.
    """
    bound = (
        len(source.alphabet_at(n)) ** source.word_length(n)
        * len(channel.x_alphabet) ** n
        * channel.output_space_size(n)
    )
    if bound > cap:
        raise CapExceededError(
            f"cap-exceeded: |V^n||X^n||Y^n| = {bound} > {cap}; use Monte Carlo instead"
        )
    v_words, x_words, y_words, probs = [], [], [], []
    for v in source.iter_support(n):
        pv = math.exp(source.log_prob(n, v))
        if pv == 0.0:
            continue
        for x, px in coupling.iter_x(n, v):
            for y, py in channel.iter_outputs(n, x):
                v_words.append(v)
                x_words.append(x)
                y_words.append(y)
                probs.append(pv * px * py)
    return JointSupport(n, v_words, x_words, y_words, np.array(probs))


@dataclass
class ModelDiagnostics:
    kind: str
    role: str
    alphabet_sizes: dict
    residuals: dict
    tail_masses: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def validate_model(model, n_probe=(1, 2, 3)) -> ModelDiagnostics:
    """Report normalization residuals, tail masses and alphabet sizes.

    Never mutates or rejects the model; construction-time validation is the
    gate, this is the diagnostic view.
    """
    if isinstance(model, SourceModel):
        sizes = {n: len(model.alphabet_at(n)) for n in n_probe}
        residuals, tails, flags = {}, {}, []
        for n in n_probe:
            if model.support_size(n) <= 4096:
                total = sum(math.exp(model.log_prob(n, w)) for w in model.iter_support(n))
                residuals[n] = abs(total - 1.0)
                if residuals[n] > JOINT_SUM_ATOL:
                    flags.append(f"P_V^{n} sums to {total!r}")
            tails[n] = model.tail_mass(n)
        return ModelDiagnostics(model.kind, "source", sizes, residuals, tails, flags)
    if isinstance(model, ChannelModel):
        sizes = {"x": len(model.x_alphabet), "y": len(model.y_alphabet)}
        residuals, flags = {}, []
        for n in n_probe:
            comps = model.product_components(n)
            if comps is not None:
                worst = 0.0
                for _, matrix in comps:
                    worst = max(worst, float(np.max(np.abs(matrix.sum(axis=1) - 1.0))))
                residuals[n] = worst
            else:
                x0 = (0,) * n
                total = sum(p for _, p in model.iter_outputs(n, x0))
                residuals[n] = abs(total - 1.0)
            if residuals[n] > JOINT_SUM_ATOL:
                flags.append(f"W^{n} rows off by {residuals[n]:.3e}")
        return ModelDiagnostics(model.kind, "channel", sizes, residuals, {}, flags)
    if isinstance(model, InputCoupling):
        residuals, flags = {}, []
        if isinstance(model, PerLetterKernelCoupling):
            residuals[1] = float(np.max(np.abs(model.matrix.sum(axis=1) - 1.0)))
        return ModelDiagnostics(model.kind, "coupling", {}, residuals, {}, flags)
    raise ModelValidationError(f"cannot validate object of type {type(model)!r}")
