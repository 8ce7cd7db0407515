"""Brute-force oracles, independent of the library's computation paths.

Everything here works from raw parameter lists with itertools and plain
float arithmetic; no convolution, no log-domain bookkeeping.
"""
import itertools
import math


def all_words(k, n):
    return itertools.product(range(k), repeat=n)


def iid_prob(probs, word):
    p = 1.0
    for s in word:
        p *= probs[s]
    return p


def mixture_prob(weights, comp_probs, word):
    return sum(w * iid_prob(p, word) for w, p in zip(weights, comp_probs))


def kernel_prob(matrix, x_word, y_word):
    p = 1.0
    for x, y in zip(x_word, y_word):
        p *= matrix[x][y]
    return p


def binary_entropy(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def enumerate_triples(v_probs, coupling_matrix, channel_matrix, n):
    """All (v, x, y, prob) for an i.i.d. source, per-letter coupling and DMC."""
    kv = len(v_probs)
    kx = len(coupling_matrix[0])
    ky = len(channel_matrix[0])
    out = []
    for v in all_words(kv, n):
        pv = iid_prob(v_probs, v)
        if pv == 0:
            continue
        for x in all_words(kx, n):
            px = kernel_prob(coupling_matrix, v, x)
            if px == 0:
                continue
            for y in all_words(ky, n):
                py = kernel_prob(channel_matrix, x, y)
                if py == 0:
                    continue
                out.append((v, x, y, pv * px * py))
    return out


def densities_from_triples(triples, v_probs, channel_matrix, n):
    """Per-triple (a, b, prob): information and entropy densities, nats/symbol."""
    y_marg = {}
    for _, _, y, p in triples:
        y_marg[y] = y_marg.get(y, 0.0) + p
    rows = []
    for v, x, y, p in triples:
        a = (math.log(kernel_prob(channel_matrix, x, y)) - math.log(y_marg[y])) / n
        b = -math.log(iid_prob(v_probs, v)) / n
        rows.append((a, b, p))
    return rows


def spectrum_from_values(pairs):
    """Collapse (value, mass) pairs into a sorted atom dict keyed at 1e-9."""
    atoms = {}
    for value, mass in pairs:
        key = round(value, 9)
        atoms[key] = atoms.get(key, 0.0) + mass
    return dict(sorted(atoms.items()))


def tv_between(atoms1, atoms2):
    keys = set(atoms1) | set(atoms2)
    return 0.5 * sum(abs(atoms1.get(k, 0.0) - atoms2.get(k, 0.0)) for k in keys)
