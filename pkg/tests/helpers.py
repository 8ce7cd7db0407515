"""Shared instance grids for certification-style tests."""
from infospec import build_channel, build_coupling, build_source

Z_CHANNEL = [[1.0, 0.0], [0.3, 0.7]]
NOISY3 = [
    [0.8, 0.1, 0.1],
    [0.1, 0.8, 0.1],
    [0.1, 0.1, 0.8],
]


def _bern(p):
    return {"alphabet": [0, 1], "probs": [1 - p, p]}


def tiny_instances():
    """(label, source, coupling, channel, n) grid with alphabets <= 4, n <= 2.

    Sized so both the exact codebook-ensemble enumeration and the joint
    enumeration stay tiny.
    """
    grid = []

    def add(label, src_kind, src_args, cp_kind, cp_args, ch_kind, ch_args, n):
        source = build_source(src_kind, **src_args)
        coupling = build_coupling(cp_kind, **cp_args)
        channel = build_channel(ch_kind, **ch_args)
        grid.append((label, source, coupling, channel, n))

    add("u2-id2", "iid", _bern(0.5), "deterministic_map", {"map": "identity"},
        "identity", {"x_alphabet": [0, 1]}, 1)
    add("b2-bsc1", "iid", _bern(0.2), "deterministic_map", {"map": "identity"},
        "dmc", {"crossover": 0.1}, 1)
    add("b3-bsc25", "iid", _bern(0.3), "independent", {"per_letter": [0.5, 0.5]},
        "dmc", {"crossover": 0.25}, 1)
    add("u2-ind4", "iid", _bern(0.5), "independent", {"per_letter": [0.25] * 4},
        "identity", {"x_alphabet": [0, 1, 2, 3]}, 1)
    add("m1-id2", "uniform_message", {"messages": 1}, "independent",
        {"per_letter": [0.5, 0.5]}, "identity", {"x_alphabet": [0, 1]}, 1)
    add("m2-z", "uniform_message", {"messages": 2}, "independent",
        {"per_letter": [0.5, 0.5]}, "dmc", {"matrix": Z_CHANNEL}, 1)
    add("b2-kern", "iid", _bern(0.25), "per_letter_kernel",
        {"matrix": [[0.9, 0.1], [0.2, 0.8]]}, "dmc", {"crossover": 0.1}, 1)
    add("tri-noisy3", "iid", {"alphabet": [0, 1, 2], "probs": [0.5, 0.3, 0.2]},
        "deterministic_map", {"map": "identity"}, "dmc", {"matrix": NOISY3}, 1)
    add("mix-bsc", "mixed",
        {"alphabet": [0, 1], "weights": [0.5, 0.5], "components": [
            {"kind": "iid", "params": {"probs": [0.9, 0.1]}},
            {"kind": "iid", "params": {"probs": [0.6, 0.4]}},
        ]},
        "deterministic_map", {"map": "identity"}, "dmc", {"crossover": 0.1}, 1)
    add("b2-bsc1-n2", "iid", _bern(0.2), "deterministic_map", {"map": "identity"},
        "dmc", {"crossover": 0.1}, 2)
    add("u2-ind2-n2", "iid", _bern(0.5), "independent", {"per_letter": [0.5, 0.5]},
        "dmc", {"crossover": 0.25}, 2)
    add("alt-odd", "alternating_example", {}, "deterministic_map", {"map": "identity"},
        "alternating_example", {}, 1)
    add("alt-even", "alternating_example", {}, "deterministic_map", {"map": "identity"},
        "alternating_example", {}, 2)
    add("z-ind", "iid", _bern(0.4), "independent", {"per_letter": [0.6, 0.4]},
        "dmc", {"matrix": Z_CHANNEL}, 1)
    add("b15-const", "iid", _bern(0.15), "deterministic_map", {"map": "constant:0"},
        "dmc", {"crossover": 0.2}, 1)
    add("b3-map10", "iid", _bern(0.3), "deterministic_map", {"map": [1, 0]},
        "dmc", {"crossover": 0.1}, 2)
    add("u3-noisy3", "iid", {"alphabet": [0, 1, 2], "probs": [1 / 3] * 3},
        "independent", {"per_letter": [1 / 3] * 3}, "dmc", {"matrix": NOISY3}, 1)
    add("b4-ind3", "iid", _bern(0.4), "independent", {"per_letter": [0.2, 0.5, 0.3]},
        "dmc", {"matrix": NOISY3}, 1)
    return grid


def oracle_instances():
    """Grid restricted to cases the exhaustive code oracle can afford."""
    keep = {"u2-id2", "b2-bsc1", "m1-id2", "m2-z", "tri-noisy3", "alt-odd",
            "alt-even", "z-ind", "b15-const"}
    return [row for row in tiny_instances() if row[0] in keep]
