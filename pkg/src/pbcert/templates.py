"""Problem specifications for the four reference systems, plus a blank template."""

from __future__ import annotations

import copy

_BLANK = {
    "name": "my-system",
    "mode": "doa",
    "variables": ["x1", "x2"],
    "f": ["x2", "-x1 - x2 + x1^3"],
    "V": "x1^2 + x1*x2 + x2^2",
    "options": {"gamma": 1.0, "seed": 0},
}

TEMPLATES: dict[str, dict] = {
    "blank": _BLANK,
    # the cubic term carries a plus sign: with it the origin is only locally
    # stable and the sublevel level is 0.9759
    "example1": {
        "name": "example1",
        "mode": "doa",
        "variables": ["x1", "x2"],
        "f": ["x2", "-x1 - x2 + x1^3"],
        "V": "x1^2 + x1*x2 + x2^2 + x1^4 + x2^4",
        "options": {"gamma": 1.0, "cert_degree": 4, "seed": 0},
        "region": {"box": [[-3, 3], [-3, 3]], "resolution": 200},
    },
    "example2": {
        "name": "example2",
        "mode": "doa",
        "variables": ["x1", "x2", "x3"],
        "f": ["-x1 + x2*x3^2", "-x2", "-x3"],
        "V": "x1^2 + x2^2 + x3^2",
        "options": {"gamma": 1.0, "cert_degree": 2, "seed": 0},
        "region": {"resolution": 40},
    },
    "example3": {
        "name": "example3",
        "mode": "safe-stabilization",
        "variables": ["x1", "x2"],
        "f": ["x2", "-x1"],
        "g": [["0"], ["1"]],
        "V": "x1^2 + x1*x2 + x2^2",
        "unsafe": [
            "(x1 - 3)^2 + (x2 - 1)^2 - 1",
            "(x1 + 3)^2 + (x2 + 4)^2 - 1",
            "(x1 + 4)^2 + (x2 - 5)^2 - 1",
        ],
        "options": {"gamma": 1.0, "cert_degree": 2, "coeff_bound": 100.0, "seed": 0},
        "region": {"box": [[-6, 6], [-6, 7]], "resolution": 200},
    },
    "example4": {
        "name": "example4",
        "mode": "safe-stabilization",
        "variables": ["x1", "x2", "x3"],
        "f": ["x2 - x3^2", "x3 - x1^2", "-x1 - 2*x2 - x3 + x2^3"],
        "g": [["0", "0"], ["1", "0"], ["0", "1"]],
        "V": "5*x1^2 + 10*x1*x2 + 2*x1*x3 + 10*x2^2 + 6*x2*x3 + 4*x3^2",
        "unsafe": [
            "(x1 - 2)^2 + (x2 - 1)^2 + (x3 - 2)^2 - 1",
            "(x1 + 1)^2 + (x2 + 2)^2 + (x3 + 1)^2 - 1",
            "x1^2 + x2^2 + (x3 - 6)^2 - 9",
            "x1^2 + x2^2 + (x3 + 5)^2 - 9",
        ],
        "options": {"gamma": 1.0, "cert_degree": 2, "coeff_bound": 100.0, "seed": 0},
        "region": {"resolution": 40},
    },
}


def template(name: str) -> dict:
    try:
        return copy.deepcopy(TEMPLATES[name])
    except KeyError:
        raise KeyError(f"unknown template {name!r}; choose from {sorted(TEMPLATES)}") from None
