"""Symmetric quadrature rules on the reference triangle.

Points are barycentric triples, weights sum to one (multiply by the element
area).  Constants are the Strang-Fix / Dunavant rules to full double precision.
"""
import numpy as np


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    # 3 points, exact to degree 2
    2: _rule(_orbit3(1 / 6, 1 / 3)),
    # Dunavant 6 points, exact to degree 4
    4: _rule(
        _orbit3(0.44594849091596488631832925388305, 0.22338158967801146569500700843312),
        _orbit3(0.091576213509770743459571463402202, 0.10995174365532186763832632490021),
    ),
    # Dunavant 12 points, exact to degree 6
    6: _rule(
        _orbit3(0.24928674517091042129163855310702, 0.11678627572637936602528961138558),
        _orbit3(0.063089014491502228340331602870819, 0.050844906370206816920936809106869),
        _orbit6(
            0.31035245103378440541660773395655,
            0.053145049844816947353249671631398,
            0.082851075618373575193553456420442,
        ),
    ),
}


def triangle_rule(degree):
    """Barycentric points ``(Q, 3)`` and weights ``(Q,)`` exact to ``degree``."""
    for d in sorted(RULES):
        if d >= degree:
            return RULES[d]
    raise ValueError(f"no triangle rule of degree {degree} (max {max(RULES)})")
