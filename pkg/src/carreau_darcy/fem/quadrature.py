"""Symmetric quadrature rules on the reference simplices.

Points are given in barycentric coordinates, weights sum to the measure of
the reference simplex (1/2 for the triangle, 1/6 for the tetrahedron).
"""
import itertools

import numpy as np


def _orbit_tri(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def triangle_rule(degree=4):
    """Gauss rule on the triangle, exact for polynomials up to ``degree`` (<= 4)."""
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([0.5])
    if degree == 2:
        p, w = _orbit_tri(1 / 6, 1 / 6)
        return np.array(p), np.array(w)
    if degree > 4:
        raise ValueError("triangle rules are tabulated up to degree 4")
    p1, w1 = _orbit_tri(0.445948490915965, 0.223381589678011 / 2)
    p2, w2 = _orbit_tri(0.091576213509771, 0.109951743655322 / 2)
    return np.array(p1 + p2), np.array(w1 + w2)


def tetrahedron_rule(degree=4):
    """Gauss rule on the tetrahedron, exact up to ``degree`` (<= 5).

    Degrees 4 and 5 share the 14-point rule with positive weights.
    """
    if degree <= 1:
        return np.full((1, 4), 0.25), np.array([1 / 6])
    if degree == 2:
        a = 0.1381966011250105
        pts = [tuple(1 - 3 * a if i == k else a for i in range(4)) for k in range(4)]
        return np.array(pts), np.full(4, 1 / 24)
    if degree > 5:
        raise ValueError("tetrahedron rules are tabulated up to degree 5")
    pts, wts = [], []
    for a, w in ((0.0927352503108912, 0.01224884051939366),
                 (0.3108859192633006, 0.01878132095300264)):
        for k in range(4):
            pts.append(tuple(1 - 3 * a if i == k else a for i in range(4)))
            wts.append(w)
    b, w = 0.0455037041256496, 0.007091003462846911
    for i, j in itertools.combinations(range(4), 2):
        pts.append(tuple(b if k in (i, j) else 0.5 - b for k in range(4)))
        wts.append(w)
    return np.array(pts), np.array(wts)


def rule(dim, degree=4):
    return triangle_rule(degree) if dim == 2 else tetrahedron_rule(degree)
