"""Published cell-problem outputs used as regression targets.

Each row is ``(xi1, xi2, lambda, mu, V1, V2, |V|)`` for ``r = 1.3``,
``eta0 = 1``, ``eta_inf = 0``.  The disk has radius 1/4; the ellipse has
semi-axes ``a = 0.35`` and ``b = R^2 / a`` (same area as the disk).  The
values come from a mesh of about 8.7k (disk) and 8.1k (ellipse)
tetrahedra whose construction is unknown, so agreement is only expected
up to discretization error.
"""
import math

S = math.sqrt(2.0) / 2.0

DISK = [
    (1.0, 0.0, 1, 10, 0.00251667, -1.19492e-08, 0.00251667),
    (1.0, 0.0, 1, 1, 0.0258962, -2.03842e-07, 0.0258962),
    (1.0, 0.0, 1, 0.1, 1.66673, -0.000146684, 1.66673),
    (1.0, 0.0, 1000, 10, 0.00329309, -2.07601e-07, 0.00329309),
    (1.0, 0.0, 1000, 1, 2.41035, -9.17069e-05, 2.41035),
    (1.0, 0.0, 1000, 0.1, 5192.89, -0.196614, 5192.89),
    (S, S, 1, 10, 0.00177941, 0.00177946, 0.0025165),
    (S, S, 1, 1, 0.0181773, 0.0181779, 0.025707),
    (S, S, 1, 0.1, 1.06628, 1.06742, 1.50875),
    (S, S, 1000, 10, 0.00222964, 0.00223, 0.00315344),
    (S, S, 1000, 1, 1.5389, 1.54094, 2.17777),
    (S, S, 1000, 0.1, 3315.42, 3319.82, 4691.83),
]

ELLIPSE = [
    (1.0, 0.0, 1, 10, 0.00355439, -2.04336e-08, 0.00355439),
    (1.0, 0.0, 1, 1, 0.0365926, -2.17653e-07, 0.0365926),
    (1.0, 0.0, 1, 0.1, 3.19015, -0.000131535, 3.19015),
    (1.0, 0.0, 1000, 10, 0.00484256, -6.00639e-08, 0.00484256),
    (1.0, 0.0, 1000, 1, 4.65322, -0.000188363, 4.65322),
    (1.0, 0.0, 1000, 0.1, 10025.0, -0.405677, 10025.0),
    (S, S, 1, 10, 0.00251303, 0.000763869, 0.00262656),
    (S, S, 1, 1, 0.0255712, 0.0078233, 0.0267412),
    (S, S, 1, 0.1, 1.34546, 0.453007, 1.41967),
    (S, S, 1000, 10, 0.00303631, 0.000973364, 0.00318851),
    (S, S, 1000, 1, 1.93222, 0.650889, 2.0389),
    (S, S, 1000, 0.1, 4162.78, 1402.28, 4392.63),
]

TABLES = {"disk": DISK, "ellipse": ELLIPSE}

#: cosine of the angle between U(xi) and xi for the ellipse, xi = (1, 1)/sqrt(2)
ELLIPSE_DIAGONAL_COSINE = 0.89
