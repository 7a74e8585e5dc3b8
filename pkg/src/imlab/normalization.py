"""Fourier and quadrature conventions shared by every functional.

Radial reduction
----------------
A radial function u(x) = u(|x|) on R^3 is stored through w(r) = r u(r) on
the truncated half-line [0, R], with w(0) = w(R) = 0.  The field is expanded
in the Dirichlet sine basis

    w(r) = sum_{k=1}^{M} a_k sin(rho_k r),    rho_k = k pi / R.

The 3D Fourier transform of u is

    u_hat(xi) = (4 pi / |xi|) int_0^inf w(r) sin(|xi| r) dr,

so a radial multiplier m(|xi|) acts on the stored coefficients as
a_k -> m(rho_k) a_k.  On the truncated domain the operator D = |xi| is
sqrt(-Laplacian) with a Dirichlet condition at r = R; rho_1 > 0, so negative
powers of D are bounded.

Transform pair
--------------
Nodes are r_j = j R / (M + 1), j = 1..M (DST-I points).  With scipy's
unnormalized DST-I,

    forward:  a = dst(w_nodes, type=1) / (M + 1)
    inverse:  w_nodes = dst(a, type=1) / 2

which is an exact inverse pair.

Plancherel
----------
    int_{R^3} |u|^2 dx = 4 pi int_0^R w^2 dr = 4 pi (R/2) sum_k a_k^2
    int_{R^3} |D u|^2 dx = 4 pi int_0^R (w')^2 dr = 4 pi (R/2) sum_k rho_k^2 a_k^2

The second line uses w(0) = w(R) = 0 to drop boundary terms, and avoids ever
differentiating u = w / r near the origin.

Value at the origin
-------------------
u(0) = lim_{r->0} w(r)/r = sum_k a_k rho_k.

Quadrature
----------
Radial integrals 4 pi int_0^R f(r) r^2 dr are composite trapezoid sums on a
uniform node set that includes r = 0 and r = R.  For integrands even in r
(e.g. |u|^p r^2) this is spectrally accurate.  Odd integrands (e.g. the
Morawetz density u^4 r) carry an O(h^2) endpoint error at r = 0, removed with
the first Euler-Maclaurin term h^2/12 f'(0) where f'(0) is known in closed
form from the origin values above.
"""

import numpy as np

FOUR_PI = 4.0 * np.pi


def plancherel_weight(R):
    """Factor c with int_{R^3} |u|^2 dx = c * sum_k a_k^2."""
    return FOUR_PI * R / 2.0
