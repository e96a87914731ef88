"""Independent re-evaluations used as test oracles.

Written from the formulas directly, in extended precision, sharing no code
with the package.
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 50


def logistic_ridge_scale(lam, gamma0, n, p, m, t, nu=1.0):
    lam, g, n, p, m, nu = (mp.mpf(v) for v in (lam, gamma0, n, p, m, nu))
    L = mp.log(n)
    pl1 = 4 * mp.sqrt(2 * g * L / lam)
    c_l = pl1 + 8 / lam
    pl5 = 4 * (mp.sqrt(g) + 3) / lam * mp.sqrt(m * (2 * m + 3) * L / p)
    c_ll = 4 + 8 / lam + pl1 + pl5
    c_xx = (mp.sqrt(g) + 3) / lam * mp.sqrt(m * (1 + 16 * L) / p)
    c2 = (mp.sqrt(g) + 4) ** 2 * c_ll
    c1 = 2 / (mp.sqrt(3) * lam**2) * c2 * c_l**2 * c_xx
    base = c2 * m**3 / (2 * lam * nu * n)
    return mp.power(c1, mp.power(2, t - 1)) * mp.power(base, mp.power(2, t - 2))
