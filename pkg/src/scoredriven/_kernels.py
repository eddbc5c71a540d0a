"""Compiled scalar kernels shared by the filter, simulator and forecaster.

Everything here works on plain float64 arrays and integer codes so that numba
can compile it once. Python-facing validation lives in the public modules.
"""

import math

import numpy as np
from numba import njit

# distribution codes, order matches ``distributions.DISTRIBUTIONS``
BETA = 0
BETA_LS = 1
EXPONENTIAL = 2
GAMMA = 3
LOGIT_NORMAL = 4
LOG_NORMAL = 5
NEG_BINOMIAL = 6
NORMAL = 7
POISSON = 8
TDIST = 9
TDIST_LS = 10
WEIBULL = 11

# link codes
IDENTITY = 0
LOG = 1
LOGIT = 2

# scaled-score status codes
OK = 0
NONFINITE = 1
SINGULAR = 2
JACOBIAN_BLOWUP = 3
OUT_OF_DOMAIN = 4

LOG_2PI = math.log(2.0 * math.pi)
COND_LIMIT = 1e12
JAC_LIMIT = 1e12


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


@njit(cache=True)
def digamma(x):
    """Digamma for x > 0 via upward recurrence and the asymptotic series."""
    res = 0.0
    while x < 10.0:
        res -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (
        1.0 / 12.0
        - inv2
        * (
            1.0 / 120.0
            - inv2
            * (
                1.0 / 252.0
                - inv2
                * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0)))
            )
        )
    )
    return res + math.log(x) - 0.5 * inv - series


@njit(cache=True)
def trigamma(x):
    res = 0.0
    while x < 10.0:
        res += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv * (
        1.0
        + inv
        * (
            0.5
            + inv
            * (
                1.0 / 6.0
                - inv2
                * (
                    1.0 / 30.0
                    - inv2
                    * (
                        1.0 / 42.0
                        - inv2
                        * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0)))
                    )
                )
            )
        )
    )
    return res + series


@njit(cache=True)
def lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@njit(cache=True)
def params_valid(dist, p):
    """Domain check on natural-space parameters."""
    for i in range(p.shape[0]):
        if not math.isfinite(p[i]):
            return False
    if dist == BETA or dist == GAMMA or dist == WEIBULL:
        return p[0] > 0.0 and p[1] > 0.0
    if dist == BETA_LS:
        return p[0] < p[1] and p[2] > 0.0 and p[3] > 0.0
    if dist == EXPONENTIAL or dist == POISSON or dist == TDIST:
        return p[0] > 0.0
    if dist == LOGIT_NORMAL or dist == LOG_NORMAL or dist == NORMAL:
        return p[1] > 0.0
    if dist == NEG_BINOMIAL:
        return p[0] > 0.0 and 0.0 < p[1] < 1.0
    if dist == TDIST_LS:
        return p[1] > 0.0 and p[2] > 0.0
    return False


@njit(cache=True)
def log_pdf(dist, p, y):
    if dist == BETA:
        a, b = p[0], p[1]
        return (a - 1.0) * math.log(y) + (b - 1.0) * math.log1p(-y) - lbeta(a, b)
    if dist == BETA_LS:
        lo, hi, a, b = p[0], p[1], p[2], p[3]
        return (
            (a - 1.0) * math.log(y - lo)
            + (b - 1.0) * math.log(hi - y)
            - (a + b - 1.0) * math.log(hi - lo)
            - lbeta(a, b)
        )
    if dist == EXPONENTIAL:
        return math.log(p[0]) - p[0] * y
    if dist == GAMMA:
        a, k = p[0], p[1]
        return (a - 1.0) * math.log(y) - y / k - math.lgamma(a) - a * math.log(k)
    if dist == LOGIT_NORMAL:
        z = math.log(y) - math.log1p(-y) - p[0]
        return -math.log(y * (1.0 - y)) - 0.5 * (LOG_2PI + math.log(p[1])) - z * z / (2.0 * p[1])
    if dist == LOG_NORMAL:
        ly = math.log(y)
        z = ly - p[0]
        return -ly - 0.5 * (LOG_2PI + math.log(p[1])) - z * z / (2.0 * p[1])
    if dist == NEG_BINOMIAL:
        r, q = p[0], p[1]
        return (
            math.lgamma(y + r)
            - math.lgamma(y + 1.0)
            - math.lgamma(r)
            + r * math.log(q)
            + y * math.log1p(-q)
        )
    if dist == NORMAL:
        z = y - p[0]
        return -0.5 * (LOG_2PI + math.log(p[1])) - z * z / (2.0 * p[1])
    if dist == POISSON:
        return -p[0] + y * math.log(p[0]) - math.lgamma(y + 1.0)
    if dist == TDIST:
        nu = p[0]
        return -0.5 * math.log(nu) - lbeta(0.5, 0.5 * nu) - 0.5 * (nu + 1.0) * math.log1p(y * y / nu)
    if dist == TDIST_LS:
        mu, s2, nu = p[0], p[1], p[2]
        z = y - mu
        return (
            -0.5 * math.log(nu * s2)
            - lbeta(0.5, 0.5 * nu)
            - 0.5 * (nu + 1.0) * math.log1p(z * z / (s2 * nu))
        )
    if dist == WEIBULL:
        lam, k = p[0], p[1]
        return math.log(k) + (k - 1.0) * math.log(y) - k * math.log(lam) - (y / lam) ** k
    return np.nan


@njit(cache=True)
def score(dist, p, y, out):
    if dist == BETA:
        a, b = p[0], p[1]
        dab = digamma(a + b)
        out[0] = math.log(y) + dab - digamma(a)
        out[1] = math.log1p(-y) + dab - digamma(b)
    elif dist == BETA_LS:
        lo, hi, a, b = p[0], p[1], p[2], p[3]
        dab = digamma(a + b)
        lw = math.log(hi - lo)
        out[0] = (1.0 - a) / (y - lo) + (a + b - 1.0) / (hi - lo)
        out[1] = (b - 1.0) / (hi - y) - (a + b - 1.0) / (hi - lo)
        out[2] = math.log(y - lo) - lw + dab - digamma(a)
        out[3] = math.log(hi - y) - lw + dab - digamma(b)
    elif dist == EXPONENTIAL:
        out[0] = 1.0 / p[0] - y
    elif dist == GAMMA:
        a, k = p[0], p[1]
        out[0] = math.log(y) - digamma(a) - math.log(k)
        out[1] = y / (k * k) - a / k
    elif dist == LOGIT_NORMAL:
        z = math.log(y) - math.log1p(-y) - p[0]
        out[0] = z / p[1]
        out[1] = -0.5 / p[1] * (1.0 - z * z / p[1])
    elif dist == LOG_NORMAL:
        z = math.log(y) - p[0]
        out[0] = z / p[1]
        out[1] = -0.5 / p[1] * (1.0 - z * z / p[1])
    elif dist == NEG_BINOMIAL:
        r, q = p[0], p[1]
        out[0] = digamma(y + r) - digamma(r) + math.log(q)
        out[1] = r / q - y / (1.0 - q)
    elif dist == NORMAL:
        z = y - p[0]
        out[0] = z / p[1]
        out[1] = -0.5 / p[1] * (1.0 - z * z / p[1])
    elif dist == POISSON:
        out[0] = (y - p[0]) / p[0]
    elif dist == TDIST:
        nu = p[0]
        y2 = y * y
        out[0] = 0.5 * (
            (nu + 1.0) * y2 / (nu * y2 + nu * nu)
            - 1.0 / nu
            - math.log1p(y2 / nu)
            + digamma(0.5 * (nu + 1.0))
            - digamma(0.5 * nu)
        )
    elif dist == TDIST_LS:
        mu, s2, nu = p[0], p[1], p[2]
        z = y - mu
        z2 = z * z
        out[0] = (nu + 1.0) * z / (z2 + s2 * nu)
        out[1] = -nu * (s2 - z2) / (2.0 * s2 * (nu * s2 + z2))
        out[2] = 0.5 * (
            (nu + 1.0) * z2 / (nu * z2 + s2 * nu * nu) - 1.0 / nu - math.log1p(z2 / (s2 * nu))
        ) + 0.5 * (digamma(0.5 * (nu + 1.0)) - digamma(0.5 * nu))
    elif dist == WEIBULL:
        lam, k = p[0], p[1]
        r = y / lam
        rk = r ** k
        out[0] = k / lam * (rk - 1.0)
        out[1] = 1.0 / k + math.log(r) * (1.0 - rk)


@njit(cache=True)
def _tdist_nu_info(nu):
    return 0.25 * (trigamma(0.5 * nu) - trigamma(0.5 * (nu + 1.0))) - (nu + 5.0) / (
        2.0 * nu * (nu + 1.0) * (nu + 3.0)
    )


@njit(cache=True)
def fisher(dist, p, out):
    """Expected information E[score score^T]; returns False if unavailable.

    Only the leading k x k block of ``out`` is written.
    """
    k = p.shape[0]
    for i in range(k):
        for j in range(k):
            out[i, j] = 0.0
    if dist == BETA:
        a, b = p[0], p[1]
        tab = trigamma(a + b)
        out[0, 0] = trigamma(a) - tab
        out[1, 1] = trigamma(b) - tab
        out[0, 1] = -tab
        out[1, 0] = -tab
    elif dist == EXPONENTIAL:
        out[0, 0] = 1.0 / (p[0] * p[0])
    elif dist == GAMMA:
        a, k = p[0], p[1]
        out[0, 0] = trigamma(a)
        out[0, 1] = 1.0 / k
        out[1, 0] = 1.0 / k
        out[1, 1] = a / (k * k)
    elif dist == LOGIT_NORMAL or dist == LOG_NORMAL or dist == NORMAL:
        out[0, 0] = 1.0 / p[1]
        out[1, 1] = 0.5 / (p[1] * p[1])
    elif dist == POISSON:
        out[0, 0] = 1.0 / p[0]
    elif dist == TDIST:
        out[0, 0] = _tdist_nu_info(p[0])
    elif dist == TDIST_LS:
        s2, nu = p[1], p[2]
        out[0, 0] = (nu + 1.0) / ((nu + 3.0) * s2)
        out[1, 1] = nu / (2.0 * s2 * s2 * (nu + 3.0))
        cross = -1.0 / (s2 * (nu + 1.0) * (nu + 3.0))
        out[1, 2] = cross
        out[2, 1] = cross
        out[2, 2] = _tdist_nu_info(nu)
    else:
        return False
    return True


@njit(cache=True)
def log_pdf_many(dist, p, ys, out):
    for i in range(ys.shape[0]):
        out[i] = log_pdf(dist, p, ys[i])


@njit(cache=True)
def score_many(dist, p, ys, out):
    for i in range(ys.shape[0]):
        score(dist, p, ys[i], out[i])


# ---------------------------------------------------------------------------
# links
# ---------------------------------------------------------------------------


@njit(cache=True)
def link1(kind, a, b, f):
    if kind == IDENTITY:
        return f
    if kind == LOG:
        return math.log(f - a)
    return math.log((f - a) / (b - f))


@njit(cache=True)
def unlink1(kind, a, b, x):
    if kind == IDENTITY:
        return x
    if kind == LOG:
        return a + math.exp(x)
    if x >= 0.0:
        return a + (b - a) / (1.0 + math.exp(-x))
    e = math.exp(x)
    return a + (b - a) * e / (1.0 + e)


@njit(cache=True)
def jac1(kind, a, b, f):
    if kind == IDENTITY:
        return 1.0
    if kind == LOG:
        return 1.0 / (f - a)
    return (b - a) / ((f - a) * (b - f))


@njit(cache=True)
def in_link_domain(kind, a, b, f):
    if kind == IDENTITY:
        return math.isfinite(f)
    if kind == LOG:
        return f > a and math.isfinite(f)
    return a < f < b


# ---------------------------------------------------------------------------
# scaled score
# ---------------------------------------------------------------------------


@njit(cache=True)
def chol_block(ws, src, dst, k):
    """Lower Cholesky of the k x k block of ``ws`` starting at row ``src``,
    written to the block at row ``dst``. False when not positive definite."""
    for i in range(k):
        for j in range(k):
            ws[dst + i, j] = 0.0
    for j in range(k):
        s = ws[src + j, j]
        for q in range(j):
            s -= ws[dst + j, q] * ws[dst + j, q]
        if not s > 0.0:
            return False
        ws[dst + j, j] = math.sqrt(s)
        for i in range(j + 1, k):
            s = ws[src + i, j]
            for q in range(j):
                s -= ws[dst + i, q] * ws[dst + j, q]
            ws[dst + i, j] = s / ws[dst + j, j]
    return True


@njit(cache=True)
def lower_inverse_block(ws, src, dst, k):
    """Inverse of the lower-triangular block at ``src`` into ``dst``."""
    for i in range(k):
        for j in range(k):
            ws[dst + i, j] = 0.0
    for i in range(k):
        ws[dst + i, i] = 1.0 / ws[src + i, i]
        for j in range(i):
            s = 0.0
            for q in range(j, i):
                s -= ws[src + i, q] * ws[dst + q, j]
            ws[dst + i, j] = s / ws[src + i, i]


def workspace(k):
    """Scratch array for ``scaled_score``."""
    return np.empty((4 * k + 2, k))


@njit(cache=True)
def scaled_score(dist, f, y, kinds, la, lb, scaling, out, ws):
    """Linked scaled score into ``out``; ``scaling`` is 0, 0.5 or 1.

    d=0:   (hdot)^-1 grad
    d=0.5: J grad with J the lower Cholesky factor of I^-1
    d=1:   hdot I^-1 grad

    ``ws`` is scratch space from ``workspace(k)``.
    """
    k = f.shape[0]
    score(dist, f, y, out)
    for i in range(k):
        if not math.isfinite(out[i]):
            return NONFINITE
        h = jac1(kinds[i], la[i], lb[i], f[i])
        if not abs(h) <= JAC_LIMIT:
            return JACOBIAN_BLOWUP
        ws[4 * k, i] = h
    return scale_score(dist, f, scaling, out, ws)


@njit(cache=True)
def scale_score(dist, f, scaling, out, ws):
    """Scale the raw score held in ``out`` in place.

    Row 4k of ``ws`` must hold hdot. Rows above it are four k x k blocks
    (I, its Cholesky factor, the inverse factor, J); row 4k+1 is a temp.
    One packed array keeps the call cheap inside the filter loop.
    """
    k = f.shape[0]
    HD = 4 * k
    TMP = 4 * k + 1
    if scaling == 0.0:
        for i in range(k):
            out[i] = out[i] / ws[HD, i]
        return OK
    # blocks: info at 0, L at k, Linv at 2k, scratch at 3k
    if not fisher(dist, f, ws):
        return SINGULAR
    if not chol_block(ws, 0, k, k):
        return SINGULAR
    lo = np.inf
    hi = 0.0
    for i in range(k):
        lo = min(lo, ws[k + i, i])
        hi = max(hi, ws[k + i, i])
    if (hi / lo) ** 2 > COND_LIMIT:
        return SINGULAR
    lower_inverse_block(ws, k, 2 * k, k)
    Li = 2 * k
    if scaling == 1.0:
        # I^-1 grad = Linv^T (Linv grad)
        for i in range(k):
            s = 0.0
            for j in range(i + 1):
                s += ws[Li + i, j] * out[j]
            ws[TMP, i] = s
        for i in range(k):
            s = 0.0
            for j in range(i, k):
                s += ws[Li + j, i] * ws[TMP, j]
            out[i] = ws[HD, i] * s
    else:
        # I^-1 = Linv^T Linv into block 0, then J = chol(I^-1) into block 3k
        for i in range(k):
            for j in range(k):
                s = 0.0
                for q in range(max(i, j), k):
                    s += ws[Li + q, i] * ws[Li + q, j]
                ws[i, j] = s
        if not chol_block(ws, 0, 3 * k, k):
            return SINGULAR
        # descending so out[j], j <= i, still holds the raw score
        for i in range(k - 1, -1, -1):
            s = 0.0
            for j in range(i + 1):
                s += ws[3 * k + i, j] * out[j]
            out[i] = s
    for i in range(k):
        if not math.isfinite(out[i]):
            return NONFINITE
    return OK


# ---------------------------------------------------------------------------
# recursion
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def advance(t, dist, omega, A, a_lags, B, b_lags, kinds, la, lb, init, m, ftil, stil, f_out, ftil_out):
    """Parameters at period ``t`` from the linked params/scores before ``t``.

    Histories are indexed by absolute period. Periods before ``m`` take
    ``init`` rows, consumed cyclically.
    """
    k = omega.shape[0]
    if t < m:
        row = init[t % init.shape[0]]
        for i in range(k):
            f_out[i] = row[i]
            if not in_link_domain(kinds[i], la[i], lb[i], row[i]):
                return OUT_OF_DOMAIN
            ftil_out[i] = link1(kinds[i], la[i], lb[i], row[i])
    else:
        for i in range(k):
            ftil_out[i] = omega[i]
        for n in range(a_lags.shape[0]):
            src = t - a_lags[n]
            if src >= 0:
                for i in range(k):
                    if A[n, i] != 0.0:
                        ftil_out[i] += A[n, i] * stil[src, i]
        for n in range(b_lags.shape[0]):
            src = t - b_lags[n]
            if src >= 0:
                for i in range(k):
                    if B[n, i] != 0.0:
                        ftil_out[i] += B[n, i] * ftil[src, i]
        for i in range(k):
            if not math.isfinite(ftil_out[i]):
                return NONFINITE
            f_out[i] = unlink1(kinds[i], la[i], lb[i], ftil_out[i])
            if not in_link_domain(kinds[i], la[i], lb[i], f_out[i]):
                return OUT_OF_DOMAIN
    if not params_valid(dist, f_out):
        return OUT_OF_DOMAIN
    return OK


@njit(cache=True, inline="always")
def observe(dist, f, y, kinds, la, lb, scaling, stil_out, ws):
    """Log-density and linked scaled score at one period; (status, loglik)."""
    ll = log_pdf(dist, f, y)
    if not math.isfinite(ll):
        return NONFINITE, ll
    status = scaled_score(dist, f, y, kinds, la, lb, scaling, stil_out, ws)
    return status, ll


@njit(cache=True)
def run_filter(dist, y, omega, A, a_lags, B, b_lags, kinds, la, lb, scaling, init, m, f, ftil, stil, ll):
    """Full filtering pass. Returns (status, failing period or -1).

    The recursion is written out here rather than calling ``advance``:
    every array argument of a non-inlined call costs a refcount round trip,
    which dominated the per-period work.
    """
    T = y.shape[0]
    k = omega.shape[0]
    nA = a_lags.shape[0]
    nB = b_lags.shape[0]
    ws = np.empty((4 * k + 2, k))
    hrow = 4 * k
    cur = np.empty(k)
    xt = np.empty(k)
    st = np.empty(k)
    for t in range(T):
        if t < m:
            r = t % init.shape[0]
            for i in range(k):
                cur[i] = init[r, i]
                if not in_link_domain(kinds[i], la[i], lb[i], cur[i]):
                    return OUT_OF_DOMAIN, t
                xt[i] = link1(kinds[i], la[i], lb[i], cur[i])
        else:
            for i in range(k):
                xt[i] = omega[i]
            for n in range(nA):
                src = t - a_lags[n]
                if src >= 0:
                    for i in range(k):
                        xt[i] += A[n, i] * stil[src, i]
            for n in range(nB):
                src = t - b_lags[n]
                if src >= 0:
                    for i in range(k):
                        xt[i] += B[n, i] * ftil[src, i]
            for i in range(k):
                if not math.isfinite(xt[i]):
                    return NONFINITE, t
                cur[i] = unlink1(kinds[i], la[i], lb[i], xt[i])
                if not in_link_domain(kinds[i], la[i], lb[i], cur[i]):
                    return OUT_OF_DOMAIN, t
        for i in range(k):
            f[t, i] = cur[i]
            ftil[t, i] = xt[i]
        if not params_valid(dist, cur):
            return OUT_OF_DOMAIN, t
        lp = log_pdf(dist, cur, y[t])
        ll[t] = lp
        if not math.isfinite(lp):
            return NONFINITE, t
        # scaled_score, unrolled for the common d=0 case
        score(dist, cur, y[t], st)
        for i in range(k):
            if not math.isfinite(st[i]):
                return NONFINITE, t
            h = jac1(kinds[i], la[i], lb[i], cur[i])
            if not abs(h) <= JAC_LIMIT:
                return JACOBIAN_BLOWUP, t
            ws[hrow, i] = h
        if scaling == 0.0:
            for i in range(k):
                stil[t, i] = st[i] / ws[hrow, i]
        else:
            status = scale_score(dist, cur, scaling, st, ws)
            for i in range(k):
                stil[t, i] = st[i]
            if status != OK:
                return status, t
    return OK, -1
