"""Hot numeric kernels: truncated-normal sampling and the latent-response scan.

Every kernel is written once as plain Python over numpy arrays and compiled
with numba when available.  Set ``RANKFACTOR_DISABLE_NUMBA=1`` to run the
pure-numpy fallback instead; both paths execute the same function bodies and
produce bit-identical streams (see ``benchmarks/bench_kernels.py`` for the
speed difference).

Randomness inside kernels comes from a splitmix64 counter generator seeded
once per call from the caller's ``numpy.random.Generator``, so chains are
reproducible regardless of the backend.
"""

import math
import os

import numpy as np

NUMBA_DISABLED = os.environ.get("RANKFACTOR_DISABLE_NUMBA", "0") == "1"

if not NUMBA_DISABLED:
    try:
        from numba import njit as _numba_njit

        def _jit(func):
            return _numba_njit(cache=True)(func)

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USING_NUMBA = False
else:
    USING_NUMBA = False

if not USING_NUMBA:
    def _jit(func):
        return func

_SQRT2 = math.sqrt(2.0)

# splitmix64 constants
_U64 = np.uint64
_GOLD = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_S30 = _U64(30)
_S27 = _U64(27)
_S31 = _U64(31)
_S11 = _U64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# boundary distance (in sd units) beyond which one-sided tail rejection
# replaces the inverse CDF
TAIL_SWITCH = 5.0


def draw_kernel_seed(rng):
    """One splitmix64 state word from a numpy Generator."""
    return np.asarray([rng.integers(0, 2**64, dtype=np.uint64)], dtype=np.uint64)


@_jit
def _next_uniform(state):
    # splitmix64; uniform on [0, 1) with 53-bit mantissa
    state[0] += _GOLD
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * _INV53


@_jit
def _ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@_jit
def _ndtr_upper(x):
    # 1 - Phi(x), accurate far into the right tail
    return 0.5 * math.erfc(x / _SQRT2)


@_jit
def _ndtri(p):
    # Wichura's AS 241 rational approximation (PPND16), |rel err| ~ 1e-15
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        val = -val
    return val


@_jit
def _tn_right_tail(a, b, state):
    # standard normal restricted to (a, b) with a >= TAIL_SWITCH; exponential
    # proposal with the optimal rate (Robert 1995), rejecting draws above b
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        u = _next_uniform(state)
        x = a - math.log(1.0 - u) / alpha
        if x > b:
            continue
        v = _next_uniform(state)
        d = x - alpha
        if v <= math.exp(-0.5 * d * d):
            return x


@_jit
def _tn_standard(a, b, state):
    # one draw from the standard normal truncated to (a, b); bounds may be
    # infinite.  Central regime uses the inverse CDF on whichever tail keeps
    # erfc well conditioned; far one-sided tails use rejection.
    if a == -np.inf and b == np.inf:
        return _ndtri(_next_uniform(state))
    # rejection only pays when the interval is wide enough to accept quickly;
    # narrow far-tail intervals stay on the complementary inverse CDF, which
    # erfc keeps well conditioned out to ~37 sd
    if a >= TAIL_SWITCH and (b == np.inf or b - a > 0.5):
        return _tn_right_tail(a, b, state)
    if b <= -TAIL_SWITCH and (a == -np.inf or b - a > 0.5):
        return -_tn_right_tail(-b, -a, state)
    u = _next_uniform(state)
    if a >= 0.0:
        pa = _ndtr_upper(a)
        pb = 0.0 if b == np.inf else _ndtr_upper(b)
        p = pa + u * (pb - pa)
        if p <= 0.0:
            return 0.5 * (a + b)
        z = -_ndtri(p)
    elif b <= 0.0:
        pb = _ndtr(b)
        pa = 0.0 if a == -np.inf else _ndtr(a)
        p = pb + u * (pa - pb)
        if p <= 0.0:
            return 0.5 * (a + b)
        z = _ndtri(p)
    else:
        pa = _ndtr(a)
        pb = _ndtr(b)
        z = _ndtri(pa + u * (pb - pa))
    if z <= a or z >= b:
        # rounding pushed the draw onto (or past) a boundary
        if b == np.inf:
            z = a + 1e-8 * (1.0 + abs(a))
        elif a == -np.inf:
            z = b - 1e-8 * (1.0 + abs(b))
        else:
            z = 0.5 * (a + b)
    return z


@_jit
def _truncnorm_fill(out, a, b, state):
    for i in range(out.shape[0]):
        out[i] = _tn_standard(a[i], b[i], state)


@_jit
def _scan_latent(z, level_codes, n_levels, mu, sd, lvl_max, lvl_min, state):
    # One full pass of latent-response updates, column-major and ascending in
    # i within each column.  level_codes holds the per-column ordinal code of
    # each observed response (-1 for missing).  Cells at the code above /
    # below bound the truncation interval; with the rank-consistency
    # invariant holding for all other cells, the extremum over the adjacent
    # codes equals the extremum over all smaller / larger codes.
    n_rows, n_cols = z.shape
    repairs = 0
    for j in range(n_cols):
        n_lvl = n_levels[j]
        sd_j = sd[j]
        for lvl in range(n_lvl):
            lvl_max[lvl] = -np.inf
            lvl_min[lvl] = np.inf
        for i in range(n_rows):
            lvl = level_codes[i, j]
            if lvl >= 0:
                v = z[i, j]
                if v > lvl_max[lvl]:
                    lvl_max[lvl] = v
                if v < lvl_min[lvl]:
                    lvl_min[lvl] = v
        for i in range(n_rows):
            lvl = level_codes[i, j]
            if lvl < 0:
                lo = -np.inf
                hi = np.inf
            else:
                lo = lvl_max[lvl - 1] if lvl > 0 else -np.inf
                hi = lvl_min[lvl + 1] if lvl < n_lvl - 1 else np.inf
            m = mu[i, j]
            if lo >= hi:
                # numerically collapsed interval; park the draw at the middle
                z_new = 0.5 * (lo + hi)
                repairs += 1
            else:
                z_new = m + sd_j * _tn_standard((lo - m) / sd_j, (hi - m) / sd_j, state)
            if lvl < 0:
                z[i, j] = z_new
                continue
            z_old = z[i, j]
            z[i, j] = z_new
            if z_new >= lvl_max[lvl]:
                lvl_max[lvl] = z_new
            elif z_old == lvl_max[lvl]:
                mx = -np.inf
                for k in range(n_rows):
                    if level_codes[k, j] == lvl and z[k, j] > mx:
                        mx = z[k, j]
                lvl_max[lvl] = mx
            if z_new <= lvl_min[lvl]:
                lvl_min[lvl] = z_new
            elif z_old == lvl_min[lvl]:
                mn = np.inf
                for k in range(n_rows):
                    if level_codes[k, j] == lvl and z[k, j] < mn:
                        mn = z[k, j]
                lvl_min[lvl] = mn
    return repairs


def scan_latent_responses(z, level_codes, n_levels, mu, sd, seed_state):
    """Run one in-place latent-response sweep; returns the repair count."""
    max_levels = int(n_levels.max())
    lvl_max = np.empty(max_levels, dtype=np.float64)
    lvl_min = np.empty(max_levels, dtype=np.float64)
    if USING_NUMBA:
        return _scan_latent(z, level_codes, n_levels, mu, sd, lvl_max, lvl_min, seed_state)
    with np.errstate(over="ignore"):
        return _scan_latent(z, level_codes, n_levels, mu, sd, lvl_max, lvl_min, seed_state)


def truncnorm_sample(lower, upper, mean, sd, seed_state, size=None):
    """Draw truncated normals with the kernel sampler.

    ``lower``/``upper`` are the truncation bounds on the outcome scale; any
    entry may be infinite.  Scalars broadcast against ``size``.
    """
    if size is None:
        size = np.broadcast_shapes(np.shape(lower), np.shape(upper))
        size = size if size else (1,)
        scalar = np.ndim(lower) == 0 and np.ndim(upper) == 0
    else:
        scalar = False
        size = (size,) if np.ndim(size) == 0 else tuple(size)
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), size)
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), size)
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), size)
    sd = np.broadcast_to(np.asarray(sd, dtype=np.float64), size)
    a = ((lower - mean) / sd).ravel()
    b = ((upper - mean) / sd).ravel()
    out = np.empty(a.shape[0], dtype=np.float64)
    if USING_NUMBA:
        _truncnorm_fill(out, a, b, seed_state)
    else:
        with np.errstate(over="ignore"):
            _truncnorm_fill(out, a, b, seed_state)
    out = mean.ravel() + sd.ravel() * out
    if scalar:
        return float(out[0])
    return out.reshape(size)
