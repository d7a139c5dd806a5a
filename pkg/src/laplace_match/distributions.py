"""Exponential-family parameter types, densities, sampling, moments, and
conjugate updates in the standard basis.

Families: Exponential, Gamma, InverseGamma, ChiSquared, Beta, Dirichlet,
Wishart, InverseWishart. All values are immutable after construction and all
operations are pure functions of (inputs, explicit seed).
"""

import numpy as np
from scipy.special import betaln, digamma, gammaln, multigammaln

from .errors import InvalidParams, NonConjugatePair, OutOfSupport

# Default pseudo-count for pseudo-likelihood construction; overridable
# everywhere it appears.
DEFAULT_EPSILON_A = 0.01

_SCALAR_FAMILIES = ("exponential", "gamma", "inverse_gamma", "chi_squared", "beta")
FAMILIES = _SCALAR_FAMILIES + ("dirichlet", "wishart", "inverse_wishart")

_FIELDS = {
    "exponential": ("lam",),
    "gamma": ("alpha", "lam"),
    "inverse_gamma": ("alpha", "lam"),
    "chi_squared": ("k",),
    "beta": ("alpha", "beta"),
    "dirichlet": ("alpha",),
    "wishart": ("n", "V"),
    "inverse_wishart": ("nu", "Psi"),
}


def _check_positive_scalar(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise InvalidParams(f"{name} must be a strictly positive real, got {value}")
    return value


def _check_spd(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidParams(f"{name} must be a square matrix, got shape {M.shape}")
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise InvalidParams(f"{name} must be symmetric to 1e-12 relative")
    M = 0.5 * (M + M.T)
    w = np.linalg.eigvalsh(M)
    if w.min() <= 1e-10 * max(w.max(), 1e-300):
        raise InvalidParams(f"{name} must be positive definite")
    return M


class EFParams:
    """Tagged union of the eight exponential-family parameter records.

    Instances are produced by the per-family constructors below (or
    `from_record`); all parameters are validated on construction and the
    record is immutable afterwards.
    """

    __slots__ = ("family", "lam", "alpha", "beta", "k", "n", "V", "nu", "Psi")

    def __init__(self, family, **fields):
        if family not in _FIELDS:
            raise InvalidParams(f"unknown family {family!r}")
        object.__setattr__(self, "family", family)
        expected = _FIELDS[family]
        if set(fields) != set(expected):
            raise InvalidParams(f"{family} expects fields {expected}, got {tuple(fields)}")
        for name, value in fields.items():
            if name in ("V", "Psi"):
                value = _check_spd(value, name)
                value.setflags(write=False)
            elif name == "alpha" and family == "dirichlet":
                value = np.asarray(value, dtype=float)
                if value.ndim != 1 or value.size < 2:
                    raise InvalidParams("dirichlet alpha must be a vector with K >= 2")
                if not np.all(np.isfinite(value)) or np.any(value <= 0.0):
                    raise InvalidParams("dirichlet alpha entries must be positive")
                value = value.copy()
                value.setflags(write=False)
            else:
                value = _check_positive_scalar(value, name)
            object.__setattr__(self, name, value)
        if family == "wishart" and self.n <= self.V.shape[0] - 1:
            raise InvalidParams(f"wishart needs n > p-1, got n={self.n}, p={self.V.shape[0]}")
        if family == "inverse_wishart" and self.nu <= self.Psi.shape[0] - 1:
            raise InvalidParams(
                f"inverse_wishart needs nu > p-1, got nu={self.nu}, p={self.Psi.shape[0]}"
            )

    def __setattr__(self, name, value):
        raise AttributeError("EFParams is immutable")

    @property
    def p(self):
        """Matrix dimension for the Wishart families."""
        if self.family == "wishart":
            return self.V.shape[0]
        if self.family == "inverse_wishart":
            return self.Psi.shape[0]
        raise AttributeError(f"{self.family} has no matrix dimension")

    @property
    def K(self):
        """Category count for the Dirichlet family."""
        if self.family != "dirichlet":
            raise AttributeError(f"{self.family} has no category count")
        return int(self.alpha.size)

    def __repr__(self):
        parts = []
        for name in _FIELDS[self.family]:
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                parts.append(f"{name}={np.array2string(value, precision=6)}")
            else:
                parts.append(f"{name}={value:g}")
        return f"EFParams({self.family}, {', '.join(parts)})"

    def __eq__(self, other):
        if not isinstance(other, EFParams) or self.family != other.family:
            return NotImplemented
        for name in _FIELDS[self.family]:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    def to_record(self):
        """Serialize to a JSON-compatible {family, params...} record."""
        rec = {"family": self.family}
        for name in _FIELDS[self.family]:
            value = getattr(self, name)
            rec[name] = value.tolist() if isinstance(value, np.ndarray) else value
        return rec


def param_fields(family):
    """Ordered parameter field names of a family."""
    if family not in _FIELDS:
        raise InvalidParams(f"unknown family {family!r}")
    return _FIELDS[family]


def from_record(rec):
    """Rebuild an EFParams from a `to_record` dictionary."""
    rec = dict(rec)
    family = rec.pop("family", None)
    if family not in _FIELDS:
        raise InvalidParams(f"record has unknown family {family!r}")
    return EFParams(family, **rec)


def exponential(lam):
    return EFParams("exponential", lam=lam)


def gamma(alpha, lam):
    return EFParams("gamma", alpha=alpha, lam=lam)


def inverse_gamma(alpha, lam):
    return EFParams("inverse_gamma", alpha=alpha, lam=lam)


def chi_squared(k):
    return EFParams("chi_squared", k=k)


def beta(alpha, beta_):
    return EFParams("beta", alpha=alpha, beta=beta_)


def dirichlet(alpha):
    return EFParams("dirichlet", alpha=alpha)


def wishart(n, V):
    return EFParams("wishart", n=n, V=V)


def inverse_wishart(nu, Psi):
    return EFParams("inverse_wishart", nu=nu, Psi=Psi)


# ---------------------------------------------------------------------------
# Support handling
# ---------------------------------------------------------------------------


def _simplex_check(x, K):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != K:
        raise OutOfSupport(f"expected simplex points of length {K}, got {x.shape}")
    if np.any(x <= 0.0) or np.any(np.abs(np.sum(x, axis=-1) - 1.0) > 1e-9):
        raise OutOfSupport("point is not in the open simplex")
    return x


def _spd_check_batch(x, p):
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (p, p):
        raise OutOfSupport(f"expected {p}x{p} matrices, got shape {x.shape}")
    if np.max(np.abs(x - np.swapaxes(x, -1, -2))) > 1e-9 * max(np.max(np.abs(x)), 1e-300):
        raise OutOfSupport("matrix point is not symmetric")
    w = np.linalg.eigvalsh(x)
    if np.any(w <= 0.0):
        raise OutOfSupport("matrix point is not positive definite")
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def log_pdf(params, x):
    """Log-density of `params` at `x` (vectorized over leading axes).

    Args:
        params: EFParams.
        x: point strictly inside the family's support; scalar families accept
            arrays, Dirichlet accepts (..., K), Wisharts accept (..., p, p).

    Returns:
        Log-density value(s).

    Raises:
        OutOfSupport: any evaluation point violates the support.
    """
    fam = params.family
    if fam in _SCALAR_FAMILIES:
        x = np.asarray(x, dtype=float)
        if fam == "beta":
            if np.any(x <= 0.0) or np.any(x >= 1.0):
                raise OutOfSupport("beta support is the open unit interval")
        elif np.any(x <= 0.0):
            raise OutOfSupport(f"{fam} support is the positive reals")
    if fam == "exponential":
        return np.log(params.lam) - params.lam * x
    if fam == "gamma":
        a, lam = params.alpha, params.lam
        return a * np.log(lam) - gammaln(a) + (a - 1.0) * np.log(x) - lam * x
    if fam == "inverse_gamma":
        a, lam = params.alpha, params.lam
        return a * np.log(lam) - gammaln(a) - (a + 1.0) * np.log(x) - lam / x
    if fam == "chi_squared":
        h = 0.5 * params.k
        return -h * np.log(2.0) - gammaln(h) + (h - 1.0) * np.log(x) - 0.5 * x
    if fam == "beta":
        a, b = params.alpha, params.beta
        return -betaln(a, b) + (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)
    if fam == "dirichlet":
        a = params.alpha
        x = _simplex_check(x, a.size)
        norm = gammaln(np.sum(a)) - np.sum(gammaln(a))
        return norm + np.sum((a - 1.0) * np.log(x), axis=-1)
    if fam == "wishart":
        n, V, p = params.n, params.V, params.p
        x = _spd_check_batch(x, p)
        _, logdet_x = np.linalg.slogdet(x)
        _, logdet_v = np.linalg.slogdet(V)
        Vinv = np.linalg.inv(V)
        tr = np.einsum("ij,...ji->...", Vinv, x)
        const = -0.5 * n * p * np.log(2.0) - 0.5 * n * logdet_v - multigammaln(0.5 * n, p)
        return const + 0.5 * (n - p - 1.0) * logdet_x - 0.5 * tr
    if fam == "inverse_wishart":
        nu, Psi, p = params.nu, params.Psi, params.p
        x = _spd_check_batch(x, p)
        _, logdet_x = np.linalg.slogdet(x)
        _, logdet_psi = np.linalg.slogdet(Psi)
        xinv = np.linalg.inv(x)
        tr = np.einsum("ij,...ji->...", Psi, xinv)
        const = 0.5 * nu * logdet_psi - 0.5 * nu * p * np.log(2.0) - multigammaln(0.5 * nu, p)
        return const - 0.5 * (nu + p + 1.0) * logdet_x - 0.5 * tr
    raise InvalidParams(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _bartlett(rng, n, V, count):
    """Wishart draws via the Bartlett construction, symmetrized."""
    p = V.shape[0]
    L = np.linalg.cholesky(V)
    A = np.zeros((count, p, p))
    for i in range(p):
        A[:, i, i] = np.sqrt(rng.chisquare(n - i, size=count))
        for j in range(i):
            A[:, i, j] = rng.standard_normal(count)
    T = L @ A
    S = T @ np.swapaxes(T, -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def sample(params, seed, count):
    """Deterministic sampler for every family.

    Args:
        params: EFParams.
        seed: 64-bit integer seed (or numpy SeedSequence material).
        count: number of draws, >= 1.

    Returns:
        Array of draws: (count,) for scalar families, (count, K) for the
        Dirichlet, (count, p, p) for the Wishart families.
    """
    count = int(count)
    if count < 1:
        raise InvalidParams("count must be >= 1")
    rng = np.random.default_rng(seed)
    fam = params.family
    if fam == "exponential":
        return rng.exponential(1.0 / params.lam, size=count)
    if fam == "gamma":
        return rng.gamma(params.alpha, 1.0 / params.lam, size=count)
    if fam == "inverse_gamma":
        return 1.0 / rng.gamma(params.alpha, 1.0 / params.lam, size=count)
    if fam == "chi_squared":
        return rng.chisquare(params.k, size=count)
    if fam == "beta":
        return rng.beta(params.alpha, params.beta, size=count)
    if fam == "dirichlet":
        # Normalized independent Gamma draws.
        g = rng.gamma(params.alpha, 1.0, size=(count, params.alpha.size))
        return g / np.sum(g, axis=-1, keepdims=True)
    if fam == "wishart":
        return _bartlett(rng, params.n, params.V, count)
    if fam == "inverse_wishart":
        W = _bartlett(rng, params.nu, np.linalg.inv(params.Psi), count)
        X = np.linalg.inv(W)
        return 0.5 * (X + np.swapaxes(X, -1, -2))
    raise InvalidParams(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# Conjugate updates
# ---------------------------------------------------------------------------


def pseudo_prior(family, epsilon_a=DEFAULT_EPSILON_A, K=None, p=None, dirichlet_prior=1.0):
    """Weak conjugate prior used to build pseudo-likelihoods.

    Beta and Gamma get epsilon_a on each component. Dirichlet gets the
    pseudo-count `dirichlet_prior` on every category (count data can be all
    zero, so the prior must keep alpha positive on its own). InverseWishart
    gets nu = p - 1 + epsilon_a and Psi = epsilon_a*I, the smallest
    epsilon-shifted dof that is still a valid parameter.

    Args:
        family: conjugate family tag.
        epsilon_a: positive prior weight.
        K: category count, required for dirichlet.
        p: matrix dimension, required for inverse_wishart.
        dirichlet_prior: per-category Dirichlet pseudo-count.
    """
    if epsilon_a <= 0.0:
        raise InvalidParams("epsilon_a must be positive")
    if family == "beta":
        return beta(epsilon_a, epsilon_a)
    if family == "gamma":
        return gamma(epsilon_a, epsilon_a)
    if family == "dirichlet":
        if K is None:
            raise InvalidParams("dirichlet pseudo-prior needs K")
        return dirichlet(np.full(int(K), float(dirichlet_prior)))
    if family == "inverse_wishart":
        if p is None:
            raise InvalidParams("inverse_wishart pseudo-prior needs p")
        return inverse_wishart(p - 1.0 + epsilon_a, epsilon_a * np.eye(int(p)))
    raise NonConjugatePair(f"no conjugate observation model for family {family!r}")


def conjugate_update(prior, observations):
    """Fold an observation batch into a conjugate prior.

    Pairs: Beta with 0/1 labels, Gamma with Poisson counts, Dirichlet with a
    per-category count vector, InverseWishart with scatter matrices. The
    sufficient-statistic extraction lives here so callers never hand-compute
    natural parameters.

    Args:
        prior: EFParams of a conjugate family.
        observations: family-appropriate raw batch (see above).

    Returns:
        Posterior EFParams.

    Raises:
        NonConjugatePair: family has no observation model here.
        InvalidParams: malformed observation batch.
    """
    fam = prior.family
    if fam == "beta":
        labels = np.asarray(observations, dtype=float).ravel()
        if labels.size and not np.all(np.isin(labels, (0.0, 1.0))):
            raise InvalidParams("beta observations must be 0/1 labels")
        pos = float(np.sum(labels))
        return beta(prior.alpha + pos, prior.beta + labels.size - pos)
    if fam == "gamma":
        counts = np.asarray(observations, dtype=float).ravel()
        if counts.size and (np.any(counts < 0) or np.any(counts != np.round(counts))):
            raise InvalidParams("gamma observations must be non-negative integer counts")
        return gamma(prior.alpha + float(np.sum(counts)), prior.lam + counts.size)
    if fam == "dirichlet":
        counts = np.asarray(observations, dtype=float).ravel()
        if counts.size != prior.alpha.size:
            raise InvalidParams("dirichlet count vector length must equal K")
        if np.any(counts < 0):
            raise InvalidParams("dirichlet counts must be non-negative")
        return dirichlet(prior.alpha + counts)
    if fam == "inverse_wishart":
        scatters = np.asarray(observations, dtype=float)
        if scatters.ndim == 2:
            scatters = scatters[None]
        p = prior.p
        if scatters.ndim != 3 or scatters.shape[-2:] != (p, p):
            raise InvalidParams(f"scatter batch must have shape (m, {p}, {p})")
        scale = max(np.max(np.abs(scatters)), 1e-300)
        if np.max(np.abs(scatters - np.swapaxes(scatters, -1, -2))) > 1e-9 * scale:
            raise InvalidParams("scatter matrices must be symmetric")
        w = np.linalg.eigvalsh(0.5 * (scatters + np.swapaxes(scatters, -1, -2)))
        if np.any(w < -1e-10 * scale):
            raise InvalidParams("scatter matrices must be positive semidefinite")
        return inverse_wishart(prior.nu + scatters.shape[0], prior.Psi + scatters.sum(axis=0))
    raise NonConjugatePair(f"no conjugate observation model for family {fam!r}")


# ---------------------------------------------------------------------------
# Canonical form and moments
# ---------------------------------------------------------------------------


class CanonicalEF:
    """Canonical exponential-family decomposition h(x) exp(w . phi(x) - log Z).

    `phi` maps a support point to a flat statistic vector; `w` is the flat
    natural-parameter vector in the same order; `log_h` is the log base
    measure (identically 0 for every family here, kept for the contract).
    """

    __slots__ = ("family", "phi", "w", "log_h", "log_z", "statistic_names")

    def __init__(self, family, phi, w, log_h, log_z, statistic_names):
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "w", np.asarray(w, dtype=float))
        object.__setattr__(self, "log_h", log_h)
        object.__setattr__(self, "log_z", float(log_z))
        object.__setattr__(self, "statistic_names", tuple(statistic_names))
        if not np.isfinite(self.log_z):
            raise InvalidParams("log Z is not finite for these parameters")

    def __setattr__(self, name, value):
        raise AttributeError("CanonicalEF is immutable")

    def log_density(self, x):
        """Assemble the log-density from the canonical pieces."""
        return self.log_h(x) + float(np.dot(self.w, self.phi(x))) - self.log_z


def _zero_log_h(x):
    return 0.0


def canonical_form(params):
    """Canonical decomposition of `params` (see CanonicalEF)."""
    fam = params.family
    if fam == "exponential":
        return CanonicalEF(
            fam, lambda x: np.array([float(x)]), [-params.lam], _zero_log_h,
            -np.log(params.lam), ("x",),
        )
    if fam == "gamma":
        a, lam = params.alpha, params.lam
        return CanonicalEF(
            fam, lambda x: np.array([np.log(x), float(x)]), [a - 1.0, -lam],
            _zero_log_h, gammaln(a) - a * np.log(lam), ("log x", "x"),
        )
    if fam == "inverse_gamma":
        a, lam = params.alpha, params.lam
        return CanonicalEF(
            fam, lambda x: np.array([np.log(x), 1.0 / x]), [-a - 1.0, -lam],
            _zero_log_h, gammaln(a) - a * np.log(lam), ("log x", "1/x"),
        )
    if fam == "chi_squared":
        h = 0.5 * params.k
        return CanonicalEF(
            fam, lambda x: np.array([np.log(x), float(x)]), [h - 1.0, -0.5],
            _zero_log_h, h * np.log(2.0) + gammaln(h), ("log x", "x"),
        )
    if fam == "beta":
        a, b = params.alpha, params.beta
        return CanonicalEF(
            fam, lambda x: np.array([np.log(x), np.log1p(-x)]), [a - 1.0, b - 1.0],
            _zero_log_h, betaln(a, b), ("log x", "log(1-x)"),
        )
    if fam == "dirichlet":
        a = params.alpha
        return CanonicalEF(
            fam, lambda x: np.log(np.asarray(x, dtype=float)), a - 1.0,
            _zero_log_h, np.sum(gammaln(a)) - gammaln(np.sum(a)),
            tuple(f"log x_{i}" for i in range(a.size)),
        )
    if fam == "wishart":
        n, V, p = params.n, params.V, params.p
        _, logdet_v = np.linalg.slogdet(V)
        w = np.concatenate([[0.5 * (n - p - 1.0)], (-0.5 * np.linalg.inv(V)).ravel()])

        def phi(X):
            X = np.asarray(X, dtype=float)
            return np.concatenate([[np.linalg.slogdet(X)[1]], X.ravel()])

        log_z = 0.5 * n * p * np.log(2.0) + 0.5 * n * logdet_v + multigammaln(0.5 * n, p)
        return CanonicalEF(fam, phi, w, _zero_log_h, log_z, ("log|X|", "X"))
    if fam == "inverse_wishart":
        nu, Psi, p = params.nu, params.Psi, params.p
        _, logdet_psi = np.linalg.slogdet(Psi)
        w = np.concatenate([[-0.5 * (nu + p + 1.0)], (-0.5 * Psi).ravel()])

        def phi(X):
            X = np.asarray(X, dtype=float)
            return np.concatenate([[np.linalg.slogdet(X)[1]], np.linalg.inv(X).ravel()])

        log_z = 0.5 * nu * p * np.log(2.0) - 0.5 * nu * logdet_psi + multigammaln(0.5 * nu, p)
        return CanonicalEF(fam, phi, w, _zero_log_h, log_z, ("log|X|", "X^{-1}"))
    raise InvalidParams(f"unknown family {fam!r}")


def ef_mean(params):
    """Expected sufficient statistics E[phi(x)], flat, in canonical order."""
    fam = params.family
    if fam == "exponential":
        return np.array([1.0 / params.lam])
    if fam == "gamma":
        return np.array([digamma(params.alpha) - np.log(params.lam), params.alpha / params.lam])
    if fam == "inverse_gamma":
        return np.array([np.log(params.lam) - digamma(params.alpha), params.alpha / params.lam])
    if fam == "chi_squared":
        return np.array([digamma(0.5 * params.k) + np.log(2.0), params.k])
    if fam == "beta":
        a, b = params.alpha, params.beta
        return np.array([digamma(a) - digamma(a + b), digamma(b) - digamma(a + b)])
    if fam == "dirichlet":
        return digamma(params.alpha) - digamma(np.sum(params.alpha))
    if fam == "wishart":
        n, V, p = params.n, params.V, params.p
        e_logdet = np.sum(digamma(0.5 * (n - np.arange(p)))) + p * np.log(2.0)
        e_logdet += np.linalg.slogdet(V)[1]
        return np.concatenate([[e_logdet], (n * V).ravel()])
    if fam == "inverse_wishart":
        nu, Psi, p = params.nu, params.Psi, params.p
        e_logdet = np.linalg.slogdet(Psi)[1] - p * np.log(2.0)
        e_logdet -= np.sum(digamma(0.5 * (nu - np.arange(p))))
        return np.concatenate([[e_logdet], (nu * np.linalg.inv(Psi)).ravel()])
    raise InvalidParams(f"unknown family {fam!r}")
