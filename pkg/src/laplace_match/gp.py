"""Gaussian process regression on bridge-produced pseudo-observations.

The GP layer consumes heteroskedastic Gaussian observations (mu_i, sigma_i)
of latent function values; sigma may be a scalar, per-point variances, or a
dense/block-diagonal covariance. Noise enters training only; predictions are
for the noise-free latent function. The prior mean is constant (zero unless
stated) or a callable of the inputs.

build_inducing_set performs the conjugacy-based reduction: k-means++ cluster
centers over the inputs, one folded pseudo-likelihood per cluster, one
Gaussian per cluster via the bridge. With cluster count equal to the number
of distinct inputs it degenerates to per-point pseudo-likelihoods, so the
inducing fit reproduces the plain fit.
"""

import numpy as np

from . import bridges, distributions, transforms
from .errors import DimensionMismatch, EmptyCluster, NonConjugatePair, NotPositiveDefinite

_JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def _as_inputs(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    elif X.ndim != 2:
        raise DimensionMismatch("inputs must be (n,) or (n, d)")
    return X


def chol_with_jitter(A):
    """Cholesky with an escalating diagonal jitter ladder.

    Tries no jitter, then 1e-10 .. 1e-6 relative to the mean diagonal.
    Returns (L, jitter_used); raises NotPositiveDefinite when the top rung
    fails.
    """
    A = np.asarray(A, dtype=float)
    scale = float(np.mean(np.diag(A))) if A.size else 1.0
    scale = scale if scale > 0.0 else 1.0
    for level in _JITTER_LADDER:
        try:
            L = np.linalg.cholesky(A + level * scale * np.eye(A.shape[0]))
            return L, level * scale
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("matrix stayed non-PD through the jitter ladder")


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Base kernel; callable as k(X, Z) on (n, d) inputs.

    `dims` restricts a leaf kernel to selected input columns, so products of
    per-coordinate kernels can share one joint input matrix.
    """

    tag = "kernel"

    def __init__(self, dims=None):
        self.dims = None if dims is None else tuple(np.atleast_1d(dims).tolist())

    def _select(self, X):
        X = _as_inputs(X)
        if self.dims is None:
            return X
        return X[:, list(self.dims)]

    def __call__(self, X, Z=None):
        A = self._select(X)
        B = A if Z is None else self._select(Z)
        return self._eval(A, B)

    def _eval(self, A, B):
        raise NotImplementedError

    def __add__(self, other):
        return Sum(self, other)

    def __mul__(self, other):
        return Product(self, other)

    def params(self):
        """Scalar hyperparameters as {name: value} (leaf kernels only)."""
        return {}

    def with_params(self, **updates):
        """Clone with updated scalar hyperparameters."""
        if updates:
            raise ValueError(f"{self.tag} has no parameters {sorted(updates)}")
        return self

    def to_record(self):
        rec = {"kernel": self.tag, **self.params()}
        if self.dims is not None:
            rec["dims"] = list(self.dims)
        return rec


def _sqdist(A, B):
    a2 = np.sum(A**2, axis=1)
    b2 = np.sum(B**2, axis=1)
    return np.maximum(a2[:, None] + b2[None, :] - 2.0 * A @ B.T, 0.0)


class RBF(Kernel):
    """k(x, z) = variance * exp(-||x - z||^2 / (2 lengthscale^2))."""

    tag = "rbf"

    def __init__(self, lengthscale=1.0, variance=1.0, dims=None):
        super().__init__(dims)
        self.lengthscale = float(lengthscale)
        self.variance = float(variance)
        if self.lengthscale <= 0.0 or self.variance <= 0.0:
            raise ValueError("lengthscale and variance must be positive")

    def _eval(self, A, B):
        return self.variance * np.exp(-0.5 * _sqdist(A, B) / self.lengthscale**2)

    def params(self):
        return {"lengthscale": self.lengthscale, "variance": self.variance}

    def with_params(self, **updates):
        return RBF(dims=self.dims, **{**self.params(), **updates})


class RationalQuadratic(Kernel):
    """k(x, z) = variance * (1 + ||x - z||^2 / (2 alpha l^2))^(-alpha)."""

    tag = "rational_quadratic"

    def __init__(self, lengthscale=1.0, alpha=1.0, variance=1.0, dims=None):
        super().__init__(dims)
        self.lengthscale = float(lengthscale)
        self.alpha = float(alpha)
        self.variance = float(variance)
        if min(self.lengthscale, self.alpha, self.variance) <= 0.0:
            raise ValueError("lengthscale, alpha, and variance must be positive")

    def _eval(self, A, B):
        base = 1.0 + _sqdist(A, B) / (2.0 * self.alpha * self.lengthscale**2)
        return self.variance * base ** (-self.alpha)

    def params(self):
        return {
            "lengthscale": self.lengthscale,
            "alpha": self.alpha,
            "variance": self.variance,
        }

    def with_params(self, **updates):
        return RationalQuadratic(dims=self.dims, **{**self.params(), **updates})


class Linear(Kernel):
    """k(x, z) = variance * <x, z> + offset."""

    tag = "linear"

    def __init__(self, variance=1.0, offset=0.0, dims=None):
        super().__init__(dims)
        self.variance = float(variance)
        self.offset = float(offset)
        if self.variance <= 0.0 or self.offset < 0.0:
            raise ValueError("variance must be positive and offset non-negative")

    def _eval(self, A, B):
        return self.variance * (A @ B.T) + self.offset

    def params(self):
        return {"variance": self.variance, "offset": self.offset}

    def with_params(self, **updates):
        return Linear(dims=self.dims, **{**self.params(), **updates})


class LookupTable(Kernel):
    """Kernel over integer codes: k(x, z) = table[x[dim], z[dim]].

    The table must be symmetric positive semidefinite; inputs in the selected
    column must be integer codes in range.
    """

    tag = "lookup_table"

    def __init__(self, table, dim=0):
        super().__init__(dims=(dim,))
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise DimensionMismatch("lookup table must be square")
        scale = max(np.max(np.abs(table)), 1e-300)
        if np.max(np.abs(table - table.T)) > 1e-10 * scale:
            raise ValueError("lookup table must be symmetric")
        table = 0.5 * (table + table.T)
        w = np.linalg.eigvalsh(table)
        if np.min(w) < -1e-10 * max(np.max(w), 1e-300):
            raise NotPositiveDefinite("lookup table must be positive semidefinite")
        self.table = table

    def _eval(self, A, B):
        ia = np.rint(A[:, 0]).astype(int)
        ib = np.rint(B[:, 0]).astype(int)
        m = self.table.shape[0]
        if np.any((ia < 0) | (ia >= m)) or np.any((ib < 0) | (ib >= m)):
            raise ValueError(f"lookup codes must lie in [0, {m})")
        return self.table[np.ix_(ia, ib)]

    def to_record(self):
        return {"kernel": self.tag, "dim": self.dims[0], "table": self.table.tolist()}


class Sum(Kernel):
    """Elementwise sum of component kernels."""

    tag = "sum"

    def __init__(self, *terms):
        super().__init__(None)
        self.terms = tuple(terms)
        if len(self.terms) < 2:
            raise ValueError("sum kernel needs at least two terms")

    def __call__(self, X, Z=None):
        out = self.terms[0](X, Z)
        for term in self.terms[1:]:
            out = out + term(X, Z)
        return out

    def to_record(self):
        return {"kernel": "sum", "terms": [t.to_record() for t in self.terms]}


class Product(Kernel):
    """Elementwise product of component kernels."""

    tag = "product"

    def __init__(self, *terms):
        super().__init__(None)
        self.terms = tuple(terms)
        if len(self.terms) < 2:
            raise ValueError("product kernel needs at least two terms")

    def __call__(self, X, Z=None):
        out = self.terms[0](X, Z)
        for term in self.terms[1:]:
            out = out * term(X, Z)
        return out

    def to_record(self):
        return {"kernel": "product", "terms": [t.to_record() for t in self.terms]}


def kernel_matrix(kernel, X, Z=None):
    """Gram matrix k(X, Z); Z defaults to X."""
    return kernel(X, Z)


def median_lengthscale(X):
    """Median pairwise distance, the documented default RBF lengthscale."""
    X = _as_inputs(X)
    if X.shape[0] < 2:
        return 1.0
    d2 = _sqdist(X, X)
    vals = np.sqrt(d2[np.triu_indices(X.shape[0], k=1)])
    med = float(np.median(vals))
    return med if med > 0.0 else 1.0


# ---------------------------------------------------------------------------
# GP fit / predict / sample


def _coerce_noise(sigma, n):
    """Accept scalar, (n,) variances, (n, n) covariance, or block list."""
    if isinstance(sigma, (list, tuple)) and len(sigma) and np.ndim(sigma[0]) == 2:
        blocks = [np.asarray(b, dtype=float) for b in sigma]
        total = sum(b.shape[0] for b in blocks)
        if total != n or any(b.shape[0] != b.shape[1] for b in blocks):
            raise DimensionMismatch("noise blocks must be square and cover n rows")
        out = np.zeros((n, n))
        at = 0
        for b in blocks:
            out[at : at + b.shape[0], at : at + b.shape[0]] = b
            at += b.shape[0]
        return out
    arr = np.asarray(sigma, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (n, n):
            raise DimensionMismatch(f"noise covariance must be ({n}, {n})")
        scale = max(np.max(np.abs(arr)), 1e-300)
        if np.max(np.abs(arr - arr.T)) > 1e-9 * scale:
            raise ValueError("noise covariance must be symmetric")
        return 0.5 * (arr + arr.T)
    arr = np.broadcast_to(arr, (n,)).astype(float)
    if np.any(arr < 0.0):
        raise ValueError("observation noise variances must be non-negative")
    return np.diag(arr)


class GPModel:
    """Fitted GP state; immutable after fit."""

    def __init__(self, kernel, X, mu, noise, mean, jitter, state):
        self.kernel = kernel
        self.X = X
        self.mu = mu
        self.noise = noise
        self.mean = mean
        self.jitter = jitter
        self._state = state

    @property
    def n(self):
        return self.X.shape[0]

    def mean_at(self, X):
        X = _as_inputs(X)
        if callable(self.mean):
            return np.broadcast_to(np.asarray(self.mean(X), dtype=float), (X.shape[0],)).copy()
        return np.full(X.shape[0], float(self.mean))

    @property
    def chol(self):
        """Cached lower factor of K_XX + Sigma_X (+ recorded jitter)."""
        return self._state.get("L")

    def __repr__(self):
        return f"GPModel(n={self.n}, jitter={self.jitter:g})"


def gp_fit(kernel, X, mu, sigma, mean=0.0):
    """Fit a GP to Gaussian pseudo-observations.

    Args:
        kernel: covariance function.
        X: inputs, (n,) or (n, d).
        mu: observed latent means, (n,).
        sigma: observation noise, used in training only. Scalar, per-point
            variances (n,), dense covariance (n, n), or a list of square
            blocks laid out along the diagonal.
        mean: constant prior mean, or a callable X -> (n,).

    An empty dataset returns the prior. Refitting identical inputs is
    bit-identical; the Cholesky jitter actually used is recorded on the
    model.
    """
    X = _as_inputs(X) if np.size(X) else np.zeros((0, 1))
    mu = np.atleast_1d(np.asarray(mu, dtype=float)) if np.size(mu) else np.zeros(0)
    n = X.shape[0]
    if mu.shape != (n,):
        raise DimensionMismatch(f"mu must have shape ({n},)")
    noise = _coerce_noise(sigma, n) if n else np.zeros((0, 0))
    if n == 0:
        return GPModel(kernel, X, mu, noise, mean, 0.0, {})
    K = kernel(X, X)
    L, jitter = chol_with_jitter(K + noise)
    prior = mean(X) if callable(mean) else np.full(n, float(mean))
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, mu - prior))
    return GPModel(kernel, X, mu, noise, mean, jitter, {"L": L, "alpha": alpha})


def gp_predict(model, Xstar, want_cov=False):
    """Posterior of the noise-free latent function at new inputs.

    Returns (mean, variances), or (mean, covariance) with want_cov. The
    heteroskedastic noise entered the training factor only; nothing is added
    at query points.
    """
    Xs = _as_inputs(Xstar)
    kernel = model.kernel
    mean = model.mean_at(Xs)
    if model.n == 0:
        cov = kernel(Xs, Xs)
        if want_cov:
            return mean, 0.5 * (cov + cov.T)
        return mean, np.maximum(np.diag(cov).copy(), 0.0)
    ks = kernel(Xs, model.X)
    mean = mean + ks @ model._state["alpha"]
    v = np.linalg.solve(model._state["L"], ks.T)
    if want_cov:
        cov = kernel(Xs, Xs) - v.T @ v
        return mean, 0.5 * (cov + cov.T)
    var = np.diag(kernel(Xs, Xs)) - np.sum(v**2, axis=0)
    return mean, np.maximum(var, 0.0)


def _psd_root(cov):
    # eigh-based root: exact zeros stay exact, unlike a jittered Cholesky
    w, U = np.linalg.eigh(0.5 * (cov + cov.T))
    return U * np.sqrt(np.maximum(w, 0.0))


def gp_sample(model, Xstar, seed=0, count=1):
    """Joint posterior draws at Xstar, shape (count, m); seeded."""
    mean, cov = gp_predict(model, Xstar, want_cov=True)
    root = _psd_root(cov)
    rng = np.random.default_rng(seed)
    return mean + rng.standard_normal((count, mean.size)) @ root.T


def log_marginal_likelihood(kernel, X, mu, sigma, mean=0.0):
    """Gaussian log evidence of pseudo-observations under the GP prior."""
    X = _as_inputs(X)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = X.shape[0]
    noise = _coerce_noise(sigma, n)
    L, _ = chol_with_jitter(kernel(X, X) + noise)
    prior = mean(X) if callable(mean) else np.full(n, float(mean))
    resid = mu - prior
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, resid))
    return float(
        -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi)
    )


# ---------------------------------------------------------------------------
# inducing sets


class InducingSet:
    """Cluster centers with one folded pseudo-likelihood per cluster."""

    def __init__(self, centers, params, gauss, assignments, seed, iterations):
        self.centers = centers
        self.params = tuple(params)
        self.gauss = tuple(gauss)
        self.assignments = assignments
        self.seed = seed
        self.iterations = iterations

    @property
    def k(self):
        return self.centers.shape[0]

    def __repr__(self):
        return f"InducingSet(k={self.k}, d={self.centers.shape[1]})"


def kmeanspp(X, k, seed=0, max_iter=100):
    """k-means++ seeding plus Lloyd iterations (capped).

    An empty cluster is re-seeded at the point farthest from all centers;
    after five failed repair attempts EmptyCluster is raised. Returns
    (centers, assignments, iterations).
    """
    X = _as_inputs(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(np.sum(d2))
        if total <= 0.0:
            centers[j] = X[rng.integers(n)]
        else:
            centers[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))

    assign = None
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        new_assign = np.argmin(_sqdist(X, centers), axis=1)
        for _ in range(5):
            empty = [j for j in range(k) if not np.any(new_assign == j)]
            if not empty:
                break
            for j in empty:
                far = int(np.argmax(np.min(_sqdist(X, centers), axis=1)))
                centers[j] = X[far]
            new_assign = np.argmin(_sqdist(X, centers), axis=1)
        else:
            raise EmptyCluster("could not repair empty clusters after 5 attempts")
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centers[j] = np.mean(X[assign == j], axis=0)
    return centers, assign, iterations


_DEFAULT_BASIS = {
    "beta": "logit",
    "gamma": "log",
    "dirichlet": "softmax_inverse",
    "inverse_wishart": "matrix_log",
}


def _resolve_basis(family, basis, Y):
    if basis is None:
        basis = _DEFAULT_BASIS.get(family)
        if basis is None:
            raise NonConjugatePair(f"no conjugate observation model for family {family!r}")
    if isinstance(basis, transforms.BasisTransform):
        return basis
    if basis == "softmax_inverse":
        return transforms.softmax_inverse(Y.shape[-1])
    if basis == "matrix_log":
        return transforms.matrix_log(Y.shape[-1])
    if basis == "matrix_sqrt":
        return transforms.matrix_sqrt(Y.shape[-1])
    return transforms.BasisTransform(basis)


def build_inducing_set(data, k, family, seed=0, epsilon_a=None, basis=None,
                       dirichlet_prior=1.0, max_iter=100):
    """Conjugacy-based inducing summary of an observation batch.

    k-means++ (fixed seed, 100-iteration cap) partitions the inputs; each
    cluster's member observations are folded through conjugate_update on an
    epsilon_a pseudo-prior, and the folded parameters are bridged to a
    Gaussian. With k equal to the number of distinct inputs every cluster is
    a singleton, so the result carries exactly the per-point
    pseudo-likelihoods of the non-inducing pipeline.

    Args:
        data: object with .X inputs and .Y observations, or an (X, Y) pair.
        k: cluster count, 1 <= k <= n.
        family: conjugate family tag (beta, gamma, dirichlet,
            inverse_wishart).
        seed: k-means seed.
        epsilon_a: pseudo-prior weight (default DEFAULT_EPSILON_A).
        basis: bridge basis (defaults per family: logit, log,
            softmax_inverse, matrix_log).
        dirichlet_prior: per-category Dirichlet pseudo-count.
    """
    X, Y = (data.X, data.Y) if hasattr(data, "X") else data
    X = _as_inputs(X)
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != X.shape[0]:
        raise DimensionMismatch("inputs and observations must align")
    eps = distributions.DEFAULT_EPSILON_A if epsilon_a is None else float(epsilon_a)
    prior = distributions.pseudo_prior(
        family,
        eps,
        K=Y.shape[-1] if family == "dirichlet" else None,
        p=Y.shape[-1] if family == "inverse_wishart" else None,
        dirichlet_prior=dirichlet_prior,
    )
    b = _resolve_basis(family, basis, Y)
    centers, assign, iterations = kmeanspp(X, k, seed=seed, max_iter=max_iter)
    params = []
    gauss = []
    for j in range(k):
        members = np.flatnonzero(assign == j)
        if family == "dirichlet":
            # the observation model takes one count vector; members sum
            theta = distributions.conjugate_update(prior, Y[members].sum(axis=0))
        else:
            theta = distributions.conjugate_update(prior, Y[members])
        params.append(theta)
        gauss.append(bridges.lm_forward(theta, b))
    return InducingSet(centers, params, gauss, assign, seed, iterations)


# ---------------------------------------------------------------------------
# hyperparameter search


def _leaves(kernel):
    if isinstance(kernel, (Sum, Product)):
        out = []
        for term in kernel.terms:
            out.extend(_leaves(term))
        return out
    return [kernel]


def _rebuild(kernel, leaf_index, new_leaf, counter=None):
    counter = counter if counter is not None else [0]
    if isinstance(kernel, (Sum, Product)):
        return type(kernel)(
            *[_rebuild(t, leaf_index, new_leaf, counter) for t in kernel.terms]
        )
    idx = counter[0]
    counter[0] += 1
    return new_leaf if idx == leaf_index else kernel


def optimize_hyperparams(kernel, X, mu, sigma, mean=0.0, rounds=2,
                         grid=(0.25, 0.5, 1.0, 2.0, 4.0)):
    """Gradient-free coordinate search over leaf scalar hyperparameters.

    Each round tries multiplicative factors per parameter and keeps the log
    marginal likelihood argmax; the factor grid contracts between rounds.
    A calibration utility only; no pipeline calls it.
    """
    best = log_marginal_likelihood(kernel, X, mu, sigma, mean=mean)
    factors = np.asarray(grid, dtype=float)
    for _ in range(rounds):
        for leaf_idx, leaf in enumerate(_leaves(kernel)):
            for name, value in leaf.params().items():
                if value == 0.0:
                    continue
                for f in factors:
                    if f == 1.0:
                        continue
                    try:
                        cand_leaf = leaf.with_params(**{name: value * f})
                        cand = _rebuild(kernel, leaf_idx, cand_leaf)
                        lml = log_marginal_likelihood(cand, X, mu, sigma, mean=mean)
                    except (ValueError, NotPositiveDefinite):
                        continue
                    if lml > best:
                        best = lml
                        kernel = cand
        factors = np.sqrt(factors)
    return kernel, best
