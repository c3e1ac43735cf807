"""Survey-weighted Bernoulli/Binomial logistic regression with a linear block
and a random-feature block, fit by latent-variable Gibbs sampling or by
mean-field variational Bayes.

Model, for sampled unit i with scaled weight w_i and trial count n_i:

    z_i | theta  ~  Bin(n_i, p_i)^{w_i}          (weighted pseudo-likelihood)
    logit(p_i)   =  x_i' beta + g_i' eta
    beta         ~  N(0, sigma2_beta I_p)
    eta | s2     ~  N(0, s2 I_h),   s2 ~ InvGamma(a, b)

Both fitters exploit the latent-variable identity that renders the logistic
pseudo-likelihood conditionally Gaussian: omega_i | psi_i ~ PG(w_i n_i, psi_i)
and theta | omega is Gaussian with precision C' diag(omega) C + D^{-1} and
mean solving against C' kappa, kappa_i = w_i (z_i - n_i / 2), C = [X G].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import digamma, gammaln

from .errors import NumericalError, ValidationError
from .polya_gamma import pg_mean, pg_sample

__all__ = [
    "BudisSpec",
    "DesignData",
    "GibbsFit",
    "VbFit",
    "scale_weights",
    "make_design",
    "gibbs_fit",
    "vb_fit",
    "predict_proba",
]


def scale_weights(w):
    """Scale survey weights to sum to the sample size: w_i * n / sum(w).

    Scale-invariant (c * w gives the same result for any c > 0); rejects any
    nonpositive weight.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValidationError("weights must be a 1-d array")
    if w.size == 0:
        return w.copy()
    if not np.all(w > 0.0):
        raise ValidationError("survey weights must be strictly positive")
    return w * (w.size / w.sum())


@dataclass(frozen=True)
class BudisSpec:
    """Prior and fitting hyperparameters.

    Defaults are the vague choices used throughout: sigma2_beta = 1000 and
    InvGamma(0.5, 0.5) on the random-feature block variance.
    """

    sigma2_beta: float = 1000.0
    ig_shape: float = 0.5
    ig_rate: float = 0.5
    gibbs_iterations: int = 2000
    gibbs_burn_in: int = 1000
    gibbs_thin: int = 1
    vb_max_iter: int = 500
    vb_tol: float = 1e-6

    def __post_init__(self):
        if self.sigma2_beta <= 0 or self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValidationError("sigma2_beta, ig_shape and ig_rate must be positive")
        if self.gibbs_burn_in < 0 or self.gibbs_burn_in >= self.gibbs_iterations:
            raise ValidationError("gibbs_burn_in must lie in [0, gibbs_iterations)")
        if self.gibbs_thin < 1:
            raise ValidationError("gibbs_thin must be at least 1")
        if self.vb_max_iter < 1 or self.vb_tol <= 0:
            raise ValidationError("vb_max_iter must be >= 1 and vb_tol positive")


@dataclass(frozen=True)
class DesignData:
    """Validated design for one fit.

    X: (n, p) linear covariates; G: (n, h) random-feature block with entries
    strictly inside (0, 1); z: response counts; n_trials: per-unit trial
    counts; w_tilde: survey weights scaled to sum to n.
    """

    X: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    n_trials: np.ndarray = field(repr=False)
    w_tilde: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.G.ndim != 2 or self.G.shape[0] != n:
            raise ValidationError("X and G must be 2-d with the same number of rows")
        for name, arr in (("z", self.z), ("n_trials", self.n_trials), ("w_tilde", self.w_tilde)):
            if arr.shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},)")
        if n:
            if not np.all(self.w_tilde > 0):
                raise ValidationError("scaled weights must be positive")
            if abs(self.w_tilde.sum() - n) > 1e-8:
                raise ValidationError("scaled weights must sum to the sample size")
            if np.any(self.z < 0) or np.any(self.z > self.n_trials):
                raise ValidationError("responses must lie in [0, n_trials]")
            if self.G.size and (self.G.min() <= 0.0 or self.G.max() >= 1.0):
                raise ValidationError("random-feature values must lie strictly in (0, 1)")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def h(self):
        return self.G.shape[1]


def make_design(X, G=None, z=None, weights=None, n_trials=None):
    """Assemble a DesignData, scaling raw weights (None means unweighted)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if G is None:
        G = np.zeros((n, 0))
    G = np.asarray(G, dtype=np.float64)
    if G.ndim == 1:
        G = G.reshape(n, -1)
    z = np.zeros(n) if z is None else np.asarray(z, dtype=np.float64)
    if n_trials is None:
        n_trials = np.ones(n)
    else:
        n_trials = np.asarray(n_trials, dtype=np.float64)
    w_tilde = np.ones(n) if weights is None else scale_weights(weights)
    return DesignData(X=X, G=G, z=z, n_trials=n_trials, w_tilde=w_tilde)


@dataclass(frozen=True)
class GibbsFit:
    """Retained posterior draws: beta (n_kept, p), eta (n_kept, h), sigma2_eta (n_kept,)."""

    beta: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    sigma2_eta: np.ndarray = field(repr=False)

    @property
    def kind(self):
        return "gibbs"

    @property
    def p(self):
        return self.beta.shape[1]

    @property
    def h(self):
        return self.eta.shape[1]

    @property
    def n_draws(self):
        return self.beta.shape[0]

    def theta_draws(self, n_draws=None):
        """(D, p + h) coefficient draws; evenly spaced subsample if n_draws given."""
        theta = np.hstack([self.beta, self.eta])
        if n_draws is None or n_draws >= self.n_draws:
            return theta
        idx = np.linspace(0, self.n_draws - 1, n_draws).round().astype(int)
        return theta[idx]


@dataclass(frozen=True)
class VbFit:
    """Gaussian factor over (beta, eta) plus an inverse-gamma factor over
    the feature-block variance, with the ELBO trace of the coordinate ascent."""

    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    n_linear: int
    ig_shape: float
    ig_rate: float
    elbo_trace: np.ndarray = field(repr=False)

    @property
    def kind(self):
        return "vb"

    @property
    def p(self):
        return self.n_linear

    @property
    def h(self):
        return self.mean.shape[0] - self.n_linear

    def theta_draws(self, n_draws, rng):
        """Sample (n_draws, p + h) coefficients from the Gaussian factor."""
        chol = np.linalg.cholesky(self.cov)
        noise = rng.standard_normal((n_draws, self.mean.shape[0]))
        return self.mean + noise @ chol.T


def _check_rank(C):
    if C.shape[0] == 0 or C.shape[1] == 0:
        return
    rank = np.linalg.matrix_rank(C)
    if rank < min(C.shape):
        raise NumericalError(
            "design matrix [X G] is rank deficient (collinear columns); "
            "remove redundant covariates rather than relying on the prior"
        )


def _prior_precision_diag(p, h, sigma2_beta, inv_sigma2_eta):
    d = np.empty(p + h)
    d[:p] = 1.0 / sigma2_beta
    d[p:] = inv_sigma2_eta
    return d


def _gaussian_block(C, weights_diag, prior_diag, Ck):
    """Cholesky of Q = C' diag(w) C + diag(prior) and the solved mean."""
    d = C.shape[1]
    Q = (C.T * weights_diag) @ C if C.shape[0] else np.zeros((d, d))
    Q[np.diag_indices(d)] += prior_diag
    try:
        L = cholesky(Q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"non-positive-definite precision matrix: {exc}") from None
    mean = cho_solve((L, True), Ck)
    return L, mean


def gibbs_fit(data, spec, rng):
    """Blocked Gibbs sampler for the weighted pseudo-posterior.

    Each cycle draws the latent omega_i ~ PG(w_i n_i, psi_i), then the full
    coefficient vector theta = (beta, eta) in one Gaussian block, then the
    feature-block variance from its conjugate inverse-gamma conditional
    IG(a + h/2, b + eta'eta / 2).  Draws after burn-in are retained at the
    requested thinning.
    """
    n, p, h = data.n, data.p, data.h
    d = p + h
    C = np.hstack([data.X, data.G])
    _check_rank(C)
    b_pg = data.w_tilde * data.n_trials
    kappa = data.w_tilde * (data.z - 0.5 * data.n_trials)
    Ck = C.T @ kappa if n else np.zeros(d)

    theta = np.zeros(d)
    sigma2_eta = spec.ig_rate / (spec.ig_shape + 1.0)  # prior mode
    n_kept = len(range(spec.gibbs_burn_in, spec.gibbs_iterations, spec.gibbs_thin))
    beta_out = np.empty((n_kept, p))
    eta_out = np.empty((n_kept, h))
    sigma2_out = np.empty(n_kept)

    kept = 0
    for it in range(spec.gibbs_iterations):
        if n:
            psi = C @ theta
            omega = pg_sample(b_pg, psi, rng)
        else:
            omega = np.zeros(0)
        prior_diag = _prior_precision_diag(p, h, spec.sigma2_beta, 1.0 / sigma2_eta)
        L, mean = _gaussian_block(C, omega, prior_diag, Ck)
        theta = mean + solve_triangular(L, rng.standard_normal(d), lower=True, trans="T")
        eta = theta[p:]
        shape = spec.ig_shape + 0.5 * h
        rate = spec.ig_rate + 0.5 * float(eta @ eta)
        sigma2_eta = rate / rng.gamma(shape=shape, scale=1.0)
        if it >= spec.gibbs_burn_in and (it - spec.gibbs_burn_in) % spec.gibbs_thin == 0:
            beta_out[kept] = theta[:p]
            eta_out[kept] = eta
            sigma2_out[kept] = sigma2_eta
            kept += 1
    return GibbsFit(beta=beta_out[:kept], eta=eta_out[:kept], sigma2_eta=sigma2_out[:kept])


def _log1p_exp_neg(x):
    """log(1 + exp(-x)) for x >= 0, without overflow."""
    return np.log1p(np.exp(-x))


def vb_fit(data, spec):
    """Mean-field coordinate ascent for the weighted pseudo-posterior.

    Factors: q(theta) Gaussian (full covariance across beta and eta),
    q(omega_i) the tilted latent distribution with tilt c_i = sqrt(E[psi_i^2])
    entering only through E[omega_i] = (w_i n_i / (2 c_i)) tanh(c_i / 2),
    and q(s2) inverse-gamma.  The ELBO is computed after every sweep and must
    be non-decreasing: a drop beyond 1e-6 raises NumericalError since exact
    conjugate updates cannot lower the bound.
    """
    n, p, h = data.n, data.p, data.h
    d = p + h
    C = np.hstack([data.X, data.G])
    _check_rank(C)
    b_pg = data.w_tilde * data.n_trials
    kappa = data.w_tilde * (data.z - 0.5 * data.n_trials)
    Ck = C.T @ kappa if n else np.zeros(d)

    a_q = spec.ig_shape + 0.5 * h
    b_q = spec.ig_rate * (a_q / spec.ig_shape)  # keeps E[1/s2] at its prior value initially
    mean = np.zeros(d)
    cov = np.diag(_prior_precision_diag(p, h, spec.sigma2_beta, a_q / b_q) ** -1)

    elbo_trace = []
    for _ in range(spec.vb_max_iter):
        # q(omega): tilt at the root mean square of the linear predictor.
        if n:
            m_psi = C @ mean
            var_psi = np.einsum("ij,jk,ik->i", C, cov, C)
            c_tilt = np.sqrt(m_psi * m_psi + var_psi)
            e_omega = pg_mean(b_pg, c_tilt)
        else:
            c_tilt = np.zeros(0)
            e_omega = np.zeros(0)

        # q(theta): Gaussian block given E[omega] and E[1/s2].
        prior_diag = _prior_precision_diag(p, h, spec.sigma2_beta, a_q / b_q)
        L, mean = _gaussian_block(C, e_omega, prior_diag, Ck)
        cov = cho_solve((L, True), np.eye(d))

        # q(s2): conjugate inverse-gamma given E[eta'eta].
        e_eta_sq = float(mean[p:] @ mean[p:]) + float(np.trace(cov[p:, p:]))
        b_q = spec.ig_rate + 0.5 * e_eta_sq

        elbo = _vb_elbo(data, spec, C, b_pg, kappa, mean, cov, L, c_tilt, e_omega, a_q, b_q)
        if elbo_trace and elbo < elbo_trace[-1] - 1e-6:
            raise NumericalError(
                f"ELBO decreased from {elbo_trace[-1]:.9g} to {elbo:.9g}; "
                "coordinate ascent must be non-decreasing"
            )
        converged = bool(elbo_trace) and abs(elbo - elbo_trace[-1]) < spec.vb_tol
        elbo_trace.append(elbo)
        if converged:
            break
    return VbFit(
        mean=mean,
        cov=cov,
        n_linear=p,
        ig_shape=a_q,
        ig_rate=b_q,
        elbo_trace=np.array(elbo_trace),
    )


def _vb_elbo(data, spec, C, b_pg, kappa, mean, cov, L, c_tilt, e_omega, a_q, b_q):
    p, h, d = data.p, data.h, data.p + data.h
    a0, b0 = spec.ig_shape, spec.ig_rate

    if data.n:
        m_psi = C @ mean
        second = m_psi * m_psi + np.einsum("ij,jk,ik->i", C, cov, C)
        # E[log pseudo-likelihood] under the tilted latent factor; the
        # log(2 cosh(c/2)) term is evaluated as |c|/2 + log(1 + exp(-|c|)).
        e_ll = float(
            np.sum(
                kappa * m_psi
                - 0.5 * e_omega * (second - c_tilt * c_tilt)
                - b_pg * (0.5 * c_tilt + _log1p_exp_neg(c_tilt))
            )
        )
    else:
        e_ll = 0.0

    e_log_s2 = np.log(b_q) - digamma(a_q)
    e_inv_s2 = a_q / b_q
    e_beta_sq = float(mean[:p] @ mean[:p]) + float(np.trace(cov[:p, :p]))
    e_eta_sq = float(mean[p:] @ mean[p:]) + float(np.trace(cov[p:, p:]))

    prior_theta = (
        -0.5 * p * np.log(2.0 * np.pi * spec.sigma2_beta)
        - 0.5 * e_beta_sq / spec.sigma2_beta
        - 0.5 * h * (np.log(2.0 * np.pi) + e_log_s2)
        - 0.5 * e_inv_s2 * e_eta_sq
    )
    prior_s2 = a0 * np.log(b0) - gammaln(a0) - (a0 + 1.0) * e_log_s2 - b0 * e_inv_s2
    # Entropies: Gaussian via -log det of the precision Cholesky, inverse-gamma in closed form.
    ent_theta = 0.5 * d * (1.0 + np.log(2.0 * np.pi)) - float(np.sum(np.log(np.diag(L))))
    ent_s2 = a_q + np.log(b_q) + gammaln(a_q) - (1.0 + a_q) * digamma(a_q)
    return e_ll + prior_theta + prior_s2 + ent_theta + ent_s2


def predict_proba(fit, x, g, draw=None, rng=None):
    """Success probability sigmoid(x'beta + g'eta) under one posterior draw.

    For a Gibbs fit pass ``draw`` (the retained draw index); for a VB fit pass
    ``rng`` to sample a coefficient vector from the Gaussian factor.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape[-1] != fit.p or g.shape[-1] != fit.h:
        raise ValidationError(
            f"covariate dimensions ({x.shape[-1]}, {g.shape[-1]}) do not match "
            f"fit ({fit.p}, {fit.h})"
        )
    if fit.kind == "gibbs":
        if draw is None:
            raise ValidationError("a Gibbs fit requires a draw index")
        beta, eta = fit.beta[draw], fit.eta[draw]
    else:
        if rng is None:
            raise ValidationError("a VB fit requires an rng to sample the factor")
        theta = fit.theta_draws(1, rng)[0]
        beta, eta = theta[: fit.p], theta[fit.p:]
    lin = float(x @ beta + g @ eta)
    return 1.0 / (1.0 + np.exp(-lin))
