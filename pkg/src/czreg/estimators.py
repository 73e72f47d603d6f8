"""Estimator-style wrappers with ``fit`` / ``transform`` / ``predict``.

The wrappers hold configuration only in their constructor arguments, so
``get_params`` / ``set_params`` and ``sklearn.base.clone`` work as usual.
Fitted state ends with an underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_degree, check_p, check_phi, check_points, check_radii, check_sampled
from .exceptions import DomainError
from .jet_extract import extract_jet
from .lp_approx import PolyJet, multi_indices
from .oscillation import DELTA, TAU, batch_membership, default_radii
from .whitney import JetField, extend


def _require(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class PointwiseRegularity(BaseEstimator):
    """Membership of a sampled function in the weighted oscillation spaces.

    Parameters
    ----------
    p : float or "inf"
    phi : str or BoydExpr
        Weight, e.g. ``"t^0.5 * L2^0.5"``.
    degree : int
        Hypothesis degree ``n`` (big-O side).
    t_degree : int, optional
        Degree of the little-o side; ``degree + 1`` by default.
    policy : {"per-ball", "fixed-jet"}
    radii_levels : int
        Number of dyadic radii below a quarter of the window.
    delta, tau : float
        Little-o thresholds.
    n_jobs : int, optional
        Worker threads for batches.

    Examples
    --------
    >>> from czreg.signals import generate
    >>> est = PointwiseRegularity(p="inf", phi="t^0.6", degree=0, t_degree=0)
    >>> est.fit(generate("cusp", u=0.6, n=4097)).predict([0.0, 0.3]).tolist()
    ['fail', 'pass']
    """

    def __init__(self, p=2.0, phi="t^0.5", degree=0, t_degree=None, policy="per-ball",
                 radii_levels=12, delta=DELTA, tau=TAU, n_jobs=None):
        self.p = p
        self.phi = phi
        self.degree = degree
        self.t_degree = t_degree
        self.policy = policy
        self.radii_levels = radii_levels
        self.delta = delta
        self.tau = tau
        self.n_jobs = n_jobs

    def fit(self, f, y=None):
        self.f_ = check_sampled(f)
        self.p_ = check_p(self.p)
        self.phi_ = check_phi(self.phi)
        self.degree_ = check_degree(self.degree)
        self.radii_ = check_radii(default_radii(f, levels=int(self.radii_levels)))
        return self

    def reports(self, X, jets=None):
        """Full :class:`~czreg.oscillation.BatchResult` at the points ``X``."""
        _require(self, "f_")
        pts = check_points(X, self.f_.dim)
        return batch_membership(
            self.f_, pts, self.p_, self.phi_, self.degree_, self.radii_, self.policy,
            self.t_degree, jets, self.delta, self.tau, n_jobs=self.n_jobs,
        )

    def transform(self, X):
        """Ratio curves ``rho(r)`` of the little-o side, shape ``(m, len(radii_))``.

        Rows follow the sorted order of the points.
        """
        res = self.reports(X)
        out = np.full((len(res.reports), len(self.radii_)), np.nan)
        for i, rep in enumerate(res.reports):
            if rep.ratios:
                out[i] = [q for _, q in rep.ratios]
        return out

    def predict(self, X):
        """Little-o verdicts in the order of ``X``."""
        pts = check_points(X, 1 if not hasattr(self, "f_") else self.f_.dim)
        res = self.reports(pts)
        lookup = {tuple(r.point): r.verdict_t for r in res.reports}
        return np.array([lookup[tuple(pt.tolist())] for pt in pts], dtype=object)


class JetExtractor(BaseEstimator):
    """Jets from mollified derivatives.

    ``transform`` returns coefficients ``D^alpha f(x) / alpha!`` in graded
    order; ``predict`` returns the jets' values at their own centres.
    """

    def __init__(self, degree=1, epsilons=None, phi=None, correct=True, extrapolate=True):
        self.degree = degree
        self.epsilons = epsilons
        self.phi = phi
        self.correct = correct
        self.extrapolate = extrapolate

    def fit(self, f, y=None):
        self.f_ = check_sampled(f)
        self.degree_ = check_degree(self.degree)
        self.indices_ = multi_indices(f.dim, self.degree_)
        return self

    def extract(self, X):
        """List of :class:`~czreg.jet_extract.JetExtraction`, one per point."""
        _require(self, "f_")
        pts = check_points(X, self.f_.dim)
        return [
            extract_jet(self.f_, pt if self.f_.dim > 1 else float(pt[0]), self.degree_,
                        self.epsilons, self.phi, self.correct, self.extrapolate)
            for pt in pts
        ]

    def transform(self, X):
        return np.stack([e.jet.coeffs for e in self.extract(X)])

    def predict(self, X):
        return self.transform(X)[:, 0]


class WhitneyExtender(BaseEstimator):
    """Whitney extension of a one-dimensional jet field.

    ``fit(X, y)`` takes points ``X`` (strictly increasing) and Taylor
    coefficients ``y`` of shape ``(m, n + 1)`` with ``y[i, k] = D^k P_i(x_i) / k!``.

    Examples
    --------
    >>> import numpy as np
    >>> x = np.array([0.0, 1.0])
    >>> WhitneyExtender(phi="t^0.5").fit(x, [[0.0], [1.0]]).predict([0.0, 1.0]).tolist()
    [0.0, 1.0]
    """

    def __init__(self, phi="t^1", bound=1.0, margin=1.0, min_length=None, cap=None):
        self.phi = phi
        self.bound = bound
        self.margin = margin
        self.min_length = min_length
        self.cap = cap

    def fit(self, X, y):
        x = check_points(X, 1)[:, 0]
        coeffs = np.asarray(y, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != len(x):
            raise DomainError("X and y differ in length")
        n = coeffs.shape[1] - 1
        jets = [PolyJet((xi,), n, c) for xi, c in zip(x, coeffs)]
        self.field_ = JetField(x, jets, self.phi, self.bound)
        self.extension_ = extend(self.field_, self.margin, self.min_length, self.cap)
        return self

    def predict(self, X, deriv=0):
        _require(self, "extension_")
        x = check_points(X, 1)[:, 0]
        return np.asarray(self.extension_(x, int(deriv)))

    def transform(self, X):
        """Derivatives ``F, F', ..., F^(n)`` as columns."""
        _require(self, "extension_")
        x = check_points(X, 1)[:, 0]
        return np.stack(self.extension_.derivatives(x), axis=1)
